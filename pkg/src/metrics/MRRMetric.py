import numpy as np

from metrics.BaseMetric import BaseMetric


class MRRMetric(BaseMetric):
    """1/rank of the first relevant item, 0 when none appears in the top K"""

    name = "MRR"

    def per_user(self, hits: np.ndarray, n_relevant: int, k: int) -> float:
        first = np.flatnonzero(hits[:k])
        return 1.0 / (first[0] + 1) if len(first) else 0.0
