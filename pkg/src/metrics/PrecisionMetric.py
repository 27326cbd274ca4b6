import numpy as np

from metrics.BaseMetric import BaseMetric


class PrecisionMetric(BaseMetric):
    """Fraction of the top-K list that is relevant"""

    name = "P"

    def per_user(self, hits: np.ndarray, n_relevant: int, k: int) -> float:
        return float(np.count_nonzero(hits[:k])) / k
