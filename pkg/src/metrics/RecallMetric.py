import numpy as np

from metrics.BaseMetric import BaseMetric


class RecallMetric(BaseMetric):
    """
    Retrieved relevant items over K.
    With standard=True the denominator is |T(u)| instead.
    """

    name = "R"

    def __init__(self, standard: bool = False):
        self.standard = standard

    def per_user(self, hits: np.ndarray, n_relevant: int, k: int) -> float:
        denominator = n_relevant if self.standard else k
        return float(np.count_nonzero(hits[:k])) / denominator
