import numpy as np

from metrics.BaseMetric import BaseMetric


class NDCGMetric(BaseMetric):
    """DCG@K over the ideal DCG truncated at min(K, |T(u)|)"""

    name = "nDCG"

    def per_user(self, hits: np.ndarray, n_relevant: int, k: int) -> float:
        hits = hits[:k]
        discounts = 1.0 / np.log2(np.arange(2, len(hits) + 2))
        dcg = float(discounts[hits].sum())
        ideal = float((1.0 / np.log2(np.arange(2, min(k, n_relevant) + 2))).sum())
        return dcg / ideal
