from typing import Dict

import numpy as np


class BaseMetric:
    """Base class for all ranking metrics"""

    name = ""
    # derived metrics are computed from other macro-averaged values
    derived = False

    def per_user(self, hits: np.ndarray, n_relevant: int, k: int) -> float:
        """hits[r] is True when the item at rank r+1 of the top-K list is relevant"""
        raise NotImplementedError

    def derive(self, summary: Dict[str, float]) -> float:
        raise NotImplementedError
