from typing import Dict

from metrics.BaseMetric import BaseMetric


class F1Metric(BaseMetric):
    """Harmonic mean of the macro-averaged P and R at the same K"""

    name = "F1"
    derived = True

    def derive(self, summary: Dict[str, float]) -> float:
        p, r = summary["P"], summary["R"]
        return 2.0 * p * r / (p + r) if p + r > 0 else 0.0
