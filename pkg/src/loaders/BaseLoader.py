from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from HypergraphCore import InteractionRecord


class DataSource(Enum):
    TSV = "tsv"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Dataset:
    """Raw inputs of one run, still keyed by external ids"""

    records: Tuple[InteractionRecord, ...]
    category_pairs: Tuple[Tuple[str, str], ...]
    aux: Dict[str, Tuple[float, ...]] = field(default_factory=dict)
    planted_labels: Dict[str, int] = field(default_factory=dict)
    densified: int = 0

    def aux_matrix(self, user_ids: Sequence[str]) -> Optional[np.ndarray]:
        """Rows aligned to user ordinals; users without a row get zeros"""
        if not self.aux:
            return None
        width = len(next(iter(self.aux.values())))
        matrix = np.zeros((len(user_ids), width), dtype=np.float64)
        for row, user in enumerate(user_ids):
            if user in self.aux:
                matrix[row] = self.aux[user]
        return matrix


class BaseLoader:
    """Base class for all data loaders"""

    def load(self, cfg, seed: int) -> Dataset:
        raise NotImplementedError
