import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np

from Errors import ConfigError

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]
PARTS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitBundle:
    train: FrozenSet[Edge]
    val: FrozenSet[Edge]
    test: FrozenSet[Edge]
    seed: int
    repaired: int = 0

    @property
    def all_edges(self) -> FrozenSet[Edge]:
        return self.train | self.val | self.test

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def rows(self) -> List[Tuple[int, int, str]]:
        """(user, item, part) ordered by part, then edge"""
        return [(u, i, name) for name in PARTS for u, i in sorted(getattr(self, name))]


def _check_ratios(ratios: Sequence[float]):
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three positive numbers summing to 1, got {tuple(ratios)}")


def split(edges: Iterable[Edge], ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> SplitBundle:
    """
    Seeded shuffle into train/val/test with round(r*n) edges for val and test.
    A user left without training edges gets one of its held-out edges back.
    """
    _check_ratios(ratios)
    ordered = sorted(set(edges))
    n = len(ordered)
    permutation = np.random.default_rng(seed).permutation(n)
    shuffled = [ordered[p] for p in permutation]

    n_val = int(round(ratios[1] * n))
    n_test = int(round(ratios[2] * n))
    n_train = max(n - n_val - n_test, 0)
    train = set(shuffled[:n_train])
    val = set(shuffled[n_train:n_train + n_val])
    test = set(shuffled[n_train + n_val:])

    users_in_train = {u for u, _ in train}
    held_out: Dict[int, List[Edge]] = {}
    for edge in shuffled[n_train:]:
        held_out.setdefault(edge[0], []).append(edge)

    repaired = 0
    for user in sorted(held_out):
        if user in users_in_train:
            continue
        # earliest held-out edge in shuffle order goes back to train
        edge = held_out[user][0]
        (val if edge in val else test).discard(edge)
        train.add(edge)
        repaired += 1

    if repaired:
        logger.info("moved %d held-out edges back to train so every user keeps one", repaired)
    return SplitBundle(frozenset(train), frozenset(val), frozenset(test), seed, repaired)
