import logging
from typing import List, Tuple

import numpy as np

from Errors import ConfigError
from HypergraphCore import InteractionRecord
from loaders.BaseLoader import BaseLoader, Dataset

logger = logging.getLogger(__name__)

POPULARITY_EXPONENT = 1.0


def _external_ids(prefix: str, n: int) -> List[str]:
    width = max(4, len(str(n)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def preferred_categories(n_clusters: int, n_categories: int) -> List[Tuple[int, ...]]:
    """Two preferred categories per cluster when they fit without overlap, else one, rotating"""
    per_cluster = 2 if 2 * n_clusters <= n_categories else 1
    return [
        tuple(sorted({(j * per_cluster + t) % n_categories for t in range(per_cluster)}))
        for j in range(n_clusters)
    ]


def generate_synthetic(
    n_users: int,
    n_items: int,
    n_categories: int,
    n_clusters: int,
    density: float,
    seed: int,
    concentration: float = 0.9,
) -> Dataset:
    """
    Users fall into planted clusters; each cluster draws `concentration` of its
    interaction mass from its preferred categories under a cluster-specific
    Zipf popularity. Items nobody touched are given to one user of a cluster
    that prefers their category.
    """
    if min(n_users, n_items, n_categories, n_clusters) < 1:
        raise ConfigError("synthetic counts must all be >= 1")
    if n_categories > n_items:
        raise ConfigError(f"{n_categories} categories cannot all hold one of {n_items} items")
    if not 0.0 < density <= 1.0 or not 0.0 <= concentration <= 1.0:
        raise ConfigError("density must lie in (0, 1] and concentration in [0, 1]")

    rng = np.random.default_rng(seed)
    item_category = rng.permutation(np.arange(n_items) % n_categories)
    labels = rng.permutation(np.arange(n_users) % n_clusters)
    preferences = preferred_categories(n_clusters, n_categories)

    item_weights = []
    for cluster in range(n_clusters):
        ranks = rng.permutation(n_items)
        popularity = 1.0 / (1.0 + ranks) ** POPULARITY_EXPONENT
        preferred = np.isin(item_category, preferences[cluster])
        weights = np.zeros(n_items)
        if preferred.all():
            weights = popularity / popularity.sum()
        else:
            weights[preferred] = concentration * popularity[preferred] / popularity[preferred].sum()
            weights[~preferred] = (1.0 - concentration) * popularity[~preferred] / popularity[~preferred].sum()
        item_weights.append(weights)

    interactions = np.zeros((n_users, n_items), dtype=bool)
    for u in range(n_users):
        weights = item_weights[labels[u]]
        size = min(max(2, int(rng.binomial(n_items, density))), int(np.count_nonzero(weights)))
        chosen = rng.choice(n_items, size=size, replace=False, p=weights)
        interactions[u, chosen] = True

    densified = 0
    for item in np.flatnonzero(~interactions.any(axis=0)):
        fans = [j for j, cats in enumerate(preferences) if item_category[item] in cats]
        members = np.flatnonzero(np.isin(labels, fans)) if fans else np.arange(n_users)
        interactions[members[rng.integers(len(members))], item] = True
        densified += 1
    if densified:
        logger.warning("densified %d items that no synthetic user touched", densified)

    user_ids = _external_ids("u", n_users)
    item_ids = _external_ids("i", n_items)
    category_ids = _external_ids("c", n_categories)
    records = tuple(
        InteractionRecord(user_ids[u], item_ids[i])
        for u in range(n_users)
        for i in np.flatnonzero(interactions[u])
    )
    pairs = tuple((item_ids[i], category_ids[item_category[i]]) for i in range(n_items))
    planted = {user_ids[u]: int(labels[u]) for u in range(n_users)}
    return Dataset(records, pairs, planted_labels=planted, densified=densified)


class SyntheticLoader(BaseLoader):
    """Clustered stand-in dataset from the synth section of the run config"""

    def load(self, cfg, seed: int) -> Dataset:
        synth = cfg.synth
        return generate_synthetic(
            n_users=synth.n_users,
            n_items=synth.n_items,
            n_categories=synth.n_categories,
            n_clusters=synth.n_clusters,
            density=synth.density,
            seed=seed,
            concentration=synth.concentration,
        )
