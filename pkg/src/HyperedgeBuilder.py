import logging
from typing import Dict, FrozenSet, List, Set, Tuple

from Errors import DataError
from HypergraphCore import (
    BipartiteGraph,
    CategoryMap,
    HeteroHypergraph,
    Hyperedge,
    IdMap,
    interaction_pairs,
)

logger = logging.getLogger(__name__)


def build_hyperedges(g: BipartiteGraph, cm: CategoryMap) -> HeteroHypergraph:
    """
    One hyperedge {u} + I(u,c) + {c} per (user, category) pair whose item set
    I(u,c) is nonempty. Hyperedges are ordered by (user, category).
    """
    grouped: Dict[Tuple[int, int], Set[int]] = {}
    for u, i in g.edges:
        categories = cm.categories_of(i)
        if not categories:
            raise DataError(f"item '{g.item_ids[i]}' has no category")
        for c in categories:
            grouped.setdefault((u, c), set()).add(i)

    hyperedges = tuple(
        Hyperedge(user=u, items=tuple(sorted(items)), category=c)
        for (u, c), items in sorted(grouped.items())
    )
    ids = IdMap(users=g.user_ids, items=g.item_ids, categories=cm.category_ids)
    hh = HeteroHypergraph(ids, hyperedges)

    logger.debug(
        "built %d hyperedges from %d interactions (bound %d)",
        hh.n_hyperedges, len(g.edges), g.n_users * cm.n_categories,
    )
    return hh


def reconstruct_interactions(hh: HeteroHypergraph) -> FrozenSet[Tuple[int, int]]:
    """Union of item sets per user; inverts build_hyperedges on the edge set"""
    return interaction_pairs(hh)


def phi(hh: HeteroHypergraph) -> Dict[Tuple[int, int], FrozenSet[int]]:
    """(user, category) -> items the user touched in that category"""
    table: Dict[Tuple[int, int], Set[int]] = {}
    for e in hh.hyperedges:
        table.setdefault((e.user, e.category), set()).update(e.items)
    return {key: frozenset(items) for key, items in table.items()}


def category_pairs(g: BipartiteGraph, cm: CategoryMap) -> List[Tuple[int, int]]:
    """All (user, category) pairs reached by at least one interaction"""
    return sorted({(u, c) for u, i in g.edges for c in cm.categories_of(i)})
