import numpy as np
import pytest

from HyperedgeBuilder import build_hyperedges
from HypergraphCore import CategoryMap, InteractionRecord, build_bipartite

# three users, five items, two categories; ordinals follow first appearance
TOY_LOG = [
    ("u1", "i1"), ("u1", "i2"),
    ("u2", "i2"), ("u2", "i3"),
    ("u3", "i4"), ("u3", "i5"),
]
TOY_CATEGORIES = [("i1", "c1"), ("i2", "c1"), ("i3", "c2"), ("i4", "c2"), ("i5", "c2")]


@pytest.fixture
def toy_records():
    return [InteractionRecord(u, i) for u, i in TOY_LOG]


@pytest.fixture
def toy_graph(toy_records):
    return build_bipartite(toy_records)


@pytest.fixture
def toy_categories(toy_graph):
    return CategoryMap.from_pairs(toy_graph.item_ids, TOY_CATEGORIES)


@pytest.fixture
def toy_hypergraph(toy_graph, toy_categories):
    return build_hyperedges(toy_graph, toy_categories)


def random_log(seed, n_users=40, n_items=60, n_categories=5, density=0.1):
    """Interaction records and category rows where every user and item appears"""
    rng = np.random.default_rng(seed)
    pairs = {(u, i) for u in range(n_users) for i in range(n_items) if rng.random() < density}
    pairs |= {(u, int(rng.integers(n_items))) for u in range(n_users)}
    pairs |= {(int(rng.integers(n_users)), i) for i in range(n_items)}
    records = [InteractionRecord(f"u{u}", f"i{i}") for u, i in sorted(pairs)]
    categories = [(f"i{i}", f"c{int(rng.integers(n_categories))}") for i in range(n_items)]
    return records, categories


@pytest.fixture
def random_hypergraph():
    records, categories = random_log(7)
    g = build_bipartite(records)
    return build_hyperedges(g, CategoryMap.from_pairs(g.item_ids, categories))
