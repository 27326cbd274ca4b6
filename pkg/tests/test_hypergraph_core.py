"""Tests for the interaction graph, category map and hypergraph structures."""

import numpy as np
import pytest

from conftest import random_log
from Errors import DataError
from HyperedgeBuilder import build_hyperedges, phi, reconstruct_interactions
from HypergraphCore import (
    CategoryMap,
    HeteroHypergraph,
    Hyperedge,
    IdMap,
    InteractionRecord,
    VertexId,
    VertexKind,
    build_bipartite,
    degrees,
)


class TestBuildBipartite:
    def test_toy_log(self, toy_graph):
        assert toy_graph.n_users == 3
        assert toy_graph.n_items == 5
        assert len(toy_graph.edges) == 6
        assert toy_graph.user_ids == ("u1", "u2", "u3")

    def test_duplicates_collapse(self):
        g = build_bipartite([InteractionRecord("u", "i")] * 5)
        assert g.edges == frozenset({(0, 0)})

    def test_empty_log_raises(self):
        with pytest.raises(DataError, match="no interactions"):
            build_bipartite([])

    def test_edge_count_matches_pair_set(self):
        rng = np.random.default_rng(3)
        raw = [(f"u{rng.integers(100)}", f"i{rng.integers(200)}") for _ in range(10_000)]
        g = build_bipartite([InteractionRecord(u, i) for u, i in raw])
        assert len(g.edges) == len(set(raw))
        assert {(g.user_ids[u], g.item_ids[i]) for u, i in g.edges} == set(raw)

    def test_timestamps_order_first_appearance(self):
        records = [InteractionRecord("late", "a", 20), InteractionRecord("early", "b", 10)]
        g = build_bipartite(records)
        assert g.user_ids == ("early", "late")

    def test_restrict_rejects_foreign_edges(self, toy_graph):
        with pytest.raises(ValueError):
            toy_graph.restrict({(0, 4)})


class TestCategoryMap:
    def test_second_category_needs_multi_mode(self):
        with pytest.raises(DataError, match="more than one category"):
            CategoryMap.from_pairs(["a"], [("a", "x"), ("a", "y")])

    def test_multi_category(self):
        cm = CategoryMap.from_pairs(["a"], [("a", "x"), ("a", "y")], multi_category=True)
        assert cm.categories_of(0) == (0, 1)

    def test_unknown_items_are_counted(self):
        cm = CategoryMap.from_pairs(["a"], [("a", "x"), ("ghost", "y")])
        assert cm.ignored_rows == 1
        assert cm.category_ids == ("x",)


class TestHyperedge:
    def test_items_must_ascend(self):
        with pytest.raises(ValueError, match="ascending"):
            Hyperedge(0, (2, 1), 0)

    def test_empty_items(self):
        with pytest.raises(ValueError, match="empty"):
            Hyperedge(0, (), 0)

    def test_duplicate_triples_rejected(self):
        ids = IdMap(("u",), ("i",), ("c",))
        with pytest.raises(ValueError, match="duplicate"):
            HeteroHypergraph(ids, (Hyperedge(0, (0,), 0), Hyperedge(0, (0,), 0)))


class TestHypergraph:
    def test_toy_hyperedges(self, toy_hypergraph):
        assert toy_hypergraph.hyperedges == (
            Hyperedge(0, (0, 1), 0),
            Hyperedge(1, (1,), 0),
            Hyperedge(1, (2,), 1),
            Hyperedge(2, (3, 4), 1),
        )
        assert toy_hypergraph.n_hyperedges <= 3 * 2

    def test_toy_degrees(self, toy_hypergraph):
        hh = toy_hypergraph
        d_v, d_e = degrees(hh)
        assert d_v[hh.ordinal(VertexId(VertexKind.USER, 1))] == 2
        assert d_v[hh.ordinal(VertexId(VertexKind.ITEM, 1))] == 2
        assert d_v[hh.ordinal(VertexId(VertexKind.CATEGORY, 0))] == 2
        assert d_e[0] == 4

    def test_single_hyperedge_degrees(self):
        hh = HeteroHypergraph(IdMap(("u",), ("i",), ("c",)), (Hyperedge(0, (0,), 0),))
        assert hh.vertex_degrees.tolist() == [1, 1, 1]
        assert hh.edge_degrees.tolist() == [3]

    def test_degree_sums_match_dense_oracle(self, random_hypergraph):
        hh = random_hypergraph
        dense = np.zeros((hh.n_vertices, hh.n_hyperedges))
        for e, edge in enumerate(hh.hyperedges):
            dense[edge.user, e] = 1
            dense[[hh.n_users + i for i in edge.items], e] = 1
            dense[hh.n_users + hh.n_items + edge.category, e] = 1
        np.testing.assert_array_equal(hh.incidence.toarray(), dense)
        assert hh.vertex_degrees.sum() == hh.edge_degrees.sum()

    def test_vertex_ordinals_round_trip(self, toy_hypergraph):
        hh = toy_hypergraph
        for ordinal in range(hh.n_vertices):
            assert hh.ordinal(hh.vertex(ordinal)) == ordinal
        assert hh.vertex(hh.n_users).kind is VertexKind.ITEM

    def test_out_of_range_vertex(self, toy_hypergraph):
        with pytest.raises(ValueError):
            toy_hypergraph.ordinal(VertexId(VertexKind.USER, 3))

    def test_lines_preserve_hyperedges(self, toy_hypergraph):
        lines = toy_hypergraph.to_lines()
        assert lines[0] == "u1\tc1\ti1,i2"
        restored = HeteroHypergraph.from_lines(lines, toy_hypergraph.ids)
        assert restored.hyperedges == toy_hypergraph.hyperedges

    def test_statistics(self, toy_hypergraph):
        stats = toy_hypergraph.statistics()
        assert stats["hyperedges"] == 4
        assert stats["vertices"] == 10
        assert stats["interactions"] == 6
        assert stats["max_hyperedge_degree"] == 4


class TestConstruction:
    def test_uncategorized_item(self, toy_graph):
        cm = CategoryMap.from_pairs(toy_graph.item_ids, [("i1", "c1")])
        with pytest.raises(DataError, match="i2"):
            build_hyperedges(toy_graph, cm)

    def test_one_category_one_user(self):
        g = build_bipartite([InteractionRecord("u", i) for i in ("a", "b", "c")])
        hh = build_hyperedges(g, CategoryMap.from_pairs(g.item_ids, [(i, "x") for i in ("a", "b", "c")]))
        assert hh.hyperedges == (Hyperedge(0, (0, 1, 2), 0),)

    def test_reconstruct_toy_edges(self, toy_graph, toy_hypergraph):
        assert reconstruct_interactions(toy_hypergraph) == toy_graph.edges

    def test_reconstruct_empty(self):
        assert reconstruct_interactions(HeteroHypergraph(IdMap())) == frozenset()

    def test_phi(self, toy_hypergraph):
        table = phi(toy_hypergraph)
        assert table[(1, 0)] == frozenset({1})
        assert (2, 0) not in table

    def test_matches_brute_force(self):
        records, pairs = random_log(11)
        g = build_bipartite(records)
        cm = CategoryMap.from_pairs(g.item_ids, pairs)
        hh = build_hyperedges(g, cm)

        expected = set()
        for u in range(g.n_users):
            for c in range(cm.n_categories):
                items = tuple(sorted(i for uu, i in g.edges if uu == u and cm.category_of(i) == c))
                if items:
                    expected.add((u, items, c))
        assert {e.key for e in hh.hyperedges} == expected
        assert reconstruct_interactions(hh) == g.edges
        assert hh.n_hyperedges <= g.n_users * cm.n_categories

    def test_multi_category_items_join_every_hyperedge(self):
        g = build_bipartite([InteractionRecord("u", "a"), InteractionRecord("u", "b")])
        cm = CategoryMap.from_pairs(g.item_ids, [("a", "x"), ("a", "y"), ("b", "y")], multi_category=True)
        hh = build_hyperedges(g, cm)
        assert {e.key for e in hh.hyperedges} == {(0, (0,), 0), (0, (0, 1), 1)}
