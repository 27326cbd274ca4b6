"""Tests for the hypergraph random walk and view sampling."""

import numpy as np
import pytest

from Errors import DataError
from HyperedgeBuilder import build_hyperedges
from HypergraphCore import (
    CategoryMap,
    HeteroHypergraph,
    InteractionRecord,
    VertexId,
    VertexKind,
    build_bipartite,
)
from WalkSampler import (
    HypergraphWalker,
    WalkConfig,
    expected_unique_nodes,
    hyperedge_pick_distribution,
    node_pick_distribution,
    random_walk,
    sample_views,
    stationary_distribution,
    transition_matrix,
)


def _hypergraph(log, categories):
    g = build_bipartite([InteractionRecord(u, i) for u, i in log])
    return build_hyperedges(g, CategoryMap.from_pairs(g.item_ids, categories))


@pytest.fixture
def two_user_hypergraph():
    """u0 and u1 share item i3; one category; ten vertices in two hyperedges"""
    log = [("u0", f"i{i}") for i in range(4)] + [("u1", f"i{i}") for i in range(3, 7)]
    return _hypergraph(log, [(f"i{i}", "c") for i in range(7)])


@pytest.fixture
def three_components():
    log = [("u0", "a"), ("u1", "b"), ("u2", "c")]
    return _hypergraph(log, [("a", "x"), ("b", "y"), ("c", "z")])


class TestPickDistributions:
    def test_proportional_to_cardinality(self):
        hh = _hypergraph([("u", "a"), ("u", "b"), ("u", "c")], [("a", "x"), ("b", "x"), ("c", "y")])
        dist = hyperedge_pick_distribution(hh, VertexId(VertexKind.USER, 0))
        assert dist.as_dict() == pytest.approx({0: 4 / 7, 1: 3 / 7})

    def test_single_hyperedge(self, toy_hypergraph):
        dist = hyperedge_pick_distribution(toy_hypergraph, 0)
        assert dist.as_dict() == {0: 1.0}

    def test_isolated_vertex(self, toy_hypergraph):
        bare = HeteroHypergraph(toy_hypergraph.ids, toy_hypergraph.hyperedges[:1])
        with pytest.raises(ValueError, match="isolated"):
            hyperedge_pick_distribution(bare, 2)

    def test_proportional_to_degree(self, toy_hypergraph):
        # u1 -> {i1, i2, c1} with degrees 1, 2, 2
        dist = node_pick_distribution(toy_hypergraph, 0, 0)
        assert dist.as_dict() == pytest.approx({3: 0.2, 4: 0.4, 8: 0.4})

    def test_hyperedge_object(self, toy_hypergraph):
        edge = toy_hypergraph.hyperedges[3]
        dist = node_pick_distribution(toy_hypergraph, edge, VertexId(VertexKind.USER, 2))
        assert dist.as_dict() == pytest.approx({6: 0.25, 7: 0.25, 9: 0.5})

    def test_cannot_leave_single_vertex(self, toy_hypergraph):
        with pytest.raises(ValueError):
            node_pick_distribution(toy_hypergraph, [0], 0)

    def test_equal_degrees_are_uniform(self, two_user_hypergraph):
        dist = node_pick_distribution(two_user_hypergraph, [2, 3, 4], 2)
        assert dist.as_dict() == pytest.approx({3: 0.5, 4: 0.5})

    def test_dense_oracle(self, random_hypergraph):
        hh = random_hypergraph
        h = hh.incidence.toarray()
        d_v, d_e = h.sum(axis=1), h.sum(axis=0)
        walker = HypergraphWalker(hh)
        for v in range(0, hh.n_vertices, 7):
            if d_v[v] == 0:
                continue
            edges = walker.edge_distribution(v)
            expected = h[v] * d_e / (h[v] * d_e).sum()
            np.testing.assert_allclose(edges.probs, expected[edges.support], rtol=1e-12)
            for e in edges.support:
                members = np.flatnonzero(h[:, e])
                nodes = walker.node_distribution(members, v)
                others = members[members != v]
                np.testing.assert_allclose(nodes.probs, d_v[others] / d_v[others].sum(), rtol=1e-12)


class TestRandomWalk:
    def test_always_restart(self, toy_hypergraph):
        cfg = WalkConfig(steps=20, restart=1.0)
        view = random_walk(toy_hypergraph, cfg, 0, np.random.default_rng(0))
        assert view.vertices == (0,)
        assert view.hyperedges == ()

    def test_one_step_frequencies(self, toy_hypergraph):
        walker = HypergraphWalker(toy_hypergraph)
        rng = np.random.default_rng(1)
        n = 20_000
        counts = {}
        for _ in range(n):
            e, v = walker.step(0, rng)
            assert e == 0
            counts[v] = counts.get(v, 0) + 1
        for target, p in {3: 0.2, 4: 0.4, 8: 0.4}.items():
            sigma = np.sqrt(p * (1 - p) / n)
            assert abs(counts[target] / n - p) <= 4 * sigma

    def test_single_step_view(self, toy_hypergraph):
        cfg = WalkConfig(steps=1, restart=0.0)
        view = random_walk(toy_hypergraph, cfg, 0, np.random.default_rng(4))
        assert view.hyperedges == (0,)
        assert len(view.vertices) == 2
        assert set(view.vertices) - {0} <= {3, 4, 8}

    def test_confined_to_component(self, three_components):
        hh = three_components
        cfg = WalkConfig(steps=15, restart=0.1)
        for seed in range(20):
            view = random_walk(hh, cfg, 0, np.random.default_rng(seed))
            assert set(view.vertices) <= {0, 3, 6}

    def test_invalid_restart(self):
        with pytest.raises(ValueError):
            WalkConfig(restart=1.5)


class TestSampleViews:
    def test_threshold_one_accepts_everything(self, toy_hypergraph):
        views = sample_views(toy_hypergraph, WalkConfig(m=4, min_nodes=1, seed=2))
        assert len(views) == 4
        assert views.attempts == 4
        assert views.rejected == 0

    def test_views_reach_threshold(self, random_hypergraph):
        cfg = WalkConfig(m=5, steps=15, restart=0.1, min_nodes=5, seed=3)
        views = sample_views(random_hypergraph, cfg)
        assert len(views) == 5
        assert all(view.n_vertices >= 5 for view in views)
        assert all(view.start in view.vertices for view in views)

    def test_seeded_views_repeat(self, random_hypergraph):
        cfg = WalkConfig(seed=8)
        assert sample_views(random_hypergraph, cfg) == sample_views(random_hypergraph, cfg)

    def test_threads_give_the_same_views(self, random_hypergraph):
        single = sample_views(random_hypergraph, WalkConfig(seed=8, min_nodes=8))
        threaded = sample_views(random_hypergraph, WalkConfig(seed=8, min_nodes=8, threads=4))
        assert single.views == threaded.views

    def test_unreachable_threshold(self, three_components):
        cfg = WalkConfig(m=2, min_nodes=4, max_attempts=10)
        with pytest.raises(DataError, match="acceptance rate"):
            sample_views(three_components, cfg)

    def test_user_starts(self, toy_hypergraph):
        views = sample_views(toy_hypergraph, WalkConfig(m=3, min_nodes=1, start_kind="user"))
        assert all(view.start < toy_hypergraph.n_users for view in views)

    def test_view_line(self, toy_hypergraph):
        views = sample_views(toy_hypergraph, WalkConfig(m=1, min_nodes=1, restart=1.0))
        view = views.views[0]
        assert view.to_line(0) == f"0\t{view.start}\t1\t"


class TestStationary:
    def test_rows_are_distributions(self, random_hypergraph):
        p = transition_matrix(random_hypergraph)
        sums = np.asarray(p.sum(axis=1)).ravel()
        live = random_hypergraph.vertex_degrees > 0
        np.testing.assert_allclose(sums[live], 1.0, atol=1e-12)

    def test_restart_rows(self, toy_hypergraph):
        p = transition_matrix(toy_hypergraph, alpha=0.3, v0=0)
        np.testing.assert_allclose(np.asarray(p.sum(axis=1)).ravel(), 1.0, atol=1e-12)
        assert p[5, 0] == pytest.approx(0.3)

    def test_stationary_sums_to_one(self, two_user_hypergraph):
        pi = stationary_distribution(two_user_hypergraph, 0, 0.1)
        assert pi.sum() == pytest.approx(1.0, abs=1e-9)
        assert (pi >= 0).all()

    def test_uniform_single_step(self):
        assert expected_unique_nodes(np.full(8, 1 / 8), 1) == pytest.approx(1.0)

    def test_point_mass(self):
        pi = np.zeros(5)
        pi[2] = 1.0
        assert expected_unique_nodes(pi, 30) == pytest.approx(1.0)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            expected_unique_nodes(np.full(4, 0.5), 3)

    @pytest.mark.slow
    def test_coverage_estimate_against_simulation(self, two_user_hypergraph):
        hh = two_user_hypergraph
        pi = stationary_distribution(hh, 0, 0.1)
        estimate = expected_unique_nodes(pi, 15)

        walker = HypergraphWalker(hh)
        rng = np.random.default_rng(0)
        sizes = [walker.walk(0, 15, 0.1, rng).n_vertices for _ in range(10_000)]
        assert estimate == pytest.approx(np.mean(sizes), rel=0.15)
