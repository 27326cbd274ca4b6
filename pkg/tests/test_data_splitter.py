"""Tests for the seeded train/validation/test split."""

import pytest

from DataSplitter import split
from Errors import ConfigError


@pytest.fixture
def edges():
    return {(u, i) for u in range(20) for i in range(u % 5, u % 5 + 6)}


class TestSplit:
    def test_partition(self, edges):
        bundle = split(edges, seed=0)
        assert bundle.all_edges == frozenset(edges)
        assert not bundle.train & bundle.val
        assert not bundle.train & bundle.test
        assert not bundle.val & bundle.test

    def test_sizes(self, edges):
        bundle = split(edges, (0.8, 0.1, 0.1), seed=1)
        n_train, n_val, n_test = bundle.sizes()
        assert n_train + n_val + n_test == 120
        assert n_val + n_test <= 24
        assert n_val + n_test + bundle.repaired == 24

    def test_every_user_keeps_a_training_edge(self):
        edges = [(u, 0) for u in range(10)]
        bundle = split(edges, (0.4, 0.3, 0.3), seed=2)
        assert {u for u, _ in bundle.train} == set(range(10))
        assert bundle.repaired == 6

    def test_seeded(self, edges):
        assert split(edges, seed=4) == split(edges, seed=4)
        assert split(edges, seed=4).train != split(edges, seed=5).train

    def test_input_order_does_not_matter(self, edges):
        assert split(sorted(edges), seed=3) == split(sorted(edges, reverse=True), seed=3)

    @pytest.mark.parametrize("ratios", [(0.5, 0.5), (0.8, 0.1, 0.2), (1.0, 0.0, 0.0)])
    def test_bad_ratios(self, edges, ratios):
        with pytest.raises(ConfigError):
            split(edges, ratios)

    def test_rows(self, edges):
        rows = split(edges, seed=0).rows()
        assert len(rows) == 120
        parts = [part for _, _, part in rows]
        assert parts == sorted(parts, key=["train", "val", "test"].index)
