"""Tests for the TSV and synthetic data loaders."""

import numpy as np
import pytest

from Config import build_run_config
from Errors import ConfigError, DataError
from HyperedgeBuilder import build_hyperedges
from HyperedgeCompletion import adjusted_rand_index, build_feature_matrix, kmeans
from HypergraphCore import CategoryMap, build_bipartite
from loaders.BaseLoader import Dataset
from loaders.SyntheticLoader import SyntheticLoader, generate_synthetic, preferred_categories
from loaders.TsvLoader import TsvLoader, read_aux, read_categories, read_interactions


@pytest.fixture
def tsv_dir(tmp_path):
    (tmp_path / "interactions.tsv").write_text("# user\titem\nu1\ti1\t5\nu1\ti2\nu2\ti2\t3\n", encoding="utf-8")
    (tmp_path / "categories.tsv").write_text("i1\tc1\ni2\tc2\n", encoding="utf-8")
    (tmp_path / "aux.tsv").write_text("u1\t0.5\t1\nu9\t2\t2\n", encoding="utf-8")
    return tmp_path


class TestTsvLoader:
    def test_interactions(self, tsv_dir):
        records = read_interactions(tsv_dir / "interactions.tsv")
        assert [(r.user, r.item, r.timestamp) for r in records] == [
            ("u1", "i1", 5), ("u1", "i2", None), ("u2", "i2", 3),
        ]

    def test_categories(self, tsv_dir):
        assert read_categories(tsv_dir / "categories.tsv") == [("i1", "c1"), ("i2", "c2")]

    def test_aux(self, tsv_dir):
        assert read_aux(tsv_dir / "aux.tsv") == {"u1": (0.5, 1.0), "u9": (2.0, 2.0)}

    def test_wide_comment_lines(self, tmp_path):
        log = tmp_path / "log.tsv"
        log.write_text("# a\tb\tc\td\nu1\ti1\nu2\ti2\n", encoding="utf-8")
        assert [(r.user, r.item, r.timestamp) for r in read_interactions(log)] == [
            ("u1", "i1", None), ("u2", "i2", None),
        ]
        categories = tmp_path / "categories.tsv"
        categories.write_text("# item\tcategory\tnote\ni1\tc1\n", encoding="utf-8")
        assert read_categories(categories) == [("i1", "c1")]

    def test_only_comments(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("# nothing here\n", encoding="utf-8")
        assert read_interactions(path) == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            read_interactions(tmp_path / "nope.tsv")

    def test_bad_timestamp(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("u\ti\tyesterday\n", encoding="utf-8")
        with pytest.raises(DataError, match="timestamp"):
            read_interactions(path)

    def test_load(self, tsv_dir):
        cfg = build_run_config({
            "paths.interactions": str(tsv_dir / "interactions.tsv"),
            "paths.categories": str(tsv_dir / "categories.tsv"),
            "paths.aux": str(tsv_dir / "aux.tsv"),
        })
        dataset = TsvLoader().load(cfg, seed=0)
        assert len(dataset.records) == 3
        matrix = dataset.aux_matrix(["u2", "u1"])
        np.testing.assert_array_equal(matrix, [[0.0, 0.0], [0.5, 1.0]])

    def test_paths_required(self):
        with pytest.raises(ConfigError):
            TsvLoader().load(build_run_config({}), seed=0)

    def test_no_aux(self):
        assert Dataset((), ()).aux_matrix(["u"]) is None


class TestSyntheticLoader:
    def test_seeded(self):
        assert generate_synthetic(20, 30, 3, 2, 0.1, seed=4) == generate_synthetic(20, 30, 3, 2, 0.1, seed=4)

    def test_every_item_and_user_appears(self):
        dataset = generate_synthetic(25, 60, 5, 3, 0.02, seed=1)
        g = build_bipartite(dataset.records)
        assert g.n_users == 25
        assert g.n_items == 60
        assert len(dataset.planted_labels) == 25
        assert set(dataset.planted_labels.values()) == {0, 1, 2}
        assert dataset.densified > 0

    def test_categories_are_balanced(self):
        dataset = generate_synthetic(10, 12, 4, 2, 0.2, seed=0)
        counts = {}
        for _, category in dataset.category_pairs:
            counts[category] = counts.get(category, 0) + 1
        assert sorted(counts.values()) == [3, 3, 3, 3]

    def test_preferred_categories(self):
        assert preferred_categories(2, 6) == [(0, 1), (2, 3)]
        assert preferred_categories(4, 6) == [(0,), (1,), (2,), (3,)]
        assert preferred_categories(3, 2) == [(0,), (1,), (0,)]

    @pytest.mark.parametrize(
        "args",
        [(0, 10, 2, 2, 0.1), (10, 3, 4, 2, 0.1), (10, 10, 2, 2, 0.0)],
    )
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            generate_synthetic(*args, seed=0)

    def test_loader_reads_synth_section(self):
        cfg = build_run_config({"synth.n_users": 12, "synth.n_items": 20, "synth.n_categories": 2, "synth.n_clusters": 2})
        dataset = SyntheticLoader().load(cfg, seed=3)
        assert len(dataset.planted_labels) == 12

    @pytest.mark.slow
    def test_planted_clusters_are_recoverable(self):
        dataset = generate_synthetic(120, 150, 6, 3, 0.08, seed=2, concentration=0.95)
        g = build_bipartite(dataset.records)
        hh = build_hyperedges(g, CategoryMap.from_pairs(g.item_ids, dataset.category_pairs))
        clustering = kmeans(build_feature_matrix(hh), 3, 0, n_init=5)
        truth = [dataset.planted_labels[u] for u in g.user_ids]
        assert adjusted_rand_index(truth, clustering.assignment) > 0.5
