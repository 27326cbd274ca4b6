"""End-to-end tests of the command line through click's test runner."""

import json

import pandas as pd
import pytest
from click.testing import CliRunner

from app import cli
from Config import build_run_config
from RecommendationPipeline import run_pipeline, run_rho_sweep

SMALL_RUN = [
    "--set", "source=synthetic",
    "--set", "synth.n_users=30",
    "--set", "synth.n_items=40",
    "--set", "synth.n_categories=4",
    "--set", "synth.n_clusters=2",
    "--set", "synth.density=0.15",
    "--set", "model.dim=8",
    "--set", "train.epochs=2",
    "--set", "walk.views=3",
]


@pytest.fixture
def runner():
    return CliRunner()


def _invoke(runner, tmp_path, *args):
    return runner.invoke(cli, ["--output-dir", str(tmp_path), "--seed", "1", *SMALL_RUN, *args])


class TestCli:
    def test_run_writes_every_artifact(self, runner, tmp_path):
        result = _invoke(runner, tmp_path, "run")
        assert result.exit_code == 0, result.output
        for name in (
            "id_map.tsv", "split.tsv", "hypergraph.tsv", "stats.csv", "hypergraph_completed.tsv",
            "completion.tsv", "views.tsv", "checkpoint.npz", "history.csv", "metrics.csv", "manifest.json",
        ):
            assert (tmp_path / name).is_file(), name
        metrics = pd.read_csv(tmp_path / "metrics.csv")
        assert set(metrics["metric"]) == {"P", "R", "nDCG", "MRR", "F1"}
        manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["seed"] == 1
        assert "nDCG" in result.output

    def test_run_is_repeatable(self, runner, tmp_path):
        assert _invoke(runner, tmp_path / "a", "run").exit_code == 0
        assert _invoke(runner, tmp_path / "b", "run").exit_code == 0
        for name in ("split.tsv", "views.tsv", "checkpoint.npz", "metrics.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_eval_from_checkpoint(self, runner, tmp_path):
        assert _invoke(runner, tmp_path, "run").exit_code == 0
        expected = (tmp_path / "metrics.csv").read_bytes()
        result = _invoke(runner, tmp_path, "eval", "--checkpoint", str(tmp_path / "checkpoint.npz"))
        assert result.exit_code == 0, result.output
        assert (tmp_path / "metrics.csv").read_bytes() == expected

    def test_replay_manifest(self, runner, tmp_path):
        assert _invoke(runner, tmp_path / "first", "run").exit_code == 0
        result = runner.invoke(
            cli,
            ["--output-dir", str(tmp_path / "replay"), "run", "--manifest", str(tmp_path / "first" / "manifest.json")],
        )
        assert result.exit_code == 0, result.output
        for name in ("metrics.csv", "checkpoint.npz", "views.tsv"):
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "replay" / name).read_bytes(), name

    def test_build_prints_stats(self, runner, tmp_path):
        result = _invoke(runner, tmp_path, "build")
        assert result.exit_code == 0, result.output
        assert "hyperedges:" in result.output
        assert (tmp_path / "hypergraph.tsv").is_file()
        assert not (tmp_path / "split.tsv").exists()

    def test_synth(self, runner, tmp_path):
        result = _invoke(runner, tmp_path, "synth")
        assert result.exit_code == 0, result.output
        assert "cluster_agreement" in result.output
        assert (tmp_path / "planted_clusters.tsv").is_file()

    def test_missing_input_is_a_data_error(self, runner, tmp_path):
        result = runner.invoke(cli, [
            "--output-dir", str(tmp_path),
            "--set", f"paths.interactions={tmp_path / 'missing.tsv'}",
            "--set", f"paths.categories={tmp_path / 'missing.tsv'}",
            "ingest",
        ])
        assert result.exit_code == 3
        assert "not found" in result.output

    def test_bad_config_value(self, runner, tmp_path):
        result = runner.invoke(cli, ["--output-dir", str(tmp_path), "--set", "completion.rho=2", "ingest"])
        assert result.exit_code == 2

    def test_unreachable_view_threshold(self, runner, tmp_path):
        result = _invoke(runner, tmp_path, "--set", "walk.min_nodes=500", "sample")
        assert result.exit_code == 3
        assert "acceptance rate" in result.output

    @pytest.mark.slow
    def test_check_suite(self, runner, tmp_path):
        result = runner.invoke(cli, ["--output-dir", str(tmp_path), "check", "--instances", "5", "--seeds", "3"])
        assert result.exit_code == 0, result.output
        assert "OK:" in result.output

    @pytest.mark.slow
    def test_repeats(self, runner, tmp_path):
        result = _invoke(runner, tmp_path, "run", "--repeats", "2")
        assert result.exit_code == 0, result.output
        summary = pd.read_csv(tmp_path / "summary.csv")
        assert list(summary.columns) == ["K", "metric", "mean", "std"]
        assert (tmp_path / "repeat_1" / "metrics.csv").is_file()


class TestRunPipeline:
    @staticmethod
    def _config(tmp_path, **extra):
        flat = {"seed": 1, "paths.output_dir": str(tmp_path)}
        for assignment in SMALL_RUN[1::2]:
            key, value = assignment.split("=", 1)
            flat[key] = value
        flat.update(extra)
        return build_run_config(flat)

    def test_full_run(self, tmp_path):
        artifacts = run_pipeline(self._config(tmp_path))
        assert artifacts.report.evaluated > 0
        for k in artifacts.report.ks:
            assert 0.0 <= artifacts.report.value("nDCG", k) <= 1.0
        assert artifacts.completed.n_hyperedges >= artifacts.hypergraph.n_hyperedges
        assert "manifest.json" in artifacts.written

    def test_zero_rate_skips_completion(self, tmp_path):
        artifacts = run_pipeline(self._config(tmp_path, **{"completion.rho": 0}))
        assert artifacts.completion is None
        assert artifacts.completed is artifacts.hypergraph
        assert not (tmp_path / "completion.tsv").exists()


@pytest.mark.slow
class TestLearningSignal:
    """Full-size synthetic runs at the default hyperparameters."""

    def test_beats_random_ranking(self, tmp_path):
        cfg = build_run_config({
            "source": "synthetic",
            "paths.output_dir": str(tmp_path),
            "train.epochs": 50,
            "train.patience": None,
        })
        artifacts = run_pipeline(cfg)
        losses = [record.train_loss for record in artifacts.training.history]
        assert len(losses) == 50
        assert losses[-1] < losses[0]
        ndcg, baseline = artifacts.report.value("nDCG", 10), artifacts.report.random_ndcg[10]
        assert ndcg >= 2.0 * baseline, f"nDCG@10 {ndcg:.4f}, random {baseline:.4f}"

    def test_completion_helps_sparse_data(self, tmp_path):
        cfg = build_run_config({
            "source": "synthetic",
            "synth.density": 0.02,
            "paths.output_dir": str(tmp_path),
        })
        sweep = run_rho_sweep(cfg, [0.0, 0.05], repeats=5)
        p10 = sweep[(sweep["metric"] == "P") & (sweep["K"] == 10)].set_index("rho")["mean"]
        assert p10[0.05] >= p10[0.0], f"P@10 with completion {p10[0.05]:.4f}, without {p10[0.0]:.4f}"
