import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from Config import RunConfig, build_run_config, flatten
from DataExporter import DataExporter
from DataSplitter import SplitBundle, split
from Errors import ConfigError, DataError, StageError
from Evaluator import MetricsReport, evaluate_model
from HyperedgeBuilder import build_hyperedges
from HyperedgeCompletion import (
    Clustering,
    CompletionReport,
    adjusted_rand_index,
    build_feature_matrix,
    default_cluster_count,
    kmeans,
    run_completion,
)
from HypergraphCore import BipartiteGraph, CategoryMap, HeteroHypergraph, IdMap, build_bipartite
from HypergraphModel import ModelParams, forward, forward_cost, view_incidences
from loaders.BaseLoader import DataSource, Dataset
from loaders.SyntheticLoader import SyntheticLoader
from loaders.TsvLoader import TsvLoader
from Trainer import TrainConfig, TrainingResult, train
from WalkSampler import ViewSet, WalkConfig, sample_views

logger = logging.getLogger(__name__)


class Stage(Enum):
    INGEST = "ingest"
    SPLIT = "split"
    BUILD = "build"
    COMPLETE = "complete"
    SAMPLE = "sample"
    TRAIN = "train"
    EVAL = "eval"


STAGES = list(Stage)

DESCRIPTIONS = {
    Stage.INGEST: "loading interactions and categories",
    Stage.SPLIT: "splitting interactions into train/val/test",
    Stage.BUILD: "building hyperedges from the training split",
    Stage.COMPLETE: "completing hyperedges from user clusters",
    Stage.SAMPLE: "sampling sub-hypergraph views",
    Stage.TRAIN: "training",
    Stage.EVAL: "evaluating on the test split",
}


@dataclass
class RunArtifacts:
    config: RunConfig
    seeds: Dict[str, int]
    dataset: Optional[Dataset] = None
    graph: Optional[BipartiteGraph] = None
    categories: Optional[CategoryMap] = None
    ids: Optional[IdMap] = None
    split: Optional[SplitBundle] = None
    hypergraph: Optional[HeteroHypergraph] = None
    stats: Dict[str, Any] = field(default_factory=dict)
    completion: Optional[CompletionReport] = None
    clustering: Optional[Clustering] = None
    completed: Optional[HeteroHypergraph] = None
    walk_config: Optional[WalkConfig] = None
    views: Optional[ViewSet] = None
    training: Optional[TrainingResult] = None
    params: Optional[ModelParams] = None
    z_out: Optional[np.ndarray] = None
    report: Optional[MetricsReport] = None
    cluster_agreement: Optional[float] = None
    written: List[str] = field(default_factory=list)


class RecommendationPipeline:
    """
    ingest -> split -> build (train only) -> complete -> sample -> train -> eval.
    Each stage reads what the earlier ones left on the artifacts object.
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.seeds = cfg.stage_seeds()
        self.output_dir = Path(cfg.paths.output_dir)

        self.loaders = {
            DataSource.TSV: TsvLoader(),
            DataSource.SYNTHETIC: SyntheticLoader(),
        }

    def run(
        self,
        until: Stage = Stage.EVAL,
        write_all: bool = True,
        checkpoint: Optional[Path] = None,
    ) -> RunArtifacts:
        """
        Run every stage up to `until`. With write_all the artifacts of every
        stage and the manifest are written, otherwise only those of `until`.
        """
        artifacts = RunArtifacts(config=self.cfg, seeds=dict(self.seeds))
        stages = STAGES[:STAGES.index(until) + 1]

        for step, stage in enumerate(stages, 1):
            logger.info("Step %d: %s...", step, DESCRIPTIONS[stage])
            try:
                if stage is Stage.TRAIN and checkpoint is not None:
                    self._restore(artifacts, checkpoint)
                else:
                    getattr(self, f"_{stage.value}")(artifacts)
                if write_all or stage is until:
                    self._write_stage(stage, artifacts)
            except StageError:
                raise
            except Exception as e:
                raise StageError(stage.value, e) from e

        if write_all:
            self._write_manifest(artifacts)
        return artifacts

    def _ingest(self, artifacts: RunArtifacts):
        loader = self.loaders[DataSource(self.cfg.source)]
        dataset = loader.load(self.cfg, self.seeds["synth"])
        graph = build_bipartite(dataset.records)
        categories = CategoryMap.from_pairs(graph.item_ids, dataset.category_pairs, self.cfg.ingest.multi_category)
        if categories.ignored_rows:
            logger.warning("ignored %d category rows for items without interactions", categories.ignored_rows)
        uncategorized = [graph.item_ids[i] for i in range(graph.n_items) if not categories.categories_of(i)]
        if uncategorized:
            source = self.cfg.paths.categories or "the category map"
            raise DataError(f"item '{uncategorized[0]}' has no category in {source} ({len(uncategorized)} in total)")

        artifacts.dataset = dataset
        artifacts.graph = graph
        artifacts.categories = categories
        artifacts.ids = IdMap(graph.user_ids, graph.item_ids, categories.category_ids)
        logger.info(
            "%d users, %d items, %d categories, %d interactions",
            graph.n_users, graph.n_items, categories.n_categories, len(graph.edges),
        )

    def _split(self, artifacts: RunArtifacts):
        artifacts.split = split(artifacts.graph.edges, self.cfg.split.ratios, self.seeds["split"])
        logger.info("split sizes (train, val, test): %s", artifacts.split.sizes())

    def _build(self, artifacts: RunArtifacts):
        train_graph = artifacts.graph.restrict(artifacts.split.train)
        artifacts.hypergraph = build_hyperedges(train_graph, artifacts.categories)
        artifacts.stats = artifacts.hypergraph.statistics(len(train_graph.edges))
        logger.info("%d hyperedges", artifacts.hypergraph.n_hyperedges)

    def _complete(self, artifacts: RunArtifacts):
        section = self.cfg.completion
        hh = artifacts.hypergraph
        if section.rho == 0:
            logger.info("completion disabled (rho = 0)")
            artifacts.completed = hh
            return

        aux = artifacts.dataset.aux_matrix(artifacts.ids.users)
        report, clustering = run_completion(
            hh,
            rho=section.rho,
            seed=self.seeds["completion"],
            k_clusters=section.k_clusters,
            aux=aux,
            standardize_aux=section.standardize_aux,
            restarts=section.kmeans_restarts,
            threads=self.cfg.threads,
        )
        artifacts.completion = report
        artifacts.clustering = clustering
        artifacts.completed = report.hypergraph
        planted = artifacts.dataset.planted_labels
        if planted:
            truth = [planted[user] for user in artifacts.ids.users]
            artifacts.cluster_agreement = adjusted_rand_index(truth, clustering.assignment)
            logger.info("cluster agreement with planted labels (ARI): %.4f", artifacts.cluster_agreement)

    def _sample(self, artifacts: RunArtifacts):
        artifacts.walk_config = WalkConfig.from_section(self.cfg.walk, self.seeds["walk"], self.cfg.threads)
        artifacts.views = sample_views(artifacts.completed, artifacts.walk_config)
        logger.info(
            "%d views, acceptance rate %.3f",
            len(artifacts.views), artifacts.views.acceptance_rate,
        )

    def _train(self, artifacts: RunArtifacts):
        train_cfg = TrainConfig.from_run_config(self.cfg, self.seeds["train"])
        result = train(artifacts.split, artifacts.completed, train_cfg, artifacts.walk_config, views=artifacts.views)
        artifacts.training = result
        artifacts.params = result.params
        artifacts.z_out = result.final_z_out

    def _restore(self, artifacts: RunArtifacts, checkpoint: Path):
        params, meta = DataExporter.load_checkpoint(checkpoint)
        hh = artifacts.completed
        if params.n_vertices != hh.n_vertices or params.n_users != hh.n_users or params.n_items != hh.n_items:
            raise DataError(
                f"checkpoint {checkpoint} covers {params.n_vertices} vertices, "
                f"the current hypergraph has {hh.n_vertices}"
            )
        if meta.get("fingerprint") and meta["fingerprint"] != self.cfg.fingerprint():
            logger.warning("checkpoint was trained under a different configuration")
        artifacts.params = params
        artifacts.z_out = forward(params, view_incidences(hh, artifacts.views.views)).z_out

    def _eval(self, artifacts: RunArtifacts):
        artifacts.report = evaluate_model(
            artifacts.z_out,
            artifacts.params,
            artifacts.split.train,
            artifacts.split.test,
            self.cfg.eval.ks,
            self.cfg.eval.standard_recall,
        )

    def _write_stage(self, stage: Stage, artifacts: RunArtifacts):
        out = self.output_dir
        written = []
        if stage is Stage.INGEST:
            DataExporter.write_id_map(artifacts.ids, out / "id_map.tsv")
            written.append("id_map.tsv")
        elif stage is Stage.SPLIT:
            DataExporter.write_split(artifacts.split, artifacts.ids, out / "split.tsv")
            written.append("split.tsv")
        elif stage is Stage.BUILD:
            DataExporter.write_hypergraph(artifacts.hypergraph, out / "hypergraph.tsv")
            DataExporter.write_stats(artifacts.stats, out / "stats.csv")
            written += ["hypergraph.tsv", "stats.csv"]
        elif stage is Stage.COMPLETE:
            DataExporter.write_hypergraph(artifacts.completed, out / "hypergraph_completed.tsv")
            written.append("hypergraph_completed.tsv")
            if artifacts.completion is not None:
                DataExporter.write_completion(artifacts.completion, artifacts.ids, out / "completion.tsv")
                written.append("completion.tsv")
        elif stage is Stage.SAMPLE:
            DataExporter.write_views(artifacts.views, out / "views.tsv")
            written.append("views.tsv")
        elif stage is Stage.TRAIN and artifacts.training is not None:
            DataExporter.save_checkpoint(
                artifacts.params, out / "checkpoint.npz", self.cfg.fingerprint(),
                {"best_epoch": artifacts.training.best_epoch},
            )
            DataExporter.write_history(artifacts.training.history_frame(), out / "history.csv")
            written += ["checkpoint.npz", "history.csv"]
        elif stage is Stage.EVAL:
            per_user = out / "per_user.csv" if self.cfg.eval.per_user else None
            DataExporter.write_metrics(artifacts.report, out / "metrics.csv", per_user)
            written.append("metrics.csv")
            if per_user is not None:
                written.append("per_user.csv")
        artifacts.written.extend(written)

    def manifest(self, artifacts: RunArtifacts) -> Dict[str, Any]:
        manifest: Dict[str, Any] = {
            "fingerprint": self.cfg.fingerprint(),
            "config": self.cfg.model_dump(mode="json"),
            "seeds": artifacts.seeds,
            "threads": self.cfg.threads,
            "artifacts": sorted(artifacts.written),
        }
        if artifacts.split is not None:
            manifest["split"] = {"sizes": list(artifacts.split.sizes()), "repaired": artifacts.split.repaired}
        if artifacts.stats:
            manifest["stats"] = artifacts.stats
        if artifacts.completion is not None:
            manifest["completion"] = {
                "sampled_users": len(artifacts.completion.sampled_users),
                "added_hyperedges": len(artifacts.completion.added),
                "clusters": artifacts.clustering.k,
                "inertia": artifacts.clustering.inertia,
            }
        if artifacts.cluster_agreement is not None:
            manifest["cluster_agreement"] = artifacts.cluster_agreement
        if artifacts.views is not None:
            completed = artifacts.completed.statistics()
            manifest["views"] = {
                "count": len(artifacts.views),
                "attempts": artifacts.views.attempts,
                "acceptance_rate": artifacts.views.acceptance_rate,
            }
            manifest["forward_cost"] = forward_cost(
                len(artifacts.views), self.cfg.model.layers, artifacts.completed.n_vertices,
                completed["avg_hyperedge_degree"], self.cfg.model.dim,
            )
        if artifacts.training is not None:
            manifest["training"] = {
                "best_epoch": artifacts.training.best_epoch,
                "epochs_run": len(artifacts.training.history),
                "stopped_early": artifacts.training.stopped_early,
                "skipped_triplets": artifacts.training.skipped_triplets,
            }
        if artifacts.report is not None:
            manifest["evaluation"] = {
                "evaluated_users": artifacts.report.evaluated,
                "excluded_users": artifacts.report.excluded,
                "random_ndcg": {str(k): v for k, v in artifacts.report.random_ndcg.items()},
            }
        return manifest

    def _write_manifest(self, artifacts: RunArtifacts):
        artifacts.written.append("manifest.json")
        DataExporter.to_json(self.manifest(artifacts), self.output_dir / "manifest.json")


def run_pipeline(cfg: RunConfig, checkpoint: Optional[Path] = None) -> RunArtifacts:
    return RecommendationPipeline(cfg).run(Stage.EVAL, write_all=True, checkpoint=checkpoint)


def config_from_manifest(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"manifest {path} is not valid JSON: {e}") from e
    if "config" not in manifest:
        raise ConfigError(f"manifest {path} holds no config")
    return build_run_config(flatten(manifest["config"]))


def _summarize(frames: List[pd.DataFrame], keys: Sequence[str]) -> pd.DataFrame:
    combined = pd.concat(frames, ignore_index=True)
    grouped = combined.groupby(list(keys), sort=False)["value"]
    summary = grouped.agg(["mean", "std"]).reset_index()
    summary["std"] = summary["std"].fillna(0.0)
    return summary


def run_repeats(cfg: RunConfig, repeats: Optional[int] = None) -> pd.DataFrame:
    """
    Repeat the full pipeline with reseeded split and training; returns
    K, metric, mean, std over the repeats.
    """
    repeats = repeats or cfg.repeats
    if repeats == 1:
        return _summarize([run_pipeline(cfg).report.to_frame()], ["K", "metric"])

    frames = []
    base_dir = Path(cfg.paths.output_dir)
    for r in range(repeats):
        logger.info("repeat %d of %d", r + 1, repeats)
        repeat_cfg = cfg.derive({"seed": cfg.seed + r, "paths.output_dir": str(base_dir / f"repeat_{r}")})
        frames.append(run_pipeline(repeat_cfg).report.to_frame())
    summary = _summarize(frames, ["K", "metric"])
    DataExporter.to_csv(summary, base_dir / "summary.csv")
    return summary


def run_rho_sweep(cfg: RunConfig, rhos: Sequence[float], repeats: Optional[int] = None) -> pd.DataFrame:
    """Completion-rate ablation; writes sweep.csv with rho, K, metric, mean, std"""
    base_dir = Path(cfg.paths.output_dir)
    frames = []
    for rho in rhos:
        logger.info("completion rate %g", rho)
        rho_cfg = cfg.derive({"completion.rho": rho, "paths.output_dir": str(base_dir / f"rho_{rho:g}")})
        summary = run_repeats(rho_cfg, repeats)
        summary.insert(0, "rho", rho)
        frames.append(summary)
    sweep = pd.concat(frames, ignore_index=True)
    DataExporter.to_csv(sweep, base_dir / "sweep.csv")
    return sweep


def synthesize(cfg: RunConfig) -> Dict[str, Any]:
    """Generate the synthetic dataset, write it, and score k-means against the planted clusters"""
    seeds = cfg.stage_seeds()
    dataset = SyntheticLoader().load(cfg, seeds["synth"])
    output_dir = Path(cfg.paths.output_dir)
    DataExporter.write_dataset(dataset, output_dir)

    graph = build_bipartite(dataset.records)
    categories = CategoryMap.from_pairs(graph.item_ids, dataset.category_pairs)
    hh = build_hyperedges(graph, categories)
    k = cfg.synth.n_clusters if cfg.synth.n_clusters <= hh.n_users else default_cluster_count(hh.n_users)
    clustering = kmeans(build_feature_matrix(hh), k, seeds["completion"], threads=cfg.threads)
    truth = [dataset.planted_labels[user] for user in graph.user_ids]
    return {
        "users": graph.n_users,
        "items": graph.n_items,
        "categories": categories.n_categories,
        "interactions": len(graph.edges),
        "densified_items": dataset.densified,
        "cluster_agreement": adjusted_rand_index(truth, clustering.assignment),
    }
