import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from Errors import EvaluationError
from HypergraphModel import ModelParams, score_items
from metrics.F1Metric import F1Metric
from metrics.MRRMetric import MRRMetric
from metrics.NDCGMetric import NDCGMetric
from metrics.PrecisionMetric import PrecisionMetric
from metrics.RecallMetric import RecallMetric

logger = logging.getLogger(__name__)

DEFAULT_KS = (5, 10, 15, 20)
METRIC_ORDER = ("P", "R", "nDCG", "MRR", "F1")


@dataclass(frozen=True)
class RankedList:
    """Top-K items of one user, best first; ties broken by ascending item index"""

    user: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.items)


@dataclass
class MetricsReport:
    ks: Tuple[int, ...]
    summary: Dict[int, Dict[str, float]]
    per_user: pd.DataFrame
    evaluated: int
    excluded: int = 0
    random_ndcg: Dict[int, float] = field(default_factory=dict)

    def value(self, metric: str, k: int) -> float:
        return self.summary[k][metric]

    def to_frame(self) -> pd.DataFrame:
        """Long format: K, metric, value"""
        rows = [(k, name, self.summary[k][name]) for k in self.ks for name in METRIC_ORDER]
        return pd.DataFrame(rows, columns=["K", "metric", "value"])

    def format_table(self) -> str:
        table = pd.DataFrame.from_dict(self.summary, orient="index")[list(METRIC_ORDER)]
        table.index.name = "K"
        if self.random_ndcg:
            table["random nDCG"] = pd.Series(self.random_ndcg)
        text = table.to_string(float_format=lambda v: f"{v:.4f}")
        return f"{text}\n\nusers evaluated: {self.evaluated}, excluded (no truth): {self.excluded}"


def rank_items(
    u: int,
    z_out: np.ndarray,
    params: ModelParams,
    exclude: Iterable[int],
    k: int,
) -> RankedList:
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    candidates = np.ones(params.n_items, dtype=bool)
    candidates[np.fromiter(exclude, dtype=np.int64)] = False
    candidates = np.flatnonzero(candidates)
    if not len(candidates):
        raise EvaluationError(f"user {u} has no candidate items left to rank")

    scores = score_items(z_out, u, params)[candidates]
    order = np.lexsort((candidates, -scores))[:k]
    return RankedList(user=u, items=candidates[order], scores=scores[order])


class Evaluator:
    """
    Runs every ranking metric at every K and macro-averages over the users
    that have at least one relevant item.
    """

    def __init__(self, ks: Sequence[int] = DEFAULT_KS, standard_recall: bool = False):
        if not ks or any(k < 1 for k in ks):
            raise ValueError(f"every K must be >= 1, got {ks}")
        self.ks = tuple(sorted(set(ks)))
        self.metrics = [
            PrecisionMetric(),
            RecallMetric(standard=standard_recall),
            NDCGMetric(),
            MRRMetric(),
        ]
        self.derived_metrics = [F1Metric()]

    def evaluate(self, lists: Mapping[int, RankedList], truth: Mapping[int, Set[int]]) -> MetricsReport:
        rows = []
        excluded = 0
        for user in sorted(lists):
            relevant = truth.get(user, set())
            if not relevant:
                excluded += 1
                continue
            ranked = lists[user].items
            hits = np.fromiter((i in relevant for i in ranked), dtype=bool, count=len(ranked))
            for k in self.ks:
                row = {"user": user, "K": k}
                for metric in self.metrics:
                    row[metric.name] = metric.per_user(hits, len(relevant), k)
                for metric in self.derived_metrics:
                    row[metric.name] = metric.derive(row)
                rows.append(row)

        if not rows:
            raise EvaluationError("no evaluated user has a relevant item")

        per_user = pd.DataFrame(rows, columns=["user", "K", *METRIC_ORDER])
        means = per_user.groupby("K")[[m.name for m in self.metrics]].mean()
        summary = {}
        for k in self.ks:
            values = {name: float(means.loc[k, name]) for name in means.columns}
            for metric in self.derived_metrics:
                values[metric.name] = metric.derive(values)
            summary[k] = values

        evaluated = per_user["user"].nunique()
        if excluded:
            logger.info("excluded %d users without relevant items", excluded)
        return MetricsReport(self.ks, summary, per_user, evaluated, excluded)


def compute_metrics(
    lists: Mapping[int, RankedList],
    truth: Mapping[int, Set[int]],
    ks: Sequence[int] = DEFAULT_KS,
    standard_recall: bool = False,
) -> MetricsReport:
    return Evaluator(ks, standard_recall).evaluate(lists, truth)


def expected_random_ndcg(n_candidates: int, n_relevant: int, k: int) -> float:
    """nDCG@K of a uniformly random ordering of the candidates, in expectation"""
    if n_candidates < 1 or n_relevant < 1:
        raise ValueError("need at least one candidate and one relevant item")
    depth = min(k, n_candidates)
    expected_dcg = n_relevant / n_candidates * float((1.0 / np.log2(np.arange(2, depth + 2))).sum())
    ideal = float((1.0 / np.log2(np.arange(2, min(k, n_relevant) + 2))).sum())
    return expected_dcg / ideal


def group_by_user(edges: Iterable[Tuple[int, int]]) -> Dict[int, Set[int]]:
    grouped: Dict[int, Set[int]] = {}
    for u, i in edges:
        grouped.setdefault(u, set()).add(i)
    return grouped


def evaluate_model(
    z_out: np.ndarray,
    params: ModelParams,
    train_edges: Iterable[Tuple[int, int]],
    truth_edges: Iterable[Tuple[int, int]],
    ks: Sequence[int] = DEFAULT_KS,
    standard_recall: bool = False,
) -> MetricsReport:
    """Rank every user with held-out interactions; training positives are excluded"""
    evaluator = Evaluator(ks, standard_recall)
    seen = group_by_user(train_edges)
    truth = group_by_user(truth_edges)
    depth = max(evaluator.ks)

    lists: Dict[int, RankedList] = {}
    for user in sorted(truth):
        lists[user] = rank_items(user, z_out, params, seen.get(user, ()), depth)

    report = evaluator.evaluate(lists, truth)
    report.excluded = params.n_users - report.evaluated

    for k in evaluator.ks:
        baselines = [
            expected_random_ndcg(params.n_items - len(seen.get(user, ())), len(truth[user]), k)
            for user in sorted(truth)
        ]
        report.random_ndcg[k] = float(np.mean(baselines))
    return report
