import logging
from typing import List, Tuple

import numpy as np

from Evaluator import RankedList, compute_metrics
from HyperedgeBuilder import build_hyperedges, category_pairs, reconstruct_interactions
from HyperedgeCompletion import (
    ClusterItemTable,
    CompletionReport,
    aggregate_cluster_items,
    generate_completion,
    kmeans,
    build_feature_matrix,
)
from HypergraphCore import BipartiteGraph, CategoryMap, HeteroHypergraph, InteractionRecord, build_bipartite
from WalkSampler import HypergraphWalker, ViewSet

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-4


class ValidationResult:
    def __init__(self):
        self.errors = []
        self.warnings = []
        self.is_valid = True
        self.checks = 0

    def add_error(self, message: str):
        self.errors.append(message)
        self.is_valid = False

    def add_warning(self, message: str):
        self.warnings.append(message)

    def check(self, condition: bool, message: str):
        self.checks += 1
        if not condition:
            self.add_error(message)

    def merge(self, other: "ValidationResult") -> "ValidationResult":
        self.checks += other.checks
        self.warnings.extend(other.warnings)
        for message in other.errors:
            self.add_error(message)
        return self

    def summary(self) -> str:
        status = "OK" if self.is_valid else "FAILED"
        return f"{status}: {self.checks} checks, {len(self.errors)} errors, {len(self.warnings)} warnings"


class HypergraphValidator:
    """Property checks on constructed and completed hypergraphs"""

    @staticmethod
    def validate_construction(g: BipartiteGraph, cm: CategoryMap, hh: HeteroHypergraph) -> ValidationResult:
        result = ValidationResult()

        expected = set(category_pairs(g, cm))
        actual = {(e.user, e.category) for e in hh.hyperedges}
        result.check(actual <= expected, f"hyperedges without a backing interaction: {sorted(actual - expected)[:5]}")
        result.check(expected <= actual, f"interactions without a hyperedge: {sorted(expected - actual)[:5]}")
        result.check(
            hh.n_hyperedges <= g.n_users * cm.n_categories,
            f"{hh.n_hyperedges} hyperedges exceed the bound {g.n_users * cm.n_categories}",
        )
        result.check(reconstruct_interactions(hh) == g.edges, "hyperedges do not reconstruct the interactions")
        result.check(
            list(hh.hyperedges) == sorted(hh.hyperedges, key=lambda e: (e.user, e.category)),
            "hyperedges are not ordered by (user, category)",
        )
        for e in hh.hyperedges:
            if any(e.category not in cm.categories_of(i) for i in e.items):
                result.add_error(f"hyperedge {e.key} holds an item outside its category")
        result.check(
            hh.vertex_degrees.sum() == hh.edge_degrees.sum(),
            "vertex and hyperedge degree sums differ",
        )
        return result

    @staticmethod
    def validate_completion(
        before: HeteroHypergraph,
        report: CompletionReport,
        table: ClusterItemTable,
    ) -> ValidationResult:
        result = ValidationResult()
        after = report.hypergraph
        result.check(
            after.hyperedges[:before.n_hyperedges] == before.hyperedges,
            "completion did not preserve the original hyperedges",
        )
        gained = after.n_hyperedges - before.n_hyperedges
        bound = len(report.sampled_users) * before.n_categories
        result.check(gained <= bound, f"completion added {gained} hyperedges, bound is {bound}")
        result.check(gained == len(report.added), "completion report disagrees with the hypergraph")
        for record in report.added:
            result.check(
                frozenset(record.items) == table.get(record.cluster, record.category),
                f"added hyperedge for user {record.user} is not its cluster's item set",
            )
        return result

    @staticmethod
    def validate_walk_distributions(hh: HeteroHypergraph) -> ValidationResult:
        result = ValidationResult()
        walker = HypergraphWalker(hh)
        for v in np.flatnonzero(hh.vertex_degrees > 0):
            edges = walker.edge_distribution(int(v))
            result.check(abs(edges.probs.sum() - 1.0) <= 1e-12, f"hyperedge pick at vertex {v} does not sum to 1")
            for e in edges.support:
                nodes = walker.node_distribution(hh.members(int(e)), int(v))
                result.check(
                    abs(nodes.probs.sum() - 1.0) <= 1e-12,
                    f"vertex pick in hyperedge {e} from {v} does not sum to 1",
                )
        return result

    @staticmethod
    def validate_views(hh: HeteroHypergraph, views: ViewSet, min_nodes: int) -> ValidationResult:
        result = ValidationResult()
        for index, view in enumerate(views):
            result.check(view.n_vertices >= min_nodes, f"view {index} has {view.n_vertices} < {min_nodes} vertices")
            result.check(view.start in view.vertices, f"view {index} lost its start vertex")
            covered = {int(v) for e in view.hyperedges for v in hh.members(e)}
            stray = set(view.vertices) - covered - {view.start}
            result.check(not stray, f"view {index} holds vertices outside its hyperedges: {sorted(stray)[:5]}")
        return result


def random_instance(
    rng: np.random.Generator,
    max_users: int = 40,
    max_items: int = 60,
    max_categories: int = 5,
) -> Tuple[List[InteractionRecord], List[Tuple[str, str]]]:
    """Random interaction log where every user and every item has an interaction"""
    n_users = int(rng.integers(1, max_users + 1))
    n_items = int(rng.integers(1, max_items + 1))
    n_categories = int(rng.integers(1, max_categories + 1))
    density = rng.uniform(0.02, 0.3)

    pairs = {(u, i) for u in range(n_users) for i in range(n_items) if rng.random() < density}
    pairs |= {(u, int(rng.integers(n_items))) for u in range(n_users)}
    pairs |= {(int(rng.integers(n_users)), i) for i in range(n_items)}
    records = [InteractionRecord(f"u{u}", f"i{i}") for u, i in sorted(pairs)]
    categories = [(f"i{i}", f"c{int(rng.integers(n_categories))}") for i in range(n_items)]
    return records, categories


def _check_structures(result: ValidationResult, instances: int, seeds: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        records, pairs = random_instance(rng)
        g = build_bipartite(records)
        cm = CategoryMap.from_pairs(g.item_ids, pairs)
        hh = build_hyperedges(g, cm)
        result.merge(HypergraphValidator.validate_construction(g, cm, hh))
        result.merge(HypergraphValidator.validate_walk_distributions(hh))

        k = int(rng.integers(1, hh.n_users + 1))
        clustering = kmeans(build_feature_matrix(hh), k, int(rng.integers(2**31)))
        table = aggregate_cluster_items(hh, clustering)
        for completion_seed in range(seeds):
            rho = float(rng.uniform(0.01, 1.0))
            report = generate_completion(hh, clustering, rho, completion_seed)
            result.merge(HypergraphValidator.validate_completion(hh, report, table))


def _check_metrics(result: ValidationResult, seed: int, instances: int = 100):
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        n_users, n_items = int(rng.integers(1, 11)), int(rng.integers(2, 21))
        lists, truth = {}, {}
        for u in range(n_users):
            order = rng.permutation(n_items)
            lists[u] = RankedList(u, order, np.linspace(1.0, 0.0, n_items))
            truth[u] = set(rng.choice(n_items, size=int(rng.integers(1, n_items + 1)), replace=False).tolist())
        report = compute_metrics(lists, truth, ks=range(1, n_items + 1))
        for k in report.ks:
            values = report.summary[k]
            result.check(all(0.0 <= v <= 1.0 for v in values.values()), f"metric outside [0, 1] at K={k}")
            p, r, f1 = values["P"], values["R"], values["F1"]
            if p + r > 0:
                result.check(abs(f1 * (p + r) - 2 * p * r) <= 1e-12, f"F1 identity fails at K={k}")
        # nDCG can only drop while K < |T(u)| since the ideal gain still grows there
        for user, rows in report.per_user.groupby("user"):
            saturated = rows[rows["K"] >= len(truth[user])]["nDCG"].to_numpy()
            result.check(bool(np.all(np.diff(saturated) >= -1e-12)), f"nDCG decreases in K for user {user}")


def gradient_instance(seed: int = 0, margin: float = 1e-3, attempts: int = 50):
    """12-vertex instance (3 users, 7 items, 2 categories), d=4, two views, two layers"""
    from HypergraphModel import forward, params_for
    from Trainer import sample_triplets
    from WalkSampler import WalkConfig, sample_views

    records = [
        InteractionRecord(u, i)
        for u, items in (("u0", "i0 i1 i2"), ("u1", "i2 i3 i4"), ("u2", "i4 i5 i6 i0"))
        for i in items.split()
    ]
    g = build_bipartite(records)
    cm = CategoryMap.from_pairs(g.item_ids, [(f"i{i}", "c0" if i < 4 else "c1") for i in range(7)])
    hh = build_hyperedges(g, cm)
    for attempt in range(attempts):
        trial = seed + attempt
        views = sample_views(hh, WalkConfig(m=2, steps=15, restart=0.1, min_nodes=3, seed=trial))
        params = params_for(hh, dim=4, layers=2, seed=trial)
        if forward(params, views.views, hh).min_relu_margin() > margin:
            triplets = sample_triplets(g.edges, g.edges, hh.n_items, 1, 0, trial)
            return hh, params, views, triplets
    raise RuntimeError(f"no instance with ReLU margin above {margin} in {attempts} seeds")


def _check_gradients(result: ValidationResult, seed: int):
    from Trainer import gradient_check

    hh, params, views, triplets = gradient_instance(seed)
    for raw in (False, True):
        errors = gradient_check(params, views.views, triplets, reg=1e-3, raw_logit_bpr=raw, hh=hh)
        for name, error in errors.items():
            result.check(
                error < GRADIENT_TOLERANCE,
                f"gradient of {name} off by {error:.2e} (raw_logit_bpr={raw})",
            )


def run_property_suite(seed: int = 0, instances: int = 100, seeds_per_instance: int = 20) -> ValidationResult:
    """Construction, completion, walk, metric and gradient checks on random instances"""
    result = ValidationResult()
    logger.info("Step 1: construction, completion and walk properties on %d instances", instances)
    _check_structures(result, instances, seeds_per_instance, seed)
    logger.info("Step 2: metric identities")
    _check_metrics(result, seed)
    logger.info("Step 3: finite-difference gradient check")
    _check_gradients(result, seed)
    logger.info(result.summary())
    return result
