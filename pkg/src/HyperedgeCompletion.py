"""
Dynamic behavioral profiling: user feature construction, k-means clustering,
cluster-level item aggregation and probabilistic hyperedge generation.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import comb

from Errors import ConfigError, DataError
from HypergraphCore import HeteroHypergraph, Hyperedge

logger = logging.getLogger(__name__)

MAX_ITER = 100
SHIFT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class UserFeatureMatrix:
    """Row p is [aux features || binary interaction vector] of user p"""

    values: np.ndarray
    aux_width: int = 0

    @property
    def interactions(self) -> np.ndarray:
        return self.values[:, self.aux_width:]

    @property
    def aux(self) -> np.ndarray:
        return self.values[:, :self.aux_width]

    @property
    def n_users(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Clustering:
    k: int
    assignment: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


@dataclass(frozen=True)
class ClusterItemTable:
    """(cluster, category) -> union of the cluster members' items in that category"""

    entries: Dict[Tuple[int, int], FrozenSet[int]] = field(default_factory=dict)

    def get(self, cluster: int, category: int) -> FrozenSet[int]:
        return self.entries.get((cluster, category), frozenset())


@dataclass(frozen=True)
class CompletionRecord:
    user: int
    cluster: int
    category: int
    items: Tuple[int, ...]


@dataclass(frozen=True)
class CompletionReport:
    hypergraph: HeteroHypergraph
    sampled_users: Tuple[int, ...]
    added: Tuple[CompletionRecord, ...]

    @property
    def gain_bound(self) -> int:
        return len(self.sampled_users) * self.hypergraph.n_categories


def build_feature_matrix(
    hh: HeteroHypergraph,
    aux: Optional[np.ndarray] = None,
    standardize_aux: bool = False,
) -> UserFeatureMatrix:
    interactions = np.zeros((hh.n_users, hh.n_items), dtype=np.float64)
    for e in hh.hyperedges:
        interactions[e.user, list(e.items)] = 1.0

    if aux is None:
        aux = np.zeros((hh.n_users, 0), dtype=np.float64)
    aux = np.asarray(aux, dtype=np.float64)
    if aux.ndim != 2 or aux.shape[0] != hh.n_users:
        raise DataError(f"auxiliary features have shape {aux.shape}, expected {hh.n_users} rows")

    if standardize_aux and aux.shape[1]:
        std = aux.std(axis=0)
        aux = (aux - aux.mean(axis=0)) / np.where(std > 0, std, 1.0)

    return UserFeatureMatrix(np.hstack([aux, interactions]), aux_width=aux.shape[1])


def default_cluster_count(n_users: int) -> int:
    """round(sqrt(n)) clamped to [2, n]"""
    return min(max(int(math.floor(math.sqrt(n_users) + 0.5)), 2), n_users)


def _sq_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (x * x).sum(axis=1)[:, None] - 2.0 * x @ centroids.T + (centroids * centroids).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _assign(x: np.ndarray, centroids: np.ndarray, threads: int = 1) -> np.ndarray:
    if threads <= 1 or len(x) < 2 * threads:
        return np.argmin(_sq_distances(x, centroids), axis=1)
    chunks = np.array_split(np.arange(len(x)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda rows: np.argmin(_sq_distances(x[rows], centroids), axis=1), chunks)
    return np.concatenate(list(parts))


def _seed_centroids(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted (k-means++ style) seeding"""
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a centroid already
            remaining = np.setdiff1d(np.arange(n), chosen)
            pick = int(remaining[rng.integers(len(remaining))])
        chosen.append(pick)
        d2 = np.minimum(d2, ((x - x[pick]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _update_centroids(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    updated = centroids.copy()
    for cluster in range(len(centroids)):
        mask = labels == cluster
        if mask.any():
            updated[cluster] = x[mask].mean(axis=0)
    return updated


def _repair_empty(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Move the point farthest from its centroid into each empty cluster"""
    labels = labels.copy()
    centroids = centroids.copy()
    k = len(centroids)
    while True:
        sizes = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(sizes == 0)
        if not len(empty):
            return labels, centroids
        spread = ((x - centroids[labels]) ** 2).sum(axis=1)
        spread[sizes[labels] <= 1] = -1.0
        donor = int(np.argmax(spread))
        source = labels[donor]
        labels[donor] = empty[0]
        centroids[empty[0]] = x[donor]
        centroids[source] = x[labels == source].mean(axis=0)


def _hartigan_refine(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray, max_sweeps: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Single-point moves until none lowers the within-cluster sum of squares.
    Moving x from a to b changes the objective by
    n_b/(n_b+1)|x-mu_b|^2 - n_a/(n_a-1)|x-mu_a|^2.
    """
    labels = labels.copy()
    centroids = centroids.copy()
    sizes = np.bincount(labels, minlength=len(centroids)).astype(np.float64)
    for _ in range(max_sweeps):
        moved = False
        for p in range(len(x)):
            a = labels[p]
            if sizes[a] <= 1:
                continue
            d = ((centroids - x[p]) ** 2).sum(axis=1)
            removal = sizes[a] / (sizes[a] - 1.0) * d[a]
            insertion = sizes / (sizes + 1.0) * d
            insertion[a] = np.inf
            b = int(np.argmin(insertion))
            if insertion[b] < removal - 1e-12:
                centroids[a] = (sizes[a] * centroids[a] - x[p]) / (sizes[a] - 1.0)
                centroids[b] = (sizes[b] * centroids[b] + x[p]) / (sizes[b] + 1.0)
                sizes[a] -= 1.0
                sizes[b] += 1.0
                labels[p] = b
                moved = True
        if not moved:
            break
    # recompute exactly to shed incremental rounding
    return labels, _update_centroids(x, labels, centroids)


def _inertia(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(((x - centroids[labels]) ** 2).sum())


def _single_run(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int, tol: float, threads: int) -> Clustering:
    centroids = _seed_centroids(x, k, rng)
    labels = _assign(x, centroids, threads)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, centroids = _repair_empty(x, labels, centroids)
        updated = _update_centroids(x, labels, centroids)
        shift = float(np.abs(updated - centroids).max()) if updated.size else 0.0
        centroids = updated
        labels = _assign(x, centroids, threads)
        if shift < tol:
            break

    labels, centroids = _repair_empty(x, labels, centroids)
    centroids = _update_centroids(x, labels, centroids)
    labels, centroids = _hartigan_refine(x, labels, centroids, max_iter)
    return Clustering(k, labels, centroids, _inertia(x, labels, centroids), n_iter)


def kmeans(
    features: Union[UserFeatureMatrix, np.ndarray],
    k: int,
    seed: int,
    max_iter: int = MAX_ITER,
    tol: float = SHIFT_TOLERANCE,
    n_init: int = 1,
    threads: int = 1,
) -> Clustering:
    """Seeded k-means; the result is a local optimum under single-point moves"""
    x = np.asarray(features.values if isinstance(features, UserFeatureMatrix) else features, dtype=np.float64)
    n = len(x)
    if not 1 <= k <= n:
        raise DataError(f"cannot form {k} clusters from {n} users")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _single_run(x, k, rng, max_iter, tol, threads)
        if best is None or run.inertia < best.inertia:
            best = run
    logger.debug("k-means: k=%d inertia=%.6f after %d iterations", k, best.inertia, best.n_iter)
    return best


def adjusted_rand_index(labels_a: Sequence[int], labels_b: Sequence[int]) -> float:
    """Chance-corrected agreement of two partitions (1.0 = identical up to relabeling)"""
    table = pd.crosstab(np.asarray(labels_a), np.asarray(labels_b)).to_numpy()
    n = table.sum()
    pairs = comb(table, 2).sum()
    rows = comb(table.sum(axis=1), 2).sum()
    cols = comb(table.sum(axis=0), 2).sum()
    expected = rows * cols / comb(n, 2) if n > 1 else 0.0
    ceiling = (rows + cols) / 2.0
    if ceiling == expected:
        return 1.0
    return float((pairs - expected) / (ceiling - expected))


def aggregate_cluster_items(hh: HeteroHypergraph, cl: Clustering) -> ClusterItemTable:
    if len(cl.assignment) != hh.n_users:
        raise ValueError(f"clustering covers {len(cl.assignment)} users, hypergraph has {hh.n_users}")
    entries: Dict[Tuple[int, int], set] = {}
    for e in hh.hyperedges:
        entries.setdefault((int(cl.assignment[e.user]), e.category), set()).update(e.items)
    return ClusterItemTable({key: frozenset(items) for key, items in sorted(entries.items())})


def generate_completion(hh: HeteroHypergraph, cl: Clustering, rho: float, seed: int) -> CompletionReport:
    """
    Sample max(1, floor(rho*|U|)) users without replacement and give each one
    the cluster-level item set of every category its cluster touched, unless an
    identical triple already exists.
    """
    if not 0.0 < rho <= 1.0:
        raise ConfigError(f"completion rate must lie in (0, 1], got {rho}")
    if hh.n_users == 0:
        raise DataError("cannot complete a hypergraph without users")

    table = aggregate_cluster_items(hh, cl)
    n_sample = max(1, int(math.floor(rho * hh.n_users + 1e-9)))
    rng = np.random.default_rng(seed)
    sampled = np.sort(rng.choice(hh.n_users, size=n_sample, replace=False))

    existing = {e.key for e in hh.hyperedges}
    added_edges = []
    records = []
    for u in sampled:
        cluster = int(cl.assignment[u])
        for c in range(hh.n_categories):
            items = table.get(cluster, c)
            if not items:
                continue
            edge = Hyperedge(user=int(u), items=tuple(sorted(items)), category=c)
            if edge.key in existing:
                continue
            existing.add(edge.key)
            added_edges.append(edge)
            records.append(CompletionRecord(int(u), cluster, c, edge.items))

    logger.info(
        "completion sampled %d users and added %d hyperedges (bound %d)",
        n_sample, len(added_edges), n_sample * hh.n_categories,
    )
    return CompletionReport(hh.with_hyperedges(added_edges), tuple(int(u) for u in sampled), tuple(records))


def complete_hyperedges(hh: HeteroHypergraph, cl: Clustering, rho: float, seed: int) -> HeteroHypergraph:
    return generate_completion(hh, cl, rho, seed).hypergraph


def run_completion(
    hh: HeteroHypergraph,
    rho: float,
    seed: int,
    k_clusters: Optional[int] = None,
    aux: Optional[np.ndarray] = None,
    standardize_aux: bool = False,
    restarts: int = 1,
    threads: int = 1,
) -> Tuple[CompletionReport, Clustering]:
    """Steps 1-4 in one batch; re-run whenever the interaction log grows"""
    kmeans_seed, sample_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(2))
    features = build_feature_matrix(hh, aux, standardize_aux)
    k = k_clusters if k_clusters is not None else default_cluster_count(hh.n_users)
    if k > hh.n_users:
        raise DataError(f"completion.k_clusters={k} exceeds the {hh.n_users} users")
    clustering = kmeans(features, k, kmeans_seed, n_init=restarts, threads=threads)
    return generate_completion(hh, clustering, rho, sample_seed), clustering
