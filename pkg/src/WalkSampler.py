"""
Random walk with restart over the heterogeneous hypergraph.

A non-restart step picks an incident hyperedge with probability proportional
to its cardinality, then a vertex of that hyperedge other than the current one
with probability proportional to its degree. The visited vertices and the
traversed hyperedges of one walk form a sub-hypergraph view.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from Errors import DataError
from HypergraphCore import HeteroHypergraph, Hyperedge, VertexId

logger = logging.getLogger(__name__)

STATIONARY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class WalkConfig:
    m: int = 5
    steps: int = 15
    restart: float = 0.1
    min_nodes: int = 5
    seed: int = 0
    max_attempts: Optional[int] = None
    start_kind: Literal["any", "user"] = "any"
    threads: int = 1

    def __post_init__(self):
        if self.m < 1 or self.steps < 1 or self.min_nodes < 1:
            raise ValueError(f"walk needs m, steps and min_nodes >= 1, got {self.m}, {self.steps}, {self.min_nodes}")
        if not 0.0 <= self.restart <= 1.0:
            raise ValueError(f"restart probability must lie in [0, 1], got {self.restart}")

    @property
    def attempt_cap(self) -> int:
        return self.max_attempts if self.max_attempts is not None else 20 * self.m

    def reseeded(self, epoch: int) -> "WalkConfig":
        """Fresh view stream for per-epoch resampling"""
        seed = int(np.random.SeedSequence([self.seed, epoch]).generate_state(1)[0])
        return replace(self, seed=seed)

    @classmethod
    def from_section(cls, section, seed: int, threads: int = 1) -> "WalkConfig":
        return cls(
            m=section.views,
            steps=section.steps,
            restart=section.restart_prob,
            min_nodes=section.min_nodes,
            seed=seed,
            max_attempts=section.max_attempts,
            start_kind=section.start_kind,
            threads=threads,
        )


@dataclass(frozen=True)
class PickDistribution:
    support: np.ndarray
    probs: np.ndarray

    def as_dict(self):
        return {int(k): float(p) for k, p in zip(self.support, self.probs)}


@dataclass(frozen=True)
class SubHypergraphView:
    """Vertices are global ordinals; hyperedges index the parent hyperedge list"""

    start: int
    vertices: Tuple[int, ...]
    hyperedges: Tuple[int, ...]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def incidence(self, hh: HeteroHypergraph) -> sp.csr_matrix:
        return hh.restricted_incidence(self.hyperedges)

    def to_line(self, view_id: int) -> str:
        edges = ",".join(str(e) for e in self.hyperedges)
        return f"{view_id}\t{self.start}\t{self.n_vertices}\t{edges}"


@dataclass(frozen=True)
class ViewSet:
    views: Tuple[SubHypergraphView, ...]
    attempts: int
    rejected: int = 0

    @property
    def acceptance_rate(self) -> float:
        return len(self.views) / self.attempts if self.attempts else 0.0

    def __len__(self):
        return len(self.views)

    def __iter__(self):
        return iter(self.views)


def _as_ordinal(hh: HeteroHypergraph, v: Union[VertexId, int]) -> int:
    return hh.ordinal(v) if isinstance(v, VertexId) else int(v)


def _hyperedge_members(hh: HeteroHypergraph, e: Union[int, Hyperedge, Sequence[int]]) -> np.ndarray:
    if isinstance(e, Hyperedge):
        members = [e.user] + [hh.n_users + i for i in e.items] + [hh.n_users + hh.n_items + e.category]
        return np.asarray(members, dtype=np.int64)
    if isinstance(e, (int, np.integer)):
        return hh.members(int(e))
    return np.asarray(e, dtype=np.int64)


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    position = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(position, len(probs) - 1)


class HypergraphWalker:
    """Caches degrees and cardinalities of one hypergraph for repeated walks"""

    def __init__(self, hh: HeteroHypergraph):
        self.hh = hh
        self.vertex_degrees = hh.vertex_degrees.astype(np.float64)
        self.edge_sizes = hh.edge_degrees.astype(np.float64)

    def edge_distribution(self, v: int) -> PickDistribution:
        edges = self.hh.incident_edges(v)
        if not len(edges):
            raise ValueError(f"vertex {v} is isolated")
        weights = self.edge_sizes[edges]
        return PickDistribution(edges, weights / weights.sum())

    def node_distribution(self, members: np.ndarray, v: int) -> PickDistribution:
        if len(members) < 2:
            raise ValueError(f"hyperedge with {len(members)} vertex cannot be left")
        others = members[members != v]
        weights = self.vertex_degrees[others]
        return PickDistribution(others, weights / weights.sum())

    def step(self, v: int, rng: np.random.Generator) -> Tuple[int, int]:
        """One non-restart move; returns (hyperedge, next vertex)"""
        edges = self.edge_distribution(v)
        e = int(edges.support[_draw(edges.probs, rng)])
        nodes = self.node_distribution(self.hh.members(e), v)
        return e, int(nodes.support[_draw(nodes.probs, rng)])

    def walk(self, v0: int, steps: int, restart: float, rng: np.random.Generator) -> SubHypergraphView:
        if self.vertex_degrees[v0] == 0:
            raise ValueError(f"start vertex {v0} is isolated")
        visited = {v0}
        traversed = set()
        v = v0
        for _ in range(steps):
            if rng.random() < restart:
                v = v0
                continue
            e, v = self.step(v, rng)
            traversed.add(e)
            visited.add(v)
        return SubHypergraphView(v0, tuple(sorted(visited)), tuple(sorted(traversed)))


def hyperedge_pick_distribution(hh: HeteroHypergraph, v: Union[VertexId, int]) -> PickDistribution:
    return HypergraphWalker(hh).edge_distribution(_as_ordinal(hh, v))


def node_pick_distribution(
    hh: HeteroHypergraph,
    e: Union[int, Hyperedge, Sequence[int]],
    v: Union[VertexId, int],
) -> PickDistribution:
    return HypergraphWalker(hh).node_distribution(_hyperedge_members(hh, e), _as_ordinal(hh, v))


def random_walk(
    hh: HeteroHypergraph,
    cfg: WalkConfig,
    v0: Union[VertexId, int],
    rng: np.random.Generator,
) -> SubHypergraphView:
    return HypergraphWalker(hh).walk(_as_ordinal(hh, v0), cfg.steps, cfg.restart, rng)


def attempt_stream(seed: int, attempt: int) -> np.random.Generator:
    """Counter-based stream per attempt; independent of scheduling"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, attempt])))


def start_vertices(hh: HeteroHypergraph, start_kind: str = "any") -> np.ndarray:
    candidates = np.flatnonzero(hh.vertex_degrees > 0)
    if start_kind == "user":
        candidates = candidates[candidates < hh.n_users]
    return candidates


def sample_views(hh: HeteroHypergraph, cfg: WalkConfig) -> ViewSet:
    starts = start_vertices(hh, cfg.start_kind)
    if not len(starts):
        raise DataError(f"no non-isolated {cfg.start_kind} vertex to start a walk from")

    walker = HypergraphWalker(hh)

    def attempt(index: int) -> SubHypergraphView:
        rng = attempt_stream(cfg.seed, index)
        v0 = int(starts[rng.integers(len(starts))])
        return walker.walk(v0, cfg.steps, cfg.restart, rng)

    accepted: List[SubHypergraphView] = []
    attempts = 0
    batch = max(1, cfg.threads)
    pool = ThreadPoolExecutor(max_workers=batch) if batch > 1 else None
    try:
        while len(accepted) < cfg.m and attempts < cfg.attempt_cap:
            indices = range(attempts, min(attempts + batch, cfg.attempt_cap))
            results = list(pool.map(attempt, indices)) if pool else [attempt(i) for i in indices]
            for view in results:
                attempts += 1
                if view.n_vertices >= cfg.min_nodes:
                    accepted.append(view)
                    if len(accepted) == cfg.m:
                        break
    finally:
        if pool:
            pool.shutdown()

    rejected = attempts - len(accepted)
    if len(accepted) < cfg.m:
        rate = len(accepted) / attempts if attempts else 0.0
        raise DataError(
            f"only {len(accepted)} of {cfg.m} views reached {cfg.min_nodes} vertices "
            f"in {attempts} attempts (acceptance rate {rate:.3f})"
        )
    if rejected:
        logger.warning("rejected %d views below %d vertices", rejected, cfg.min_nodes)
    return ViewSet(tuple(accepted), attempts, rejected)


def transition_matrix(hh: HeteroHypergraph, alpha: float = 0.0, v0: Optional[int] = None) -> sp.csr_matrix:
    """
    P_next(v'|v) = alpha*[v' = v0] + (1 - alpha) * sum_e P(e|v) P(v'|e, v).
    Rows of isolated vertices are empty.
    """
    degrees = hh.vertex_degrees.astype(np.float64)
    sizes = hh.edge_degrees.astype(np.float64)
    size_mass = np.asarray(hh.incidence @ sizes).ravel()

    rows, cols, vals = [], [], []
    for e in range(hh.n_hyperedges):
        members = hh.members(e)
        degree_mass = degrees[members].sum()
        for v in members:
            p_edge = sizes[e] / size_mass[v]
            denom = degree_mass - degrees[v]
            for target in members:
                if target != v:
                    rows.append(v)
                    cols.append(target)
                    vals.append(p_edge * degrees[target] / denom)

    n = hh.n_vertices
    move = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    if alpha == 0.0:
        return move
    if v0 is None:
        raise ValueError("a restart probability needs a start vertex")
    live = (degrees > 0).astype(np.float64)
    restart = sp.csr_matrix((alpha * live, (np.arange(n), np.full(n, v0))), shape=(n, n))
    return ((1.0 - alpha) * move + restart).tocsr()


def stationary_distribution(
    hh: HeteroHypergraph,
    v0: Union[VertexId, int],
    alpha: float,
    tol: float = STATIONARY_TOLERANCE,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Power iteration from the start vertex until the max-norm change drops below tol"""
    start = _as_ordinal(hh, v0)
    if hh.vertex_degrees[start] == 0:
        raise ValueError(f"start vertex {start} is isolated")

    transposed = transition_matrix(hh, alpha, start).T.tocsr()
    pi = np.zeros(hh.n_vertices)
    pi[start] = 1.0
    for _ in range(max_iter):
        updated = transposed @ pi
        if np.abs(updated - pi).max() < tol:
            return updated
        pi = updated
    logger.warning("power iteration stopped after %d iterations without converging", max_iter)
    return pi


def expected_unique_nodes(pi: np.ndarray, steps: int) -> float:
    """sum_v 1 - (1 - pi_v)^L, assuming visits are roughly independent across steps"""
    pi = np.asarray(pi, dtype=np.float64)
    if (pi < 0).any() or abs(pi.sum() - 1.0) > 1e-9:
        raise ValueError(f"not a probability vector (sum {pi.sum()})")
    return float(np.sum(1.0 - (1.0 - pi) ** steps))
