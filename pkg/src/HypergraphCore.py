from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from Errors import DataError


class VertexKind(Enum):
    USER = "user"
    ITEM = "item"
    CATEGORY = "category"


@dataclass(frozen=True)
class VertexId:
    kind: VertexKind
    index: int


@dataclass(frozen=True)
class InteractionRecord:
    """One line of the interaction log, still carrying external ids"""

    user: str
    item: str
    timestamp: Optional[int] = None


@dataclass(frozen=True)
class IdMap:
    """Dense ordinal <-> external id, one block per vertex kind"""

    users: Tuple[str, ...] = ()
    items: Tuple[str, ...] = ()
    categories: Tuple[str, ...] = ()

    def block(self, kind: VertexKind) -> Tuple[str, ...]:
        return {
            VertexKind.USER: self.users,
            VertexKind.ITEM: self.items,
            VertexKind.CATEGORY: self.categories,
        }[kind]

    @cached_property
    def _lookup(self) -> Dict[VertexKind, Dict[str, int]]:
        return {kind: {ext: i for i, ext in enumerate(self.block(kind))} for kind in VertexKind}

    def ordinal(self, kind: VertexKind, external_id: str) -> int:
        try:
            return self._lookup[kind][external_id]
        except KeyError:
            raise DataError(f"unknown {kind.value} id '{external_id}'") from None

    def external(self, kind: VertexKind, index: int) -> str:
        return self.block(kind)[index]

    def rows(self) -> List[Tuple[str, str, int]]:
        """(kind, external_id, ordinal) rows in persisted order"""
        return [(kind.value, ext, i) for kind in VertexKind for i, ext in enumerate(self.block(kind))]

    @classmethod
    def from_rows(cls, rows: Iterable[Tuple[str, str, int]]) -> "IdMap":
        blocks: Dict[VertexKind, Dict[int, str]] = {kind: {} for kind in VertexKind}
        for kind, ext, ordinal in rows:
            blocks[VertexKind(kind)][int(ordinal)] = ext
        ordered = {}
        for kind, block in blocks.items():
            if sorted(block) != list(range(len(block))):
                raise DataError(f"id map ordinals for {kind.value} are not dense")
            ordered[kind] = tuple(block[i] for i in range(len(block)))
        return cls(ordered[VertexKind.USER], ordered[VertexKind.ITEM], ordered[VertexKind.CATEGORY])


@dataclass(frozen=True)
class BipartiteGraph:
    """Observed user-item interactions; duplicates collapsed"""

    user_ids: Tuple[str, ...]
    item_ids: Tuple[str, ...]
    edges: FrozenSet[Tuple[int, int]]

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @cached_property
    def adjacency(self) -> Tuple[Tuple[int, ...], ...]:
        per_user: List[List[int]] = [[] for _ in range(self.n_users)]
        for u, i in self.edges:
            per_user[u].append(i)
        return tuple(tuple(sorted(items)) for items in per_user)

    def sorted_edges(self) -> List[Tuple[int, int]]:
        return sorted(self.edges)

    def matrix(self) -> sp.csr_matrix:
        """Interaction matrix B (users x items)"""
        if not self.edges:
            return sp.csr_matrix((self.n_users, self.n_items), dtype=np.int8)
        rows, cols = zip(*self.sorted_edges())
        data = np.ones(len(rows), dtype=np.int8)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_users, self.n_items))

    def restrict(self, edges: Iterable[Tuple[int, int]]) -> "BipartiteGraph":
        """Same id spaces, subset of the edges (e.g. the training split)"""
        subset = frozenset(edges)
        if not subset <= self.edges:
            raise ValueError("restricted edge set must be a subset of the graph's edges")
        return BipartiteGraph(self.user_ids, self.item_ids, subset)


@dataclass(frozen=True)
class CategoryMap:
    """item ordinal -> category ordinals (exactly one unless multi-category mode)"""

    category_ids: Tuple[str, ...]
    item_categories: Dict[int, Tuple[int, ...]]
    ignored_rows: int = 0

    @property
    def n_categories(self) -> int:
        return len(self.category_ids)

    def categories_of(self, item: int) -> Tuple[int, ...]:
        return self.item_categories.get(item, ())

    def category_of(self, item: int) -> int:
        cats = self.categories_of(item)
        if len(cats) != 1:
            raise DataError(f"item {item} has {len(cats)} categories, expected exactly one")
        return cats[0]

    @classmethod
    def from_pairs(
        cls,
        item_ids: Sequence[str],
        pairs: Iterable[Tuple[str, str]],
        multi_category: bool = False,
    ) -> "CategoryMap":
        """Build from (item_id, category_id) rows; rows for unknown items are ignored"""
        item_index = {ext: i for i, ext in enumerate(item_ids)}
        category_index: Dict[str, int] = {}
        mapping: Dict[int, List[int]] = {}
        ignored = 0

        for item_ext, cat_ext in pairs:
            item = item_index.get(item_ext)
            if item is None:
                ignored += 1
                continue
            if item in mapping and not multi_category:
                if category_index.get(cat_ext) in mapping[item]:
                    continue
                raise DataError(
                    f"item '{item_ext}' has more than one category row; "
                    "enable ingest.multi_category to accept this"
                )
            cat = category_index.setdefault(cat_ext, len(category_index))
            if cat not in mapping.setdefault(item, []):
                mapping[item].append(cat)

        category_ids = tuple(sorted(category_index, key=category_index.get))
        return cls(
            category_ids=category_ids,
            item_categories={i: tuple(sorted(c)) for i, c in mapping.items()},
            ignored_rows=ignored,
        )


@dataclass(frozen=True, order=True)
class Hyperedge:
    """Canonical (user, sorted item set, category) triple"""

    user: int
    items: Tuple[int, ...]
    category: int

    def __post_init__(self):
        if not self.items:
            raise ValueError(f"hyperedge for user {self.user} has an empty item set")
        if any(a >= b for a, b in zip(self.items, self.items[1:])):
            raise ValueError(f"hyperedge items must be strictly ascending, got {self.items}")

    @property
    def key(self) -> Tuple[int, Tuple[int, ...], int]:
        return (self.user, self.items, self.category)

    @property
    def size(self) -> int:
        return len(self.items) + 2


@dataclass(frozen=True)
class HeteroHypergraph:
    """
    Users, items and categories share one global ordinal space laid out as
    user block, then item block, then category block.
    """

    ids: IdMap
    hyperedges: Tuple[Hyperedge, ...] = field(default=())

    def __post_init__(self):
        seen = set()
        for e in self.hyperedges:
            if e.key in seen:
                raise ValueError(f"duplicate hyperedge {e.key}")
            if not (0 <= e.user < self.n_users and 0 <= e.category < self.n_categories):
                raise ValueError(f"hyperedge {e.key} references a vertex outside the id map")
            if e.items[-1] >= self.n_items or e.items[0] < 0:
                raise ValueError(f"hyperedge {e.key} references an item outside the id map")
            seen.add(e.key)

    @property
    def n_users(self) -> int:
        return len(self.ids.users)

    @property
    def n_items(self) -> int:
        return len(self.ids.items)

    @property
    def n_categories(self) -> int:
        return len(self.ids.categories)

    @property
    def n_vertices(self) -> int:
        return self.n_users + self.n_items + self.n_categories

    @property
    def n_hyperedges(self) -> int:
        return len(self.hyperedges)

    def ordinal(self, v: VertexId) -> int:
        offset = {
            VertexKind.USER: 0,
            VertexKind.ITEM: self.n_users,
            VertexKind.CATEGORY: self.n_users + self.n_items,
        }[v.kind]
        if not 0 <= v.index < len(self.ids.block(v.kind)):
            raise ValueError(f"{v.kind.value} index {v.index} out of range")
        return offset + v.index

    def vertex(self, ordinal: int) -> VertexId:
        if ordinal < 0 or ordinal >= self.n_vertices:
            raise ValueError(f"vertex ordinal {ordinal} out of range")
        if ordinal < self.n_users:
            return VertexId(VertexKind.USER, ordinal)
        if ordinal < self.n_users + self.n_items:
            return VertexId(VertexKind.ITEM, ordinal - self.n_users)
        return VertexId(VertexKind.CATEGORY, ordinal - self.n_users - self.n_items)

    def members(self, e: int) -> np.ndarray:
        """Global ordinals of hyperedge e, ascending"""
        h = self.edge_major
        return h.indices[h.indptr[e]:h.indptr[e + 1]]

    def incident_edges(self, v: int) -> np.ndarray:
        h = self.incidence
        return h.indices[h.indptr[v]:h.indptr[v + 1]]

    @cached_property
    def edge_major(self) -> sp.csr_matrix:
        """H^T: one row per hyperedge"""
        indptr = [0]
        indices: List[int] = []
        item_offset = self.n_users
        cat_offset = self.n_users + self.n_items
        for e in self.hyperedges:
            indices.append(e.user)
            indices.extend(item_offset + i for i in e.items)
            indices.append(cat_offset + e.category)
            indptr.append(len(indices))
        data = np.ones(len(indices), dtype=np.float64)
        return sp.csr_matrix(
            (data, np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
            shape=(self.n_hyperedges, self.n_vertices),
        )

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """H: one row per vertex, one column per hyperedge"""
        h = self.edge_major.T.tocsr()
        h.sort_indices()
        return h

    @cached_property
    def vertex_degrees(self) -> np.ndarray:
        return np.diff(self.incidence.indptr).astype(np.int64)

    @cached_property
    def edge_degrees(self) -> np.ndarray:
        return np.diff(self.edge_major.indptr).astype(np.int64)

    def restricted_incidence(self, edges: Sequence[int]) -> sp.csr_matrix:
        """Incidence with only the given hyperedge columns, in the given order"""
        return self.edge_major[np.asarray(edges, dtype=np.int64)].T.tocsr()

    def with_hyperedges(self, extra: Iterable[Hyperedge]) -> "HeteroHypergraph":
        return HeteroHypergraph(self.ids, self.hyperedges + tuple(extra))

    def to_lines(self) -> List[str]:
        """u<TAB>c<TAB>i1,i2,... with external ids, in hyperedge order"""
        lines = []
        for e in self.hyperedges:
            items = ",".join(self.ids.items[i] for i in e.items)
            lines.append(f"{self.ids.users[e.user]}\t{self.ids.categories[e.category]}\t{items}")
        return lines

    @classmethod
    def from_lines(cls, lines: Iterable[str], ids: IdMap) -> "HeteroHypergraph":
        hyperedges = []
        for line in lines:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"malformed hyperedge line: '{line}'")
            user_ext, cat_ext, items_ext = parts
            items = tuple(sorted(ids.ordinal(VertexKind.ITEM, i) for i in items_ext.split(",")))
            hyperedges.append(Hyperedge(
                user=ids.ordinal(VertexKind.USER, user_ext),
                items=items,
                category=ids.ordinal(VertexKind.CATEGORY, cat_ext),
            ))
        return cls(ids, tuple(hyperedges))

    def statistics(self, n_interactions: Optional[int] = None) -> Dict[str, float]:
        """Per-dataset summary: sizes and hyperedge-degree profile"""
        degrees = self.edge_degrees
        return {
            "interactions": n_interactions if n_interactions is not None else len(interaction_pairs(self)),
            "vertices": self.n_vertices,
            "users": self.n_users,
            "items": self.n_items,
            "categories": self.n_categories,
            "hyperedges": self.n_hyperedges,
            "avg_hyperedge_degree": float(degrees.mean()) if len(degrees) else 0.0,
            "max_hyperedge_degree": int(degrees.max()) if len(degrees) else 0,
            "min_hyperedge_degree": int(degrees.min()) if len(degrees) else 0,
        }


def interaction_pairs(hh: HeteroHypergraph) -> FrozenSet[Tuple[int, int]]:
    return frozenset((e.user, i) for e in hh.hyperedges for i in e.items)


def build_bipartite(records: Sequence[InteractionRecord]) -> BipartiteGraph:
    """
    Dense re-indexing in first-appearance order. Records are stable-sorted by
    timestamp; records without one come first, in file order.
    """
    if not records:
        raise DataError("no interactions")

    ordered = sorted(
        records,
        key=lambda r: (r.timestamp is not None, r.timestamp if r.timestamp is not None else 0),
    )
    users: Dict[str, int] = {}
    items: Dict[str, int] = {}
    edges = set()
    for record in ordered:
        u = users.setdefault(record.user, len(users))
        i = items.setdefault(record.item, len(items))
        edges.add((u, i))

    return BipartiteGraph(
        user_ids=tuple(users),
        item_ids=tuple(items),
        edges=frozenset(edges),
    )


def degrees(g: HeteroHypergraph) -> Tuple[np.ndarray, np.ndarray]:
    """(d(v), d(e)): row and column sums of the incidence matrix"""
    return g.vertex_degrees, g.edge_degrees
