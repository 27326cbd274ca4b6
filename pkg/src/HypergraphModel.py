"""
Multi-view hypergraph convolution with attention fusion.

Each view restricts the incidence matrix to its hyperedges but keeps the
global vertex space, so every view embedding has one row per vertex.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from HypergraphCore import HeteroHypergraph, VertexId, VertexKind
from WalkSampler import SubHypergraphView

logger = logging.getLogger(__name__)


@dataclass
class ModelParams:
    embeddings: np.ndarray
    w_edge: List[np.ndarray]
    w_node: List[np.ndarray]
    w_att: np.ndarray
    b_att: np.ndarray
    w_linear: np.ndarray
    b_linear: np.ndarray
    user_bias: np.ndarray
    item_bias: np.ndarray

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def layers(self) -> int:
        return len(self.w_edge)

    @property
    def n_vertices(self) -> int:
        return self.embeddings.shape[0]

    @property
    def n_users(self) -> int:
        return len(self.user_bias)

    @property
    def n_items(self) -> int:
        return len(self.item_bias)

    @property
    def dtype(self):
        return self.embeddings.dtype

    def tensors(self) -> Dict[str, np.ndarray]:
        named = {"embeddings": self.embeddings}
        named.update({f"w_edge.{l}": w for l, w in enumerate(self.w_edge)})
        named.update({f"w_node.{l}": w for l, w in enumerate(self.w_node)})
        named.update({
            "w_att": self.w_att,
            "b_att": self.b_att,
            "w_linear": self.w_linear,
            "b_linear": self.b_linear,
            "user_bias": self.user_bias,
            "item_bias": self.item_bias,
        })
        return named

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray]) -> "ModelParams":
        layers = sum(1 for name in tensors if name.startswith("w_edge."))
        return cls(
            embeddings=tensors["embeddings"],
            w_edge=[tensors[f"w_edge.{l}"] for l in range(layers)],
            w_node=[tensors[f"w_node.{l}"] for l in range(layers)],
            w_att=tensors["w_att"],
            b_att=tensors["b_att"],
            w_linear=tensors["w_linear"],
            b_linear=tensors["b_linear"],
            user_bias=tensors["user_bias"],
            item_bias=tensors["item_bias"],
        )

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ModelParams":
        return ModelParams.from_tensors({name: fn(t) for name, t in self.tensors().items()})

    def zip_map(self, other: "ModelParams", fn) -> "ModelParams":
        theirs = other.tensors()
        return ModelParams.from_tensors({name: fn(t, theirs[name]) for name, t in self.tensors().items()})

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def squared_norm(self) -> float:
        return float(sum(np.sum(t * t) for t in self.tensors().values()))

    def is_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors().values())


def init_params(
    n_users: int,
    n_items: int,
    n_categories: int,
    dim: int,
    layers: int,
    seed: int,
    dtype=np.float64,
) -> ModelParams:
    """Weights uniform in +-1/sqrt(fan_in), biases zero"""
    rng = np.random.default_rng(seed)
    n_vertices = n_users + n_items + n_categories

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    return ModelParams(
        embeddings=uniform((n_vertices, dim), dim),
        w_edge=[uniform((dim, dim), dim) for _ in range(layers)],
        w_node=[uniform((dim, dim), dim) for _ in range(layers)],
        w_att=uniform((2 * dim,), 2 * dim),
        b_att=np.zeros(1, dtype=dtype),
        w_linear=uniform((dim, dim), dim),
        b_linear=np.zeros(dim, dtype=dtype),
        user_bias=np.zeros(n_users, dtype=dtype),
        item_bias=np.zeros(n_items, dtype=dtype),
    )


def params_for(hh: HeteroHypergraph, dim: int, layers: int, seed: int, dtype=np.float64) -> ModelParams:
    return init_params(hh.n_users, hh.n_items, hh.n_categories, dim, layers, seed, dtype)


@dataclass
class ConvCache:
    x: np.ndarray
    incidence: sp.csr_matrix
    a: np.ndarray
    ae: np.ndarray
    b: np.ndarray
    p: np.ndarray
    out: np.ndarray


@dataclass
class ViewPass:
    incidence: sp.csr_matrix
    layers: List[ConvCache]
    z: np.ndarray


@dataclass
class FusionCache:
    views: List[np.ndarray]
    q: np.ndarray
    scores: np.ndarray
    alpha: np.ndarray
    z_fused: np.ndarray
    z_out: np.ndarray


@dataclass
class ForwardPass:
    views: List[ViewPass]
    fusion: Optional[FusionCache]

    def has_intermediates(self, layers: int) -> bool:
        """Every view kept its per-layer caches and the fusion step kept its own"""
        if self.fusion is None or not self.views or len(self.fusion.views) != len(self.views):
            return False
        return all(len(view.layers) == layers for view in self.views)

    @property
    def z_out(self) -> np.ndarray:
        return self.fusion.z_out

    @property
    def alpha(self) -> np.ndarray:
        return self.fusion.alpha

    def min_relu_margin(self) -> float:
        """Smallest nonzero |pre-activation|; finite differences are unreliable near 0"""
        margins = []
        for view in self.views:
            for layer in view.layers:
                for pre in (layer.ae, layer.p):
                    nonzero = np.abs(pre[pre != 0])
                    if nonzero.size:
                        margins.append(nonzero.min())
        return float(min(margins)) if margins else float("inf")


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def _check_layer_shapes(x: np.ndarray, h: sp.spmatrix, w_edge: np.ndarray, w_node: np.ndarray):
    d = x.shape[1]
    if h.shape[0] != x.shape[0]:
        raise ValueError(f"incidence has {h.shape[0]} rows, embeddings have {x.shape[0]}")
    if w_edge.shape != (d, d) or w_node.shape != (d, d):
        raise ValueError(f"layer weights must be {d}x{d}, got {w_edge.shape} and {w_node.shape}")


def conv_forward(x: np.ndarray, h: sp.spmatrix, w_edge: np.ndarray, w_node: np.ndarray) -> ConvCache:
    _check_layer_shapes(x, h, w_edge, w_node)
    h = sp.csr_matrix(h, dtype=x.dtype)
    a = np.asarray(h.T @ x)
    ae = a @ w_edge
    b = _relu(ae)
    n = np.asarray(h @ b)
    p = x @ w_node + n
    return ConvCache(x=x, incidence=h, a=a, ae=ae, b=b, p=p, out=_relu(p))


def conv_layer(x: np.ndarray, h: sp.spmatrix, w_edge: np.ndarray, w_node: np.ndarray) -> np.ndarray:
    """X' = ReLU(X W_node + H ReLU(H^T X W_edge))"""
    return conv_forward(x, h, w_edge, w_node).out


def conv_backward(cache: ConvCache, grad_out: np.ndarray, w_edge: np.ndarray, w_node: np.ndarray):
    """Returns (dX, dW_edge, dW_node)"""
    grad_p = grad_out * (cache.p > 0)
    grad_w_node = cache.x.T @ grad_p
    grad_x = grad_p @ w_node.T
    grad_b = np.asarray(cache.incidence.T @ grad_p)
    grad_ae = grad_b * (cache.ae > 0)
    grad_w_edge = cache.a.T @ grad_ae
    grad_x = grad_x + np.asarray(cache.incidence @ (grad_ae @ w_edge.T))
    return grad_x, grad_w_edge, grad_w_node


def _view_incidence(view, hh: Optional[HeteroHypergraph]) -> sp.csr_matrix:
    if isinstance(view, SubHypergraphView):
        if hh is None:
            raise ValueError("a sub-hypergraph view needs its parent hypergraph")
        return view.incidence(hh)
    return sp.csr_matrix(view)


def encode_view_pass(view, params: ModelParams, hh: Optional[HeteroHypergraph] = None) -> ViewPass:
    h = _view_incidence(view, hh)
    x = params.embeddings
    layers = []
    for w_edge, w_node in zip(params.w_edge, params.w_node):
        cache = conv_forward(x, h, w_edge, w_node)
        layers.append(cache)
        x = cache.out
    return ViewPass(incidence=h, layers=layers, z=x)


def encode_view(view, params: ModelParams, hh: Optional[HeteroHypergraph] = None) -> np.ndarray:
    """L_c convolution layers from X0 over the view's incidence"""
    return encode_view_pass(view, params, hh).z


def fuse_forward(views: Sequence[np.ndarray], params: ModelParams) -> FusionCache:
    if not len(views):
        raise ValueError("attention fusion needs at least one view")
    d = params.dim
    stack = np.stack(views)
    if stack.shape[1:] != (params.n_vertices, d):
        raise ValueError(f"view embeddings must be {params.n_vertices}x{d}, got {stack.shape[1:]}")

    w_q, w_z = params.w_att[:d], params.w_att[d:]
    q = stack.mean(axis=1)
    scores = (q @ w_q)[:, None] + stack @ w_z + params.b_att[0]
    # log-sum-exp across views, per vertex
    shifted = scores - scores.max(axis=0, keepdims=True)
    weights = np.exp(shifted)
    alpha = weights / weights.sum(axis=0, keepdims=True)

    z_fused = np.einsum("mv,mvd->vd", alpha, stack)
    z_out = z_fused @ params.w_linear.T + params.b_linear
    return FusionCache(views=list(views), q=q, scores=scores, alpha=alpha, z_fused=z_fused, z_out=z_out)


def attention_fuse(views: Sequence[np.ndarray], params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """(Z_out, alpha) with alpha of shape m x |V|, columns summing to one"""
    cache = fuse_forward(views, params)
    return cache.z_out, cache.alpha


def fuse_backward(cache: FusionCache, grad_out: np.ndarray, params: ModelParams):
    """Returns (per-view dZ list, dw_att, db_att, dW_linear, db_linear)"""
    d = params.dim
    n_vertices = grad_out.shape[0]
    w_q, w_z = params.w_att[:d], params.w_att[d:]
    stack = np.stack(cache.views)

    grad_w_linear = grad_out.T @ cache.z_fused
    grad_b_linear = grad_out.sum(axis=0)
    grad_fused = grad_out @ params.w_linear

    grad_alpha = np.einsum("vd,mvd->mv", grad_fused, stack)
    grad_scores = cache.alpha * (grad_alpha - (cache.alpha * grad_alpha).sum(axis=0, keepdims=True))
    score_mass = grad_scores.sum(axis=1)

    grad_b_att = np.array([score_mass.sum()], dtype=grad_out.dtype)
    grad_w_z = np.einsum("mv,mvd->d", grad_scores, stack)
    grad_w_q = score_mass @ cache.q
    grad_w_att = np.concatenate([grad_w_q, grad_w_z])

    grad_views = (
        cache.alpha[:, :, None] * grad_fused[None, :, :]
        + grad_scores[:, :, None] * w_z[None, None, :]
        + (score_mass[:, None] * w_q[None, :] / n_vertices)[:, None, :]
    )
    return list(grad_views), grad_w_att, grad_b_att, grad_w_linear, grad_b_linear


def forward(params: ModelParams, views: Sequence, hh: Optional[HeteroHypergraph] = None) -> ForwardPass:
    """Full forward pass over every view, keeping intermediates for backward"""
    passes = [encode_view_pass(view, params, hh) for view in views]
    fusion = fuse_forward([p.z for p in passes], params)
    return ForwardPass(views=passes, fusion=fusion)


def view_incidences(hh: HeteroHypergraph, views: Sequence[SubHypergraphView]) -> List[sp.csr_matrix]:
    return [view.incidence(hh) for view in views]


def _user_index(u: Union[VertexId, int]) -> int:
    if isinstance(u, VertexId):
        if u.kind is not VertexKind.USER:
            raise ValueError(f"expected a user vertex, got {u.kind.value}")
        return u.index
    return int(u)


def _item_index(i: Union[VertexId, int]) -> int:
    if isinstance(i, VertexId):
        if i.kind is not VertexKind.ITEM:
            raise ValueError(f"expected an item vertex, got {i.kind.value}")
        return i.index
    return int(i)


def logits(z_out: np.ndarray, users, items, params: ModelParams) -> np.ndarray:
    """z_u . z_i + b_u + b_i for aligned user/item index arrays"""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    z_u = z_out[users]
    z_i = z_out[params.n_users + items]
    return np.einsum("nd,nd->n", z_u, z_i) + params.user_bias[users] + params.item_bias[items]


def predict(z_out: np.ndarray, u: Union[VertexId, int], i: Union[VertexId, int], params: ModelParams) -> float:
    u, i = _user_index(u), _item_index(i)
    return float(expit(logits(z_out, [u], [i], params)[0]))


def score_items(z_out: np.ndarray, u: int, params: ModelParams) -> np.ndarray:
    """Predicted preference of user u for every item"""
    z_items = z_out[params.n_users:params.n_users + params.n_items]
    return expit(z_items @ z_out[u] + params.user_bias[u] + params.item_bias)


def forward_cost(n_views: int, layers: int, n_vertices: int, avg_hyperedge_degree: float, dim: int) -> float:
    """Operation estimate k * L_c * |V| * mean hyperedge degree * d"""
    return float(n_views * layers * n_vertices * avg_hyperedge_degree * dim)
