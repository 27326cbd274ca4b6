"""
BPR training of the hypergraph model.

Gradients are derived by hand through the fixed computation graph
(convolution stack per view, attention fusion, output transform, scoring)
and applied with Adam.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit, log_expit

from DataSplitter import SplitBundle
from Errors import DataError, DivergenceError
from Evaluator import evaluate_model
from HypergraphCore import HeteroHypergraph
from HypergraphModel import (
    ForwardPass,
    ModelParams,
    conv_backward,
    forward,
    fuse_backward,
    logits,
    params_for,
    view_incidences,
)
from WalkSampler import ViewSet, WalkConfig, sample_views

logger = logging.getLogger(__name__)


def history_columns(k: int = 10) -> List[str]:
    """history.csv header; validation metrics are taken at the early-stopping K"""
    return ["epoch", "train_loss", f"val_P@{k}", f"val_nDCG@{k}", f"val_MRR@{k}", "wall_ms"]


@dataclass(frozen=True)
class Triplet:
    user: int
    positive: int
    negative: int


@dataclass(frozen=True)
class TripletSet:
    users: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    skipped: int = 0

    def __len__(self):
        return len(self.users)

    def subset(self, index: np.ndarray) -> "TripletSet":
        return TripletSet(self.users[index], self.positives[index], self.negatives[index])

    def triplets(self) -> List[Triplet]:
        return [Triplet(int(u), int(p), int(n)) for u, p, n in zip(self.users, self.positives, self.negatives)]

    @classmethod
    def from_triplets(cls, triplets: Sequence[Triplet]) -> "TripletSet":
        arrays = np.asarray([(t.user, t.positive, t.negative) for t in triplets], dtype=np.int64).reshape(-1, 3)
        return cls(arrays[:, 0], arrays[:, 1], arrays[:, 2])


def sample_triplets(
    train_edges: Iterable[Tuple[int, int]],
    full_edges: Iterable[Tuple[int, int]],
    n_items: int,
    negatives_per_positive: int = 1,
    epoch: int = 0,
    seed: int = 0,
) -> TripletSet:
    """
    One pass over the training positives; negatives are uniform over the
    items the user never interacted with in any split.
    """
    interacted: Dict[int, set] = {}
    for u, i in full_edges:
        interacted.setdefault(u, set()).add(i)
    train_edges = sorted(set(train_edges))
    for u, i in train_edges:
        interacted.setdefault(u, set()).add(i)

    rng = np.random.default_rng([seed, epoch])
    candidates: Dict[int, np.ndarray] = {}
    users, positives, negatives = [], [], []
    skipped = 0
    starved = set()
    for u, i in train_edges:
        if u not in candidates:
            candidates[u] = np.setdiff1d(np.arange(n_items), np.fromiter(interacted[u], dtype=np.int64))
        pool = candidates[u]
        if not len(pool):
            skipped += negatives_per_positive
            starved.add(u)
            continue
        for negative in pool[rng.integers(len(pool), size=negatives_per_positive)]:
            users.append(u)
            positives.append(i)
            negatives.append(negative)

    if skipped:
        logger.warning("skipped %d triplets for %d users without a possible negative", skipped, len(starved))
    return TripletSet(
        np.asarray(users, dtype=np.int64),
        np.asarray(positives, dtype=np.int64),
        np.asarray(negatives, dtype=np.int64),
        skipped,
    )


def pairwise_loss(differences: np.ndarray) -> float:
    """mean of -ln sigmoid(difference)"""
    return float(-np.mean(log_expit(differences)))


def regularization(params: ModelParams, reg: float) -> float:
    return reg * params.squared_norm()


def score_differences(z_out: np.ndarray, triplets: TripletSet, params: ModelParams, raw_logit_bpr: bool = False):
    """(difference, d difference / d positive logit, d difference / d negative logit)"""
    pos = logits(z_out, triplets.users, triplets.positives, params)
    neg = logits(z_out, triplets.users, triplets.negatives, params)
    if raw_logit_bpr:
        return pos - neg, np.ones_like(pos), -np.ones_like(neg)
    y_pos, y_neg = expit(pos), expit(neg)
    return y_pos - y_neg, y_pos * (1.0 - y_pos), -y_neg * (1.0 - y_neg)


def bpr_loss(
    z_out: np.ndarray,
    triplets: TripletSet,
    params: ModelParams,
    reg: float,
    raw_logit_bpr: bool = False,
) -> float:
    """
    -mean ln sigmoid(y+ - y-) + reg * ||theta||^2. The difference is taken on
    the sigmoid outputs unless raw_logit_bpr is set.
    """
    if not len(triplets):
        raise ValueError("BPR loss of an empty triplet batch")
    differences, _, _ = score_differences(z_out, triplets, params, raw_logit_bpr)
    return pairwise_loss(differences) + regularization(params, reg)


def backward(
    fp: Optional[ForwardPass],
    triplets: TripletSet,
    params: ModelParams,
    reg: float,
    raw_logit_bpr: bool = False,
) -> ModelParams:
    """Exact gradient of bpr_loss with respect to every parameter tensor"""
    if fp is None or not fp.has_intermediates(params.layers):
        raise ValueError("forward pass intermediates are missing; run forward() first")

    z_out = fp.z_out
    n_users = params.n_users
    grad_z = np.zeros_like(z_out)
    grad_user_bias = np.zeros_like(params.user_bias)
    grad_item_bias = np.zeros_like(params.item_bias)

    if len(triplets):
        differences, d_pos, d_neg = score_differences(z_out, triplets, params, raw_logit_bpr)
        grad_diff = -expit(-differences) / len(triplets)
        g_pos = (grad_diff * d_pos)[:, None]
        g_neg = (grad_diff * d_neg)[:, None]

        users = triplets.users
        pos_rows = n_users + triplets.positives
        neg_rows = n_users + triplets.negatives
        np.add.at(grad_z, users, g_pos * z_out[pos_rows] + g_neg * z_out[neg_rows])
        np.add.at(grad_z, pos_rows, g_pos * z_out[users])
        np.add.at(grad_z, neg_rows, g_neg * z_out[users])
        np.add.at(grad_user_bias, users, (g_pos + g_neg)[:, 0])
        np.add.at(grad_item_bias, triplets.positives, g_pos[:, 0])
        np.add.at(grad_item_bias, triplets.negatives, g_neg[:, 0])

    grad_views, grad_w_att, grad_b_att, grad_w_linear, grad_b_linear = fuse_backward(fp.fusion, grad_z, params)

    grad_embeddings = np.zeros_like(params.embeddings)
    grad_w_edge = [np.zeros_like(w) for w in params.w_edge]
    grad_w_node = [np.zeros_like(w) for w in params.w_node]
    for view_pass, grad in zip(fp.views, grad_views):
        for layer in reversed(range(params.layers)):
            grad, g_edge, g_node = conv_backward(
                view_pass.layers[layer], grad, params.w_edge[layer], params.w_node[layer]
            )
            grad_w_edge[layer] += g_edge
            grad_w_node[layer] += g_node
        grad_embeddings += grad

    grads = ModelParams(
        embeddings=grad_embeddings,
        w_edge=grad_w_edge,
        w_node=grad_w_node,
        w_att=grad_w_att,
        b_att=grad_b_att,
        w_linear=grad_w_linear,
        b_linear=grad_b_linear,
        user_bias=grad_user_bias,
        item_bias=grad_item_bias,
    )
    if reg:
        grads = grads.zip_map(params, lambda g, theta: g + 2.0 * reg * theta)
    return grads


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like())


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr: float) -> Tuple[ModelParams, AdamState]:
    """Bias-corrected Adam update; returns new objects, inputs are untouched"""
    gradient_tensors = grads.tensors()
    for name, p in params.tensors().items():
        if name not in gradient_tensors or gradient_tensors[name].shape != p.shape:
            raise ValueError(f"gradient for {name} does not match the parameter shape {p.shape}")

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = state.m.zip_map(grads, lambda m_, g: b1 * m_ + (1.0 - b1) * g)
    v = state.v.zip_map(grads, lambda v_, g: b2 * v_ + (1.0 - b2) * g * g)
    m_scale = 1.0 / (1.0 - b1 ** t)
    v_scale = 1.0 / (1.0 - b2 ** t)
    update = m.zip_map(v, lambda m_, v_: lr * (m_ * m_scale) / (np.sqrt(v_ * v_scale) + state.eps))
    updated = params.zip_map(update, lambda p, u: (p - u).astype(p.dtype))
    return updated, AdamState(m=m, v=v, step=t, beta1=b1, beta2=b2, eps=state.eps)


def gradient_check(
    params: ModelParams,
    views: Sequence,
    triplets: TripletSet,
    reg: float,
    raw_logit_bpr: bool = False,
    step: float = 1e-4,
    floor: float = 1e-3,
    hh: Optional[HeteroHypergraph] = None,
) -> Dict[str, float]:
    """
    Max relative error per tensor between backward() and central differences.
    The denominator is floored so that near-zero gradients compare absolutely.
    """
    analytic = backward(forward(params, views, hh), triplets, params, reg, raw_logit_bpr).tensors()

    def loss_at(candidate: ModelParams) -> float:
        return bpr_loss(forward(candidate, views, hh).z_out, triplets, candidate, reg, raw_logit_bpr)

    errors = {}
    for name, tensor in params.tensors().items():
        worst = 0.0
        for index in np.ndindex(tensor.shape):
            original = tensor[index]
            tensor[index] = original + step
            upper = loss_at(params)
            tensor[index] = original - step
            lower = loss_at(params)
            tensor[index] = original
            numeric = (upper - lower) / (2.0 * step)
            exact = analytic[name][index]
            worst = max(worst, abs(exact - numeric) / max(abs(exact), abs(numeric), floor))
        errors[name] = worst
    return errors


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    reg: float = 1e-5
    epochs: int = 50
    batch_size: int = 1024
    negatives_per_positive: int = 1
    patience: Optional[int] = 10
    raw_logit_bpr: bool = False
    seed: int = 0
    dim: int = 64
    layers: int = 2
    precision: str = "float64"
    early_stop_k: int = 10
    resample_each_epoch: bool = False

    def __post_init__(self):
        if self.learning_rate < 0 or self.reg < 0:
            raise ValueError("learning rate and regularization must be non-negative")

    @classmethod
    def from_run_config(cls, cfg, seed: int) -> "TrainConfig":
        return cls(
            learning_rate=cfg.train.learning_rate,
            reg=cfg.train.reg,
            epochs=cfg.train.epochs,
            batch_size=cfg.train.batch_size,
            negatives_per_positive=cfg.train.negatives_per_positive,
            patience=cfg.train.patience,
            raw_logit_bpr=cfg.train.raw_logit_bpr,
            seed=seed,
            dim=cfg.model.dim,
            layers=cfg.model.layers,
            precision=cfg.model.precision,
            early_stop_k=cfg.eval.early_stop_k,
            resample_each_epoch=cfg.walk.resample_each_epoch,
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_p: float
    val_ndcg: float
    val_mrr: float
    wall_ms: float


@dataclass
class TrainingResult:
    params: ModelParams
    history: List[EpochRecord]
    views: ViewSet
    best_epoch: int
    skipped_triplets: int = 0
    stopped_early: bool = False
    final_z_out: Optional[np.ndarray] = field(default=None, repr=False)
    early_stop_k: int = 10

    def history_frame(self) -> pd.DataFrame:
        rows = [(r.epoch, r.train_loss, r.val_p, r.val_ndcg, r.val_mrr, r.wall_ms) for r in self.history]
        return pd.DataFrame(rows, columns=history_columns(self.early_stop_k))


def _validate(params: ModelParams, incidences, bundle: SplitBundle, k: int) -> Tuple[float, float, float]:
    if not bundle.val:
        return float("nan"), float("nan"), float("nan")
    z_out = forward(params, incidences).z_out
    report = evaluate_model(z_out, params, bundle.train, bundle.val, ks=[k])
    return report.value("P", k), report.value("nDCG", k), report.value("MRR", k)


def train(
    bundle: SplitBundle,
    hh: HeteroHypergraph,
    cfg: TrainConfig,
    walk_cfg: WalkConfig,
    params: Optional[ModelParams] = None,
    views: Optional[ViewSet] = None,
) -> TrainingResult:
    """
    Mini-batch BPR with Adam. Views are sampled once unless
    resample_each_epoch is set. Returns the parameters of the epoch with the
    best validation nDCG.
    """
    if params is None:
        params = params_for(hh, cfg.dim, cfg.layers, cfg.seed, np.dtype(cfg.precision))
    if views is None:
        views = sample_views(hh, walk_cfg)
    incidences = view_incidences(hh, views.views)

    state = AdamState.zeros(params)
    history: List[EpochRecord] = []
    best_params, best_score, best_epoch = params.copy(), -np.inf, 0
    best_views, best_incidences = views, incidences
    stale = 0
    skipped = 0
    stopped_early = False
    full_edges = bundle.all_edges

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        if cfg.resample_each_epoch and epoch > 1:
            views = sample_views(hh, walk_cfg.reseeded(epoch))
            incidences = view_incidences(hh, views.views)

        triplets = sample_triplets(bundle.train, full_edges, hh.n_items, cfg.negatives_per_positive, epoch, cfg.seed)
        skipped += triplets.skipped
        if not len(triplets):
            raise DataError("no training triplets could be sampled")

        order = np.random.default_rng([cfg.seed, epoch, 1]).permutation(len(triplets))
        loss_sum = 0.0
        for batch_no, start in enumerate(range(0, len(triplets), cfg.batch_size)):
            batch = triplets.subset(order[start:start + cfg.batch_size])
            fp = forward(params, incidences)
            loss = bpr_loss(fp.z_out, batch, params, cfg.reg, cfg.raw_logit_bpr)
            if not np.isfinite(loss):
                largest = max(float(np.abs(t).max()) for t in params.tensors().values())
                raise DivergenceError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {batch_no}; "
                    f"largest |parameter| {largest:.3g}, learning rate {cfg.learning_rate}"
                )
            grads = backward(fp, batch, params, cfg.reg, cfg.raw_logit_bpr)
            params, state = adam_step(params, grads, state, cfg.learning_rate)
            loss_sum += loss * len(batch)

        val_p, val_ndcg, val_mrr = _validate(params, incidences, bundle, cfg.early_stop_k)
        record = EpochRecord(
            epoch, loss_sum / len(triplets), val_p, val_ndcg, val_mrr,
            (time.perf_counter() - started) * 1000.0,
        )
        history.append(record)
        logger.info(
            "epoch %d: loss %.6f, val nDCG@%d %.4f",
            epoch, record.train_loss, cfg.early_stop_k, val_ndcg,
        )

        if np.isnan(val_ndcg):
            best_params, best_epoch = params.copy(), epoch
            best_views, best_incidences = views, incidences
            continue
        if val_ndcg > best_score:
            best_params, best_score, best_epoch = params.copy(), val_ndcg, epoch
            best_views, best_incidences = views, incidences
            stale = 0
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                logger.info("early stop at epoch %d, best epoch %d", epoch, best_epoch)
                stopped_early = True
                break

    z_out = forward(best_params, best_incidences).z_out
    return TrainingResult(
        best_params, history, best_views, best_epoch, skipped, stopped_early, z_out, early_stop_k=cfg.early_stop_k,
    )
