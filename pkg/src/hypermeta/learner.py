"""Hypergraph attention learner and the per-task loss.

Each node attends over exactly two hyperedges, its spatial and its temporal
one. Per head the two scaled dot-product scores go through a two-way softmax
and mix the value projections of the two hyperedge embeddings. Heads are
concatenated and passed through a ReLU MLP; node embeddings are mean-pooled
and an affine head produces class logits.

``forward`` is the vectorised batch path used for training. The small
functions (``attention_score``, ``node_update``, ...) are the per-sample
reference path built from the same primitives; the tests hold the two
together.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamSet, ShapeError, Tensor, as_tensor
from .hypergraph import (
    CoefficientBank,
    HypergraphSnapshot,
    ProjectionParams,
    build_snapshot,
    candidate_tables,
    hyperedge_embedding,
    incidence_transpose,
)

PARAM_NAMES = (
    "theta_spa",
    "theta_tem",
    "p_spa",
    "p_tem",
    "att_q",
    "att_k",
    "att_v",
    "mlp_w1",
    "mlp_b1",
    "mlp_w2",
    "mlp_b2",
    "cls_w",
    "cls_b",
)

# parameter groups reported by gradient checks
PARAM_GROUPS = {
    "projection": ("theta_spa", "theta_tem"),
    "coefficients": ("p_spa", "p_tem"),
    "attention": ("att_q", "att_k", "att_v"),
    "mlp": ("mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"),
    "classifier": ("cls_w", "cls_b"),
}


@dataclass(frozen=True)
class LearnerConfig:
    """Learner dimensions and loss weights not fixed by the data."""

    d_proj: int = 0  # 0 -> n_features
    d_attn: int = 4
    n_heads: int = 2
    d_hidden: int = 0  # 0 -> 2 * n_heads * d_attn
    recon_lambda: float = 1.0
    l2_gamma: float = 0.1
    dropout: float = 0.3

    def __post_init__(self):
        if self.d_proj < 0 or self.d_hidden < 0:
            raise ValueError("d_proj and d_hidden must be >= 0 (0 selects the default)")
        if self.d_attn < 1 or self.n_heads < 1:
            raise ValueError("d_attn and n_heads must be >= 1")
        if self.recon_lambda <= 0 or self.l2_gamma < 0:
            raise ValueError("recon_lambda must be > 0 and l2_gamma >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class AttentionParams:
    q: Tensor | np.ndarray  # (heads, d, d_a)
    k: Tensor | np.ndarray
    v: Tensor | np.ndarray

    @property
    def n_heads(self) -> int:
        return as_tensor(self.q).shape[0]

    @property
    def d_attn(self) -> int:
        return as_tensor(self.q).shape[2]


@dataclass(frozen=True)
class HeadParams:
    w1: Tensor | np.ndarray  # (heads * d_a, d_hidden)
    b1: Tensor | np.ndarray
    w2: Tensor | np.ndarray  # (d_hidden, d_out)
    b2: Tensor | np.ndarray
    cls_w: Tensor | np.ndarray  # (d_out, C)
    cls_b: Tensor | np.ndarray
    dropout: float = 0.0


def split_params(params: Mapping, cfg: LearnerConfig):
    """View a flat parameter mapping as the structured pieces."""
    bank = CoefficientBank(params["p_spa"], params["p_tem"])
    proj = ProjectionParams(params["theta_spa"], params["theta_tem"], cfg.recon_lambda, cfg.l2_gamma)
    att = AttentionParams(params["att_q"], params["att_k"], params["att_v"])
    head = HeadParams(
        params["mlp_w1"], params["mlp_b1"], params["mlp_w2"], params["mlp_b2"],
        params["cls_w"], params["cls_b"], cfg.dropout,
    )
    return bank, proj, att, head


def init_params(
    n_channels: int, n_features: int, n_classes: int, cfg: LearnerConfig, seed: int = 0
) -> ParamSet:
    """Glorot-uniform weights, zero biases, coefficient banks at 0.01."""
    rng = np.random.default_rng(seed)
    N, d, C = n_channels, n_features, n_classes
    dp = cfg.d_proj or d
    h, da = cfg.n_heads, cfg.d_attn
    dh = cfg.d_hidden or 2 * h * da
    dout = d

    def glorot(fan_in, fan_out, shape):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    return ParamSet(
        theta_spa=glorot(d, dp, (d, dp)),
        theta_tem=glorot(d, dp, (d, dp)),
        p_spa=np.full((2 * N, N - 1), 0.01),
        p_tem=np.full((2 * N, N), 0.01),
        att_q=glorot(d, da, (h, d, da)),
        att_k=glorot(d, da, (h, d, da)),
        att_v=glorot(d, da, (h, d, da)),
        mlp_w1=glorot(h * da, dh, (h * da, dh)),
        mlp_b1=np.zeros(dh),
        mlp_w2=glorot(dh, dout, (dh, dout)),
        mlp_b2=np.zeros(dout),
        cls_w=glorot(dout, C, (dout, C)),
        cls_b=np.zeros(C),
    )


def param_dims(params: Mapping) -> dict[str, int]:
    """Recover model dimensions from parameter shapes."""
    def shape(name):
        return as_tensor(params[name]).shape

    h, d, da = shape("att_q")
    return {
        "n_channels": shape("p_tem")[1],
        "n_features": d,
        "d_proj": shape("theta_spa")[1],
        "n_heads": h,
        "d_attn": da,
        "d_hidden": shape("mlp_w1")[1],
        "d_out": shape("mlp_w2")[1],
        "n_classes": shape("cls_w")[1],
    }


# --------------------------------------------------------------------------
# per-sample reference operations


def attention_score(x, E, Q, K) -> Tensor:
    """Scaled dot product between the projected node and hyperedge features."""
    x, E, Q, K = (as_tensor(a) for a in (x, E, Q, K))
    if x.ndim != 1 or E.shape != x.shape or Q.shape != K.shape or Q.shape[0] != x.shape[0]:
        raise ShapeError("attention_score", x.shape, E.shape, Q.shape, K.shape)
    da = Q.shape[1]
    xq = ad.matmul(ad.reshape(x, (1, -1)), Q)
    ek = ad.matmul(ad.reshape(E, (1, -1)), K)
    return ad.mul(ad.sum_(ad.mul(xq, ek)), 1.0 / math.sqrt(da))


def attention_weights(score_spa, score_tem) -> tuple[Tensor, Tensor]:
    s = ad.concat([ad.reshape(score_spa, (1,)), ad.reshape(score_tem, (1,))], axis=0)
    w = ad.softmax(s)
    return ad.reshape(ad.take(w, [0], 0), ()), ad.reshape(ad.take(w, [1], 0), ())


def mlp(x, head: HeadParams, train: bool = False, rng=None) -> Tensor:
    hidden = ad.relu(ad.add(ad.matmul(x, head.w1), head.b1))
    hidden = ad.dropout(hidden, head.dropout, rng, train)
    return ad.add(ad.matmul(hidden, head.w2), head.b2)


def node_update(v: int, snapshot: HypergraphSnapshot, att: AttentionParams, head: HeadParams,
                train: bool = False, rng=None) -> Tensor:
    """Embedding of node ``v`` from its spatial and temporal hyperedges."""
    n = snapshot.n_nodes
    if not 0 <= v < n:
        raise IndexError(f"node {v} outside [0, {n})")
    x = ad.reshape(ad.take(snapshot.nodes, [v], 0), (-1,))
    e_spa = hyperedge_embedding(snapshot, v)
    e_tem = hyperedge_embedding(snapshot, n + v)
    q, k, val = as_tensor(att.q), as_tensor(att.k), as_tensor(att.v)
    outs = []
    for h in range(att.n_heads):
        Qh = ad.reshape(ad.take(q, [h], 0), q.shape[1:])
        Kh = ad.reshape(ad.take(k, [h], 0), k.shape[1:])
        Vh = ad.reshape(ad.take(val, [h], 0), val.shape[1:])
        w_spa, w_tem = attention_weights(attention_score(x, e_spa, Qh, Kh), attention_score(x, e_tem, Qh, Kh))
        v_spa = ad.matmul(ad.reshape(e_spa, (1, -1)), Vh)
        v_tem = ad.matmul(ad.reshape(e_tem, (1, -1)), Vh)
        outs.append(ad.add(ad.mul(v_spa, w_spa), ad.mul(v_tem, w_tem)))
    z = mlp(ad.concat(outs, axis=1), head, train, rng)
    return ad.reshape(z, (-1,))


def graph_pool(node_embeddings: Sequence) -> Tensor:
    if len(node_embeddings) == 0:
        raise ValueError("graph_pool needs at least one node embedding")
    rows = [ad.reshape(as_tensor(z), (1, -1)) for z in node_embeddings]
    return ad.reshape(ad.mean(ad.concat(rows, axis=0), axis=0), (-1,))


def classify(Z, head: HeadParams) -> Tensor:
    Z = as_tensor(Z)
    return ad.add(ad.matmul(ad.reshape(Z, (1, -1)), head.cls_w), head.cls_b).reshape(-1)


def predict(logits) -> np.ndarray | int:
    """Argmax over the last axis; ties go to the lowest index."""
    arr = as_tensor(logits).data
    out = np.argmax(arr, axis=-1)
    return int(out) if out.ndim == 0 else out


def reference_forward(sample, params: Mapping, cfg: LearnerConfig) -> tuple[Tensor, Tensor]:
    """Logits and reconstruction loss for one pair, op by op."""
    bank, proj, att, head = split_params(params, cfg)
    snap, recon = build_snapshot(sample, bank, proj)
    zs = [node_update(v, snap, att, head) for v in range(snap.n_nodes)]
    return classify(graph_pool(zs), head), recon


# --------------------------------------------------------------------------
# batched path


def forward(params: Mapping, features, cfg: LearnerConfig, train: bool = False,
            rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Logits ``(B, C)`` and per-sample reconstruction loss ``(B,)``.

    ``features`` has shape ``(B, 2, N, d)``. Parameters may be arrays or
    tensors; gradients flow to whichever are tensors.
    """
    P = {k: as_tensor(params[k]) for k in PARAM_NAMES}
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 4 or X.shape[1] != 2:
        raise ShapeError("forward", X.shape)
    B, _, N, d = X.shape
    n = 2 * N
    if P["p_tem"].shape != (n, N) or P["theta_spa"].shape[0] != d:
        raise ShapeError("forward", X.shape, P["p_tem"].shape, P["theta_spa"].shape)
    nodes = Tensor(X.reshape(B, n, d))
    spa, tem = candidate_tables(N)

    # reconstruction
    def recon_error(theta, p, table):
        y = ad.matmul(nodes, theta)  # (B, n, dp)
        k = table.shape[1]
        cand = ad.reshape(ad.take(y, table.ravel(), 1), (B, n, k, y.shape[2]))
        approx = ad.sum_(ad.mul(ad.reshape(p, (1, n, k, 1)), cand), axis=2)
        return ad.sum_(ad.square(ad.sub(y, approx)), axis=2)  # (B, n)

    c_spa = recon_error(P["theta_spa"], P["p_spa"], spa)
    c_tem = recon_error(P["theta_tem"], P["p_tem"], tem)
    penalty = ad.add(
        ad.add(ad.l1_norm(P["p_spa"]), ad.l1_norm(P["p_tem"])),
        ad.mul(ad.add(ad.sq_norm(P["p_spa"]), ad.sq_norm(P["p_tem"])), cfg.l2_gamma),
    )
    recon = ad.add(ad.mul(ad.sum_(ad.add(c_spa, c_tem), axis=1), cfg.recon_lambda), penalty)

    # hyperedge embeddings
    Ht = incidence_transpose(CoefficientBank(P["p_spa"], P["p_tem"]))  # (2n, n)
    W = ad.div(Ht, ad.sum_(Ht, axis=1, keepdims=True))
    E = ad.matmul(W, nodes)  # (B, 2n, d)
    e_spa = ad.take(E, np.arange(n), 1)
    e_tem = ad.take(E, np.arange(n, 2 * n), 1)

    # attention over {spatial, temporal} per node and head
    q, k, v = P["att_q"], P["att_k"], P["att_v"]
    h, _, da = q.shape
    x4 = ad.reshape(nodes, (B, 1, n, d))
    s4 = ad.reshape(e_spa, (B, 1, n, d))
    t4 = ad.reshape(e_tem, (B, 1, n, d))
    xq = ad.matmul(x4, q)  # (B, h, n, da)
    scale = 1.0 / math.sqrt(da)
    score_spa = ad.mul(ad.sum_(ad.mul(xq, ad.matmul(s4, k)), axis=3, keepdims=True), scale)
    score_tem = ad.mul(ad.sum_(ad.mul(xq, ad.matmul(t4, k)), axis=3, keepdims=True), scale)
    w = ad.softmax(ad.concat([score_spa, score_tem], axis=3), axis=3)  # (B, h, n, 2)
    mixed = ad.add(
        ad.mul(ad.take(w, [0], 3), ad.matmul(s4, v)),
        ad.mul(ad.take(w, [1], 3), ad.matmul(t4, v)),
    )  # (B, h, n, da)
    heads = ad.reshape(ad.transpose(mixed, (0, 2, 1, 3)), (B, n, h * da))

    head = split_params(P, cfg)[3]
    z = mlp(heads, head, train, rng)  # (B, n, d_out)
    pooled = ad.mean(z, axis=1)
    logits = ad.add(ad.matmul(pooled, P["cls_w"]), P["cls_b"])
    return logits, recon


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Per-sample cross-entropy from logits, log-sum-exp stabilised."""
    labels = np.asarray(labels, dtype=np.intp)
    B, C = logits.shape
    onehot = np.zeros((B, C))
    onehot[np.arange(B), labels] = 1.0
    picked = ad.sum_(ad.mul(logits, Tensor(onehot)), axis=1)
    return ad.sub(ad.logsumexp(logits, axis=1), picked)


def task_loss_parts(batch, params: Mapping, lambda_mix: float, cfg: LearnerConfig,
                    train: bool = False, rng=None) -> tuple[Tensor, Tensor]:
    """Mixed loss and the logits it was computed from."""
    if len(batch) == 0:
        raise ValueError("task_loss needs a non-empty batch")
    if not 0.0 <= lambda_mix <= 1.0:
        raise ValueError("lambda_mix must lie in [0, 1]")
    logits, recon = forward(params, batch.features, cfg, train, rng)
    ce = cross_entropy(logits, batch.labels)
    loss = ad.add(ad.mul(ad.mean(recon), lambda_mix), ad.mul(ad.mean(ce), 1.0 - lambda_mix))
    return loss, logits


def task_loss(batch, params: Mapping, lambda_mix: float, cfg: LearnerConfig,
              train: bool = False, rng=None) -> Tensor:
    """``lambda_mix * mean(recon) + (1 - lambda_mix) * mean(cross-entropy)``."""
    return task_loss_parts(batch, params, lambda_mix, cfg, train, rng)[0]
