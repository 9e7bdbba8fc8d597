"""Per-pair spatial-temporal hypergraph.

A pair window (t-1, t) over N channels gives 2N nodes: node ``i < N`` is
channel ``i`` at t-1, node ``N + i`` is channel ``i`` at t. Every node is the
master of one spatial hyperedge (candidates: the rest of its own slice) and
one temporal hyperedge (candidates: the whole opposite slice). Candidate
membership is weighted by ``relu(p)`` of the master's reconstruction
coefficients, so a candidate with ``p <= 0`` drops out with weight exactly 0.

Incidence columns are ordered ``[spatial(0..2N-1), temporal(0..2N-1)]``.

The functions here take plain arrays or ``Tensor`` values and stay
differentiable; they are the per-sample reference path. The learner has a
vectorised batch path that is tested against these.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor, as_tensor


@dataclass(frozen=True)
class CoefficientBank:
    p_spa: Tensor | np.ndarray  # (2N, N-1)
    p_tem: Tensor | np.ndarray  # (2N, N)

    @property
    def n_channels(self) -> int:
        return as_tensor(self.p_tem).shape[1]


@dataclass(frozen=True)
class ProjectionParams:
    theta_spa: Tensor | np.ndarray  # (d, d_proj)
    theta_tem: Tensor | np.ndarray  # (d, d_proj)
    recon_lambda: float = 1.0
    l2_gamma: float = 0.1


@dataclass(frozen=True)
class HypergraphSnapshot:
    nodes: Tensor  # (2N, d)
    incidence: Tensor  # (2N, 4N)
    masters: np.ndarray  # (4N,) master node of each hyperedge

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]


def candidate_sets(master: int, n_channels: int) -> tuple[np.ndarray, np.ndarray]:
    """Spatial and temporal candidate node indices for ``master``, ascending."""
    N = n_channels
    if not 0 <= master < 2 * N:
        raise IndexError(f"master {master} outside [0, {2 * N})")
    own = 0 if master < N else N
    other = N - own
    spa = np.array([v for v in range(own, own + N) if v != master], dtype=np.intp)
    tem = np.arange(other, other + N, dtype=np.intp)
    return spa, tem


@lru_cache(maxsize=None)
def candidate_tables(n_channels: int) -> tuple[np.ndarray, np.ndarray]:
    """Stacked candidate sets: ``(2N, N-1)`` spatial and ``(2N, N)`` temporal."""
    rows = [candidate_sets(m, n_channels) for m in range(2 * n_channels)]
    spa = np.stack([r[0] for r in rows])
    tem = np.stack([r[1] for r in rows])
    spa.setflags(write=False)
    tem.setflags(write=False)
    return spa, tem


def reconstruction_error(master_x, p, candidates_x, theta) -> Tensor:
    """``|| x theta - p (X_cand theta) ||^2``, both sides in projected space."""
    x, p, X, th = (as_tensor(a) for a in (master_x, p, candidates_x, theta))
    if x.ndim != 1 or X.ndim != 2 or p.ndim != 1 or th.ndim != 2:
        raise ShapeError("reconstruction_error", x.shape, p.shape, X.shape, th.shape)
    if X.shape != (p.shape[0], x.shape[0]) or th.shape[0] != x.shape[0]:
        raise ShapeError("reconstruction_error", x.shape, p.shape, X.shape, th.shape)
    target = ad.matmul(ad.reshape(x, (1, -1)), th)
    approx = ad.matmul(ad.reshape(p, (1, -1)), ad.matmul(X, th))
    return ad.sq_norm(ad.sub(target, approx))


def _check_bank(nodes: Tensor, bank: CoefficientBank) -> int:
    n_nodes = nodes.shape[0]
    N = n_nodes // 2
    ps, pt = as_tensor(bank.p_spa), as_tensor(bank.p_tem)
    if n_nodes != 2 * N or ps.shape != (2 * N, N - 1) or pt.shape != (2 * N, N):
        raise ShapeError("hypergraph", nodes.shape, ps.shape, pt.shape)
    return N


def reconstruction_loss(nodes, bank: CoefficientBank, proj: ProjectionParams) -> Tensor:
    """Sum over masters of weighted reconstruction error plus elastic-net penalty."""
    nodes = as_tensor(nodes)
    N = _check_bank(nodes, bank)
    spa, tem = candidate_tables(N)
    ps, pt = as_tensor(bank.p_spa), as_tensor(bank.p_tem)
    total = Tensor(0.0)
    for m in range(2 * N):
        x = ad.take(nodes, [m], 0).reshape(-1)
        p_s = ad.take(ps, [m], 0).reshape(-1)
        p_t = ad.take(pt, [m], 0).reshape(-1)
        c_spa = reconstruction_error(x, p_s, ad.take(nodes, spa[m], 0), proj.theta_spa)
        c_tem = reconstruction_error(x, p_t, ad.take(nodes, tem[m], 0), proj.theta_tem)
        term = ad.mul(ad.add(c_spa, c_tem), proj.recon_lambda)
        term = ad.add(term, ad.add(ad.l1_norm(p_s), ad.l1_norm(p_t)))
        term = ad.add(term, ad.mul(ad.add(ad.sq_norm(p_s), ad.sq_norm(p_t)), proj.l2_gamma))
        total = ad.add(total, term)
    return total


def incidence_transpose(bank: CoefficientBank) -> Tensor:
    """``H^T`` of shape ``(4N, 2N)``: row e holds the node weights of hyperedge e."""
    ps, pt = as_tensor(bank.p_spa), as_tensor(bank.p_tem)
    N = pt.shape[1]
    n = 2 * N
    spa, tem = candidate_tables(N)
    eye = Tensor(np.eye(n))
    flat_spa = (np.arange(n)[:, None] * n + spa).ravel()
    flat_tem = (np.arange(n)[:, None] * n + tem).ravel()
    h_spa = ad.scatter(ad.reshape(ad.relu(ps), (-1,)), flat_spa, 0, n * n)
    h_tem = ad.scatter(ad.reshape(ad.relu(pt), (-1,)), flat_tem, 0, n * n)
    h_spa = ad.add(eye, ad.reshape(h_spa, (n, n)))
    h_tem = ad.add(eye, ad.reshape(h_tem, (n, n)))
    return ad.concat([h_spa, h_tem], axis=0)


def build_incidence(nodes, bank: CoefficientBank) -> HypergraphSnapshot:
    nodes = as_tensor(nodes)
    N = _check_bank(nodes, bank)
    H = ad.transpose(incidence_transpose(bank))
    masters = np.concatenate([np.arange(2 * N), np.arange(2 * N)])
    return HypergraphSnapshot(nodes, H, masters)


def edge_weights(snapshot: HypergraphSnapshot) -> Tensor:
    """Column-normalised incidence, ``(2N, 4N)``."""
    H = snapshot.incidence
    return ad.div(H, ad.sum_(H, axis=0, keepdims=True))


def hyperedge_embedding(snapshot: HypergraphSnapshot, e: int) -> Tensor:
    """Weighted mean of node features over hyperedge ``e``."""
    col = ad.reshape(ad.take(snapshot.incidence, [e], 1), (1, -1))
    num = ad.matmul(col, snapshot.nodes)
    return ad.reshape(ad.div(num, ad.sum_(col)), (-1,))


def pair_nodes(sample_features) -> np.ndarray:
    """(2, N, d) pair window -> (2N, d) node features."""
    x = np.asarray(sample_features, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 2:
        raise ShapeError("pair_nodes", x.shape)
    return x.reshape(2 * x.shape[1], x.shape[2])


def build_snapshot(sample, bank: CoefficientBank, proj: ProjectionParams) -> tuple[HypergraphSnapshot, Tensor]:
    """Hypergraph and reconstruction loss for one pair sample."""
    feats = getattr(sample, "features", sample)
    nodes = Tensor(pair_nodes(feats))
    if as_tensor(bank.p_tem).shape[1] != nodes.shape[0] // 2:
        raise ShapeError("build_snapshot", nodes.shape, as_tensor(bank.p_tem).shape)
    snap = build_incidence(nodes, bank)
    return snap, reconstruction_loss(nodes, bank, proj)
