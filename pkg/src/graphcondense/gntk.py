"""Node-level neural tangent kernel for the GNN family, kernel ridge
regression, and the feature-quality score used to pick condensation
checkpoints.

The fc-step inner loop runs through a compiled extension when available
(``graphcondense._ckernels``); set GRAPHCONDENSE_NO_EXT=1 to force the
pure-numpy fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import _gntk_np
from ._gntk_np import relu_dual  # re-exported; public closed-form API
from .data import GraphDataset, induced_subgraph, normalize_adjacency

if os.environ.get("GRAPHCONDENSE_NO_EXT"):
    _ckernels = None
else:
    try:
        from . import _ckernels
    except ImportError:
        _ckernels = None

HAVE_COMPILED_KERNELS = _ckernels is not None

__all__ = [
    "GntkConfig", "KernelMatrix", "GraphView", "relu_dual", "fc_step",
    "gntk_node_kernel", "krr_predict", "gnf_score", "GnfScorer",
    "HAVE_COMPILED_KERNELS",
]


def fc_step(sig, ker, diag1, diag2, c=_gntk_np.C_RELU):
    """Dispatch one fc+ReLU kernel step to the compiled or numpy path."""
    if _ckernels is not None:
        return _ckernels.fc_step(sig, ker, diag1, diag2, c)
    return _gntk_np.fc_step(sig, ker, diag1, diag2, c=c)


@dataclass(frozen=True)
class GntkConfig:
    layers: int = 2                 # GNN layers L
    fc_per_layer: int = 1           # fully-connected ops per layer B
    aggregation: str = "normalized"  # "normalized" | "plain-sum"
    ridge_scale: float = 1e-6       # lambda = ridge_scale * mean diag K_SS
    relu_scale: float = 2.0
    val_cap: int = 2000
    val_seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.fc_per_layer < 1:
            raise ValueError("layers and fc_per_layer must be >= 1")
        if self.aggregation not in ("normalized", "plain-sum"):
            raise ValueError(f"unknown aggregation: {self.aggregation}")
        if self.ridge_scale <= 0:
            raise ValueError("ridge scale must be > 0")


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    block: str = ""  # "SS", "VS", ...

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class GraphView:
    """Features plus the per-layer aggregation operator (None = identity,
    i.e. the structure-free side)."""

    features: np.ndarray
    op: Optional[sp.spmatrix] = None

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def make_view(features: np.ndarray, edges: Optional[np.ndarray],
              num_nodes: int, cfg: GntkConfig) -> GraphView:
    x = np.asarray(features, dtype=np.float64)
    if edges is None:
        return GraphView(features=x, op=None)
    if cfg.aggregation == "normalized":
        op = normalize_adjacency(edges, num_nodes).matrix
    else:
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        u = np.concatenate([e[:, 0], e[:, 1], np.arange(num_nodes)])
        v = np.concatenate([e[:, 1], e[:, 0], np.arange(num_nodes)])
        op = sp.coo_matrix((np.ones(len(u)), (u, v)),
                           shape=(num_nodes, num_nodes)).tocsr()
    return GraphView(features=x, op=op)


def _agg(op1, op2, m):
    if op1 is not None:
        m = op1 @ m
    if op2 is not None:
        m = (op2 @ m.T).T
    return np.ascontiguousarray(m)


def gntk_node_kernel(g1: GraphView, g2: GraphView, cfg: GntkConfig,
                     block: str = "") -> KernelMatrix:
    """Dense (n1 x n2) node-level tangent kernel between two graph views."""
    x1, x2 = g1.features, g2.features
    if x1.shape[1] != x2.shape[1]:
        raise ValueError(f"feature dims differ: {x1.shape[1]} vs {x2.shape[1]}")
    sig12 = np.ascontiguousarray(x1 @ x2.T)
    sig11 = np.ascontiguousarray(x1 @ x1.T)
    sig22 = np.ascontiguousarray(x2 @ x2.T)
    ker = sig12.copy()
    scratch11 = np.zeros_like(sig11)
    scratch22 = np.zeros_like(sig22)
    c = cfg.relu_scale
    for _ in range(cfg.layers):
        sig12 = _agg(g1.op, g2.op, sig12)
        ker = _agg(g1.op, g2.op, ker)
        sig11 = _agg(g1.op, g1.op, sig11)
        sig22 = _agg(g2.op, g2.op, sig22)
        for _ in range(cfg.fc_per_layer):
            d1 = np.ascontiguousarray(np.diagonal(sig11))
            d2 = np.ascontiguousarray(np.diagonal(sig22))
            fc_step(sig12, ker, d1, d2, c)
            fc_step(sig11, scratch11, d1, d1, c)
            fc_step(sig22, scratch22, d2, d2, c)
    if not np.isfinite(ker).all():
        raise FloatingPointError("non-finite kernel entries")
    return KernelMatrix(values=ker, block=block)


class FactorizationError(RuntimeError):
    pass


def krr_predict(k_ss: np.ndarray, k_vs: np.ndarray, y_onehot: np.ndarray,
                lam: float) -> np.ndarray:
    """Ridge-regression predictions k_vs @ (k_ss + lam I)^{-1} @ y_onehot
    via a symmetric positive-definite factorization."""
    k_ss = np.asarray(k_ss, dtype=np.float64)
    n = k_ss.shape[0]
    if k_ss.shape != (n, n):
        raise ValueError("k_ss must be square")
    if lam <= 0:
        raise ValueError("ridge lambda must be > 0")
    a = k_ss + lam * np.eye(n)
    try:
        cf = scipy.linalg.cho_factor(a, lower=True)
        z = scipy.linalg.cho_solve(cf, np.asarray(y_onehot, dtype=np.float64))
    except scipy.linalg.LinAlgError as exc:
        raise FactorizationError(f"SPD factorization failed at lambda={lam}") from exc
    return np.asarray(k_vs, dtype=np.float64) @ z


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


class GnfScorer:
    """Kernel ridge-regression error of condensed data against the
    validation subgraph; lower is better.  Caches the validation view so
    repeated checkpoint scoring only recomputes the blocks that depend on
    the condensed features."""

    def __init__(self, ds: GraphDataset, cfg: GntkConfig):
        if ds.val_idx.size == 0:
            raise ValueError("dataset has an empty validation split")
        self.cfg = cfg
        val_idx = ds.val_idx
        if len(val_idx) > cfg.val_cap:
            rng = np.random.default_rng(cfg.val_seed)
            val_idx = np.sort(rng.choice(val_idx, size=cfg.val_cap, replace=False))
        sub = induced_subgraph(ds, val_idx)
        self.val_view = make_view(sub.features, sub.edges, sub.num_nodes, cfg)
        self.val_targets = one_hot(sub.labels, ds.num_classes)
        self.num_classes = ds.num_classes

    def score(self, x_cond: np.ndarray, y_cond: np.ndarray) -> float:
        if len(x_cond) == 0:
            raise ValueError("empty condensed set")
        s_view = GraphView(features=np.asarray(x_cond, dtype=np.float64), op=None)
        k_ss = gntk_node_kernel(s_view, s_view, self.cfg, block="SS").values
        k_vs = gntk_node_kernel(self.val_view, s_view, self.cfg, block="VS").values
        lam = self.cfg.ridge_scale * float(np.mean(np.diagonal(k_ss)))
        pred = krr_predict(k_ss, k_vs, one_hot(y_cond, self.num_classes), lam)
        diff = self.val_targets - pred
        return 0.5 * float(np.sum(diff * diff))


def gnf_score(ds: GraphDataset, x_cond: np.ndarray, y_cond: np.ndarray,
              cfg: GntkConfig) -> float:
    return GnfScorer(ds, cfg).score(x_cond, y_cond)


def dump_kernel(km: KernelMatrix, path: str) -> None:
    """Binary row-major float64 matrix with a JSON sidecar."""
    import json

    from .data import atomic_write_bytes, atomic_write_text
    atomic_write_bytes(path, km.values.astype("<f8").tobytes())
    rows, cols = km.shape
    atomic_write_text(path + ".json", json.dumps(
        {"rows": rows, "cols": cols, "block": km.block}))
