"""Two-layer GNN family (GCN, SGC, MLP) with hand-derived gradients.

No biases anywhere: parameters are exactly W1 (d x H) and W2 (H x C),
flattened row-major W1-then-W2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import NormalizedAdj

GCN = "gcn"
SGC = "sgc"
MLP = "mlp"


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss):
        super().__init__(f"non-finite loss at epoch {epoch}: {loss}")
        self.epoch = epoch


@dataclass(frozen=True)
class GnnArch:
    kind: str
    in_dim: int
    out_dim: int
    hidden: int = 256
    prop_depth: int = 2  # SGC only

    def __post_init__(self):
        if self.kind not in (GCN, SGC, MLP):
            raise ValueError(f"unknown arch kind: {self.kind}")

    @property
    def param_len(self) -> int:
        return self.in_dim * self.hidden + self.hidden * self.out_dim

    def unflatten(self, params: np.ndarray):
        d, h, c = self.in_dim, self.hidden, self.out_dim
        if params.shape != (self.param_len,):
            raise ValueError(f"param vector length {params.shape} != ({self.param_len},)")
        return params[: d * h].reshape(d, h), params[d * h:].reshape(h, c)

    def flatten(self, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
        return np.concatenate([w1.ravel(), w2.ravel()])

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
        # Glorot-uniform per matrix
        d, h, c = self.in_dim, self.hidden, self.out_dim
        s1 = np.sqrt(6.0 / (d + h))
        s2 = np.sqrt(6.0 / (h + c))
        w1 = rng.uniform(-s1, s1, size=(d, h))
        w2 = rng.uniform(-s2, s2, size=(h, c))
        return self.flatten(w1, w2).astype(dtype)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"  # "adam" | "gd"
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 600
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("step size must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer: {self.optimizer}")


@dataclass(frozen=True)
class DataView:
    """Inputs for one training run: features, labels, optional propagation
    operator (None means identity topology), and index masks."""

    features: np.ndarray
    labels: np.ndarray
    adj: Optional[NormalizedAdj]
    train_idx: np.ndarray
    val_idx: Optional[np.ndarray] = None


def _prop(adj, x):
    return x if adj is None else adj.matrix @ x


def forward(arch: GnnArch, adj: Optional[NormalizedAdj], x: np.ndarray,
            params: np.ndarray) -> np.ndarray:
    """Logits for every row of ``x``. ``adj=None`` is the identity operator."""
    w1, w2 = arch.unflatten(params)
    if x.shape[1] != arch.in_dim:
        raise ValueError(f"feature dim {x.shape[1]} != arch in_dim {arch.in_dim}")
    if arch.kind == SGC:
        h = x
        if adj is not None:
            for _ in range(arch.prop_depth):
                h = adj.matrix @ h
        return (h @ w1) @ w2
    a = x if arch.kind == MLP else _prop(adj, x)
    z = np.maximum(a @ w1, 0.0)
    z = z if arch.kind == MLP else _prop(adj, z)
    return z @ w2


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(arch: GnnArch, adj: Optional[NormalizedAdj], x: np.ndarray,
                  y: np.ndarray, mask_idx: np.ndarray, params: np.ndarray,
                  weight_decay: float = 0.0):
    """Mean softmax cross-entropy over ``mask_idx`` plus 0.5*wd*||params||^2,
    with the exact analytic gradient."""
    mask_idx = np.asarray(mask_idx)
    if mask_idx.size == 0:
        raise ValueError("empty mask")
    w1, w2 = arch.unflatten(params)
    m = len(mask_idx)

    if arch.kind == SGC:
        h = x
        if adj is not None:
            for _ in range(arch.prop_depth):
                h = adj.matrix @ h
        hw1 = h @ w1
        logits = hw1 @ w2
        p = softmax(logits[mask_idx])
        ce = -np.mean(np.log(np.clip(p[np.arange(m), y[mask_idx]], 1e-300, None)))
        g = np.zeros_like(logits)
        gm = p.copy()
        gm[np.arange(m), y[mask_idx]] -= 1.0
        g[mask_idx] = gm / m
        gw2 = hw1.T @ g
        gw1 = h.T @ (g @ w2.T)
    else:
        xa = x if arch.kind == MLP else _prop(adj, x)
        a1 = xa @ w1
        z = np.maximum(a1, 0.0)
        za = z if arch.kind == MLP else _prop(adj, z)
        logits = za @ w2
        p = softmax(logits[mask_idx])
        ce = -np.mean(np.log(np.clip(p[np.arange(m), y[mask_idx]], 1e-300, None)))
        g = np.zeros_like(logits)
        gm = p.copy()
        gm[np.arange(m), y[mask_idx]] -= 1.0
        g[mask_idx] = gm / m
        gw2 = za.T @ g
        gz = g @ w2.T
        gz = gz if arch.kind == MLP else _prop(adj, gz)  # adj is symmetric
        ga1 = gz * (a1 > 0)
        gw1 = xa.T @ ga1

    grad = arch.flatten(gw1, gw2)
    loss = float(ce)
    if weight_decay > 0.0:
        loss += 0.5 * weight_decay * float(params @ params)
        grad = grad + weight_decay * params
    return loss, grad.astype(params.dtype)


def accuracy(logits: np.ndarray, y: np.ndarray, idx: np.ndarray) -> float:
    idx = np.asarray(idx)
    if idx.size == 0:
        raise ValueError("empty index list")
    pred = np.argmax(logits[idx], axis=1)  # argmax ties -> lowest class id
    return float(np.mean(pred == y[idx]))


class AdamState:
    """Plain Adam with bias correction."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8, dtype=np.float64):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape, dtype=dtype)
        self.v = np.zeros(shape, dtype=dtype)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mh = self.m / (1 - self.beta1 ** self.t)
        vh = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * mh / (np.sqrt(vh) + self.eps)


@dataclass
class TrainResult:
    params: np.ndarray            # final parameters
    best_params: np.ndarray       # by val accuracy (== final if no val idx)
    best_val_acc: float
    log: list = field(default_factory=list)  # (epoch, loss, train_acc, val_acc)

    def log_csv(self) -> str:
        lines = ["epoch,loss,train_acc,val_acc"]
        for e, l, ta, va in self.log:
            lines.append(f"{e},{l:.6f},{ta:.4f},{'' if va is None else f'{va:.4f}'}")
        return "\n".join(lines) + "\n"


def train(arch: GnnArch, view: DataView, cfg: TrainConfig,
          eval_every: int = 1, init_params: Optional[np.ndarray] = None) -> TrainResult:
    """Full-batch training, deterministic for a fixed seed and config."""
    dtype = np.dtype(cfg.dtype)
    x = view.features.astype(dtype, copy=False)
    rng = np.random.default_rng(cfg.seed)
    params = (arch.init_params(rng, dtype=dtype) if init_params is None
              else init_params.astype(dtype, copy=True))
    adam = AdamState(params.shape, cfg.lr, dtype=dtype) if cfg.optimizer == "adam" else None

    best_val, best_params = -1.0, params.copy()
    log = []
    for epoch in range(cfg.epochs):
        loss, grad = loss_and_grad(arch, view.adj, x, view.labels,
                                   view.train_idx, params, cfg.weight_decay)
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch, loss)
        if adam is not None:
            params = adam.step(params, grad)
        else:
            params = params - cfg.lr * grad
        if epoch % eval_every == 0 or epoch == cfg.epochs - 1:
            logits = forward(arch, view.adj, x, params)
            ta = accuracy(logits, view.labels, view.train_idx)
            va = None
            if view.val_idx is not None and view.val_idx.size:
                va = accuracy(logits, view.labels, view.val_idx)
                if va > best_val:
                    best_val, best_params = va, params.copy()
            log.append((epoch, loss, ta, va))
    if view.val_idx is None or not view.val_idx.size:
        best_params = params.copy()
    return TrainResult(params=params, best_params=best_params,
                       best_val_acc=best_val, log=log)
