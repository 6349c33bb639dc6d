"""Synthesize the condensed node set by trajectory meta-matching.

The student is the expert architecture applied with identity topology
(an MLP over the condensed features); its q plain-GD steps are kept
differentiable and the matching loss is backpropagated to the features
through a hand-derived reverse pass over the unrolled updates.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import gntk, nn
from .data import (GraphDataset, atomic_write_bytes, atomic_write_text,
                   normalize_adjacency)
from .nn import softmax
from .trajectory import Segment, TrajectoryBank, sample_segment


class DegenerateSegment(ValueError):
    """Expert segment whose start already coincides with the target."""


@dataclass(frozen=True)
class CondensedData:
    features: np.ndarray  # (N', d)
    labels: np.ndarray    # (N',)
    source: str = ""
    ratio: float = 0.0
    step: int = 0         # meta-matching step the checkpoint was taken at

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ValueError("feature/label count mismatch")
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class MetaMatchConfig:
    p: int = 1200               # expert epochs matched
    q: int = 500                # differentiable student GD steps
    zeta: float = 0.5           # student step size
    meta_lr: float = 1e-4       # outer step on the condensed features
    outer_steps: int = 1000     # T0
    max_start_epoch: Optional[int] = None  # default T/2
    seed: int = 0
    score_every: int = 50
    outer_optimizer: str = "adam"  # "adam" | "gd"
    segment_batch: int = 1
    checkpoint_every: Optional[int] = None  # unroll re-materialization stride

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0 or self.zeta <= 0:
            raise ValueError("p, q and zeta must be > 0")
        if self.outer_steps < 0:
            raise ValueError("outer step count must be >= 0")
        if self.outer_optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown outer optimizer: {self.outer_optimizer}")


def plan_labels(ds: GraphDataset, ratio: float) -> np.ndarray:
    """Per-class condensed node counts, proportional to the train-label
    class frequencies with largest-remainder rounding; every class >= 1."""
    c = ds.num_classes
    n_ref = ds.num_nodes
    total = int(round(ratio * n_ref))
    if ratio <= 0 or total < c:
        raise ValueError(
            f"ratio {ratio} gives {total} nodes, below the class count {c}")
    freq = np.bincount(ds.labels[ds.train_idx], minlength=c).astype(np.float64)
    freq /= freq.sum()
    raw = freq * (total - c)  # reserve one node per class up front
    counts = np.ones(c, dtype=np.int64) + np.floor(raw).astype(np.int64)
    rem = total - counts.sum()
    if rem > 0:
        frac = raw - np.floor(raw)
        # largest remainder, ties broken by lower class id
        order = np.lexsort((np.arange(c), -frac))
        counts[order[:rem]] += 1
    return counts


def propagated_features(ds: GraphDataset, hops: int = 2) -> np.ndarray:
    adj = normalize_adjacency(ds.edges, ds.num_nodes)
    h = ds.features.astype(np.float64)
    for _ in range(hops):
        h = adj.matrix @ h
    return h


def _kcenter_greedy(feats: np.ndarray, k: int) -> np.ndarray:
    """Greedy max-min selection; first center nearest the mean."""
    mean = feats.mean(axis=0)
    d0 = np.linalg.norm(feats - mean, axis=1)
    chosen = [int(np.argmin(d0))]
    mind = np.linalg.norm(feats - feats[chosen[0]], axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, np.linalg.norm(feats - feats[nxt], axis=1))
    return np.asarray(chosen, dtype=np.int64)


def kcenter_indices(ds: GraphDataset, counts: np.ndarray,
                    rng: np.random.Generator,
                    prop: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-class greedy K-center over 2-hop propagated features; returns
    original node indices (train nodes)."""
    if prop is None:
        prop = propagated_features(ds)
    picked = []
    for c, k in enumerate(counts):
        k = int(k)
        nodes = ds.train_idx[ds.labels[ds.train_idx] == c]
        if len(nodes) == 0:
            raise ValueError(f"class {c} has no train nodes")
        if len(nodes) < k:
            warnings.warn(
                f"class {c}: only {len(nodes)} train nodes for {k} slots; "
                "sampling with replacement")
            picked.append(rng.choice(nodes, size=k, replace=True))
            continue
        sel = _kcenter_greedy(prop[nodes], k)
        picked.append(nodes[sel])
    return np.concatenate(picked)


def kcenter_init(ds: GraphDataset, counts: np.ndarray,
                 rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Condensed features/labels initialized from K-center selected train
    nodes (selection in propagated space, raw feature rows copied)."""
    idx = kcenter_indices(ds, counts, rng)
    return ds.features[idx].astype(np.float64), ds.labels[idx].copy()


# ---------------------------------------------------------------------------
# differentiable student unroll


@dataclass
class StudentTape:
    """Parameter checkpoints along the unroll; replaying any block forward
    reproduces the recorded end parameters exactly."""

    theta0: Tuple[np.ndarray, np.ndarray]
    checkpoints: List[Tuple[np.ndarray, np.ndarray]]  # at steps 0, c, 2c, ...
    stride: int
    q: int
    zeta: float
    relu: bool


def _student_grad(x, y1h, w1, w2, relu):
    """Mean cross-entropy gradient of the 2-matrix student on (x, y1h)."""
    n = len(x)
    a1 = x @ w1
    z = np.maximum(a1, 0.0) if relu else a1
    p = softmax(z @ w2)
    g = (p - y1h) / n
    gw2 = z.T @ g
    gz = g @ w2.T
    ga1 = gz * (a1 > 0) if relu else gz
    gw1 = x.T @ ga1
    return gw1, gw2


def _student_step(x, y1h, w1, w2, zeta, relu):
    gw1, gw2 = _student_grad(x, y1h, w1, w2, relu)
    return w1 - zeta * gw1, w2 - zeta * gw2


def unroll_student(x: np.ndarray, y: np.ndarray, arch: nn.GnnArch,
                   theta0: np.ndarray, q: int, zeta: float,
                   checkpoint_every: Optional[int] = None):
    """Run q plain-GD steps of the student from theta0; returns the final
    flattened parameters and the tape for the reverse pass."""
    relu = arch.kind != nn.SGC
    x = np.asarray(x, dtype=np.float64)
    y1h = gntk.one_hot(y, arch.out_dim)
    w1, w2 = arch.unflatten(np.asarray(theta0, dtype=np.float64))
    stride = checkpoint_every or max(1, int(np.sqrt(q))) if q else 1
    tape = StudentTape(theta0=(w1.copy(), w2.copy()), checkpoints=[],
                       stride=stride, q=q, zeta=zeta, relu=relu)
    for k in range(q):
        if k % stride == 0:
            tape.checkpoints.append((w1.copy(), w2.copy()))
        w1, w2 = _student_step(x, y1h, w1, w2, zeta, relu)
        if not (np.isfinite(w1).all() and np.isfinite(w2).all()):
            raise FloatingPointError(f"non-finite student parameters at step {k + 1}")
    return arch.flatten(w1, w2), tape


def meta_match_loss(theta_start: np.ndarray, theta_student: np.ndarray,
                    theta_target: np.ndarray) -> float:
    """Squared student-to-target distance normalized by start-to-target."""
    num = float(np.sum((theta_student - theta_target) ** 2))
    den = float(np.sum((theta_start - theta_target) ** 2))
    if den <= 1e-12:
        raise DegenerateSegment("expert segment with no parameter motion")
    return num / den


def _reverse_through_step(x, y1h, w1, w2, u1, u2, gx, zeta, relu):
    """Adjoint of one GD step: given d(loss)/d(new params) in (u1, u2),
    returns d(loss)/d(old params) and accumulates d(loss)/dx into gx.

    The step is W' = W - zeta * grad(W, x); its pullback needs the
    Hessian- and mixed-derivative vector products of the student loss,
    derived in closed form for the 2-matrix network (the ReLU gate is
    treated as locally constant, as usual).
    """
    n = len(x)
    a1 = x @ w1
    s = (a1 > 0) if relu else None
    z = np.maximum(a1, 0.0) if relu else a1
    p = softmax(z @ w2)
    g = (p - y1h) / n
    d1 = g @ w2.T
    if relu:
        d1 = d1 * s

    v1 = x @ u1
    v1s = v1 * s if relu else v1
    ct = v1s @ w2 + z @ u2
    rs = np.sum(ct * p, axis=1, keepdims=True)
    da2 = p * (ct - rs) / n

    dw2 = v1s.T @ g + z.T @ da2
    dz = g @ u2.T + da2 @ w2.T
    da1 = dz * s if relu else dz
    dw1 = x.T @ da1
    dx = d1 @ u1.T + da1 @ w1.T

    gx -= zeta * dx
    return u1 - zeta * dw1, u2 - zeta * dw2


def backprop_matching_loss(x: np.ndarray, y: np.ndarray, arch: nn.GnnArch,
                           tape: StudentTape, theta_student: np.ndarray,
                           theta_target: np.ndarray):
    """Loss value and d(loss)/dx for the normalized matching loss, by
    reverse-mode sweep over the unrolled steps (recomputing parameter
    states blockwise from the tape checkpoints)."""
    x = np.asarray(x, dtype=np.float64)
    y1h = gntk.one_hot(y, arch.out_dim)
    theta0 = arch.flatten(*tape.theta0)
    target = np.asarray(theta_target, dtype=np.float64)
    den = float(np.sum((theta0 - target) ** 2))
    if den <= 1e-12:
        raise DegenerateSegment("expert segment with no parameter motion")
    num = float(np.sum((theta_student - target) ** 2))
    loss = num / den

    u = 2.0 * (np.asarray(theta_student, dtype=np.float64) - target) / den
    u1, u2 = (a.copy() for a in arch.unflatten(u))
    gx = np.zeros_like(x)
    zeta, relu = tape.zeta, tape.relu

    for b in range(len(tape.checkpoints) - 1, -1, -1):
        k0 = b * tape.stride
        k1 = min(k0 + tape.stride, tape.q)
        w1, w2 = (a.copy() for a in tape.checkpoints[b])
        states = [(w1, w2)]
        for _ in range(k1 - k0 - 1):
            w1, w2 = _student_step(x, y1h, w1, w2, zeta, relu)
            states.append((w1, w2))
        for w1, w2 in reversed(states):
            u1, u2 = _reverse_through_step(x, y1h, w1, w2, u1, u2, gx, zeta, relu)
    return loss, gx


def meta_match_grad(x: np.ndarray, y: np.ndarray, arch: nn.GnnArch,
                    segment: Segment, cfg: MetaMatchConfig):
    """Loss and gradient w.r.t. the condensed features for one segment."""
    theta_q, tape = unroll_student(x, y, arch, segment.start_params,
                                   cfg.q, cfg.zeta, cfg.checkpoint_every)
    return backprop_matching_loss(x, y, arch, tape, theta_q,
                                  segment.target_params)


# ---------------------------------------------------------------------------
# outer loop


@dataclass
class CondenseResult:
    best: CondensedData
    log: List[Tuple[int, float, float]] = field(default_factory=list)  # step, loss, score
    checkpoints: List[CondensedData] = field(default_factory=list)
    scores: List[float] = field(default_factory=list)

    def log_csv(self) -> str:
        lines = ["step,loss,gnf_score"]
        for step, loss, score in self.log:
            l = "" if loss is None else f"{loss:.8f}"
            s = "" if score is None else f"{score:.8f}"
            lines.append(f"{step},{l},{s}")
        return "\n".join(lines) + "\n"


def condense(ds: GraphDataset, bank: TrajectoryBank, ratio: float,
             cfg: MetaMatchConfig, gntk_cfg: Optional[gntk.GntkConfig] = None,
             scorer: Optional[gntk.GnfScorer] = None) -> CondenseResult:
    """Full synthesis loop: K-center init, meta-matching updates on the
    features, periodic checkpoint scoring, argmin-score selection."""
    arch = bank.arch
    gntk_cfg = gntk_cfg or gntk.GntkConfig()
    scorer = scorer or gntk.GnfScorer(ds, gntk_cfg)
    rng = np.random.default_rng(cfg.seed)
    counts = plan_labels(ds, ratio)
    x, y = kcenter_init(ds, counts, rng)
    max_start = (bank.total_epochs // 2 if cfg.max_start_epoch is None
                 else cfg.max_start_epoch)

    adam = (nn.AdamState(x.shape, cfg.meta_lr, dtype=np.float64)
            if cfg.outer_optimizer == "adam" else None)

    result = CondenseResult(best=None)

    def record(step, loss):
        cond = CondensedData(features=x.copy(), labels=y.copy(),
                             source=ds.name, ratio=ratio, step=step)
        score = scorer.score(cond.features, cond.labels)
        result.checkpoints.append(cond)
        result.scores.append(score)
        result.log.append((step, loss, score))

    record(0, None)
    for step in range(1, cfg.outer_steps + 1):
        losses, gx = [], np.zeros_like(x)
        for _ in range(cfg.segment_batch):
            seg = None
            for _ in range(50):  # resample degenerate segments
                cand = sample_segment(bank, rng, cfg.p, max_start)
                den = float(np.sum((cand.start_params.astype(np.float64)
                                    - cand.target_params.astype(np.float64)) ** 2))
                if den > 1e-12:
                    seg = cand
                    break
            if seg is None:
                raise DegenerateSegment("all sampled expert segments are degenerate")
            l, g = meta_match_grad(x, y, arch, seg, cfg)
            losses.append(l)
            gx += g
        gx /= cfg.segment_batch
        loss = float(np.mean(losses))
        if adam is not None:
            x = adam.step(x, gx)
        else:
            x = x - cfg.meta_lr * gx
        if not np.isfinite(x).all():
            raise FloatingPointError(f"non-finite condensed features at step {step}")
        if step % cfg.score_every == 0 or step == cfg.outer_steps:
            record(step, loss)
        else:
            result.log.append((step, loss, None))

    best_i = int(np.argmin(result.scores))
    result.best = result.checkpoints[best_i]
    assert result.scores[best_i] == min(result.scores)
    return result


# ---------------------------------------------------------------------------
# structure variants and serialization


def build_structure_variant(x: np.ndarray, kind: str, k: int = 1) -> np.ndarray:
    """Dense normalized adjacency over condensed nodes, for the ablations
    that reattach a synthetic structure (kNN or cosine similarity)."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if kind == "knn":
        if k < 1 or k >= n:
            raise ValueError(f"k={k} out of range for {n} nodes")
        d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        a = np.zeros((n, n))
        nbrs = np.argsort(d2, axis=1)[:, :k]
        rows = np.repeat(np.arange(n), k)
        a[rows, nbrs.ravel()] = 1.0
        a = np.maximum(a, a.T)  # symmetrize
        np.fill_diagonal(a, 1.0)  # self-loops before GCN normalization
    elif kind == "cosine":
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        norms = np.where(norms == 0, 1.0, norms)
        a = np.clip((x / norms) @ (x / norms).T, 0.0, 1.0)
        np.fill_diagonal(a, 1.0)
    else:
        raise ValueError(f"unknown structure kind: {kind}")
    deg = a.sum(axis=1)
    dinv = 1.0 / np.sqrt(deg)
    return (a * dinv[:, None]) * dinv[None, :]


def export_features(cond: CondensedData, path: str) -> None:
    """CSV `class,f0,...,f{d-1}` for external plotting."""
    d = cond.features.shape[1]
    lines = ["class," + ",".join(f"f{i}" for i in range(d))]
    for c, row in zip(cond.labels, cond.features):
        lines.append(str(int(c)) + "," + ",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_condensed(cond: CondensedData, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    meta = {"source": cond.source, "ratio": cond.ratio,
            "n_prime": cond.num_nodes, "d": cond.features.shape[1],
            "C": int(cond.labels.max()) + 1 if cond.num_nodes else 0,
            "step": cond.step}
    atomic_write_text(os.path.join(path, "meta.json"), json.dumps(meta, indent=1))
    atomic_write_bytes(os.path.join(path, "features.bin"),
                       cond.features.astype("<f4").tobytes())
    atomic_write_bytes(os.path.join(path, "labels.bin"),
                       cond.labels.astype("<u4").tobytes())


def load_condensed(path: str) -> CondensedData:
    with open(os.path.join(path, "meta.json")) as f:
        meta = json.load(f)
    n, d = int(meta["n_prime"]), int(meta["d"])
    feats = np.fromfile(os.path.join(path, "features.bin"), dtype="<f4")
    if feats.size != n * d:
        raise ValueError("features.bin size mismatch")
    labels = np.fromfile(os.path.join(path, "labels.bin"), dtype="<u4")
    if labels.size != n:
        raise ValueError("labels.bin size mismatch")
    return CondensedData(features=feats.reshape(n, d).astype(np.float64),
                         labels=labels.astype(np.int64),
                         source=meta.get("source", ""),
                         ratio=float(meta.get("ratio", 0.0)),
                         step=int(meta.get("step", 0)))
