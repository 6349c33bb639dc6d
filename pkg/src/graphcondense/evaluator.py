"""Train-from-scratch evaluation of condensed data and coreset baselines."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import nn
from .condenser import CondensedData, kcenter_indices, propagated_features
from .data import GraphDataset, atomic_write_text, induced_subgraph, normalize_adjacency


@dataclass
class EvalReport:
    dataset: str
    ratio: float
    method: str
    architecture: str
    per_seed_acc: List[float]
    seconds: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_seed_acc))

    @property
    def std(self) -> float:
        # population std (denominator n)
        return float(np.std(self.per_seed_acc))


@dataclass(frozen=True)
class EvalConfig:
    repeats: int = 10
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    eval_every: int = 1


def _small_set(cond_or_ds, induced: bool):
    """Returns (features, labels, adj-or-None, train_idx) of the small set."""
    if isinstance(cond_or_ds, CondensedData):
        return (cond_or_ds.features.astype(np.float32), cond_or_ds.labels,
                None, np.arange(cond_or_ds.num_nodes))
    ds = cond_or_ds
    adj = normalize_adjacency(ds.edges, ds.num_nodes) if induced else None
    return (ds.features.astype(np.float32), ds.labels, adj,
            np.arange(ds.num_nodes))


def eval_condensed(ds: GraphDataset, small, arch: nn.GnnArch,
                   cfg: EvalConfig = EvalConfig(), method: str = "sfgc",
                   induced: bool = False, ratio: float = 0.0) -> EvalReport:
    """Train ``arch`` on the small set for each seed, select the epoch by
    best validation accuracy on the original graph, report test accuracy."""
    xs, ys, adj_s, idx_s = _small_set(small, induced)
    adj_full = normalize_adjacency(ds.edges, ds.num_nodes)
    x_full = ds.features.astype(np.float32)
    if arch.kind == nn.SGC:
        # propagation is fixed; hoist it out of the per-epoch evaluation
        h = x_full
        for _ in range(arch.prop_depth):
            h = adj_full.matrix @ h
        x_full_eval, adj_eval = h, None
    elif arch.kind == nn.MLP:
        x_full_eval, adj_eval = x_full, None
    else:
        x_full_eval, adj_eval = x_full, adj_full

    accs = []
    t0 = time.perf_counter()
    for rep in range(cfg.repeats):
        tc = nn.TrainConfig(optimizer=cfg.train.optimizer, lr=cfg.train.lr,
                            weight_decay=cfg.train.weight_decay,
                            epochs=cfg.train.epochs, seed=cfg.train.seed + rep,
                            dtype=cfg.train.dtype)
        rng = np.random.default_rng(tc.seed)
        params = arch.init_params(rng, dtype=np.dtype(tc.dtype))
        adam = (nn.AdamState(params.shape, tc.lr, dtype=np.dtype(tc.dtype))
                if tc.optimizer == "adam" else None)
        best_val, best_params = -1.0, params.copy()
        for epoch in range(tc.epochs):
            loss, grad = nn.loss_and_grad(arch, adj_s, xs, ys, idx_s,
                                          params, tc.weight_decay)
            if not np.isfinite(loss):
                raise nn.TrainingDiverged(epoch, f"{loss} (seed {tc.seed})")
            params = adam.step(params, grad) if adam else params - tc.lr * grad
            if ds.val_idx.size and (epoch % cfg.eval_every == 0
                                    or epoch == tc.epochs - 1):
                logits = nn.forward(arch, adj_eval, x_full_eval, params)
                va = nn.accuracy(logits, ds.labels, ds.val_idx)
                if va > best_val:
                    best_val, best_params = va, params.copy()
        if not ds.val_idx.size:
            best_params = params
        logits = nn.forward(arch, adj_eval, x_full_eval, best_params)
        accs.append(nn.accuracy(logits, ds.labels, ds.test_idx))
    return EvalReport(dataset=ds.name, ratio=ratio, method=method,
                      architecture=arch.kind, per_seed_acc=accs,
                      seconds=time.perf_counter() - t0)


def cross_arch_eval(ds: GraphDataset, cond: CondensedData,
                    kinds=(nn.MLP, nn.GCN, nn.SGC),
                    cfg: EvalConfig = EvalConfig(), hidden: int = 256,
                    ratio: float = 0.0) -> List[EvalReport]:
    """One evaluation per architecture plus an average row."""
    reports = []
    for kind in kinds:
        arch = nn.GnnArch(kind=kind, in_dim=ds.num_features,
                          out_dim=ds.num_classes, hidden=hidden)
        reports.append(eval_condensed(ds, cond, arch, cfg, ratio=ratio))
    avg = EvalReport(dataset=ds.name, ratio=ratio, method="sfgc",
                     architecture="avg",
                     per_seed_acc=[r.mean for r in reports],
                     seconds=sum(r.seconds for r in reports))
    return reports + [avg]


def coreset_select(ds: GraphDataset, method: str, counts: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    """Per-class selection of real train nodes: random, herding (greedy
    class-mean matching), or kcenter, in 2-hop propagated feature space."""
    counts = np.asarray(counts, dtype=np.int64)
    if method == "kcenter":
        return kcenter_indices(ds, counts, rng)
    prop = propagated_features(ds) if method == "herding" else None
    picked = []
    for c, k in enumerate(counts):
        k = int(k)
        nodes = ds.train_idx[ds.labels[ds.train_idx] == c]
        if len(nodes) < k:
            raise ValueError(f"class {c} has {len(nodes)} train nodes < {k}")
        if method == "random":
            picked.append(rng.choice(nodes, size=k, replace=False))
        elif method == "herding":
            feats = prop[nodes]
            mu = feats.mean(axis=0)
            chosen: List[int] = []
            total = np.zeros_like(mu)
            remaining = np.ones(len(nodes), dtype=bool)
            for step in range(k):
                cand_means = (total + feats) / (step + 1)
                dist = np.linalg.norm(cand_means - mu, axis=1)
                dist[~remaining] = np.inf
                j = int(np.argmin(dist))
                chosen.append(j)
                remaining[j] = False
                total += feats[j]
            picked.append(nodes[np.asarray(chosen)])
        else:
            raise ValueError(f"unknown coreset method: {method}")
    return np.concatenate(picked)


def coreset_dataset(ds: GraphDataset, idx: np.ndarray, induced: bool):
    """The small set a coreset defines: graph-free (CondensedData) by
    default, or the induced subgraph for the structure-preserving mode."""
    if induced:
        return induced_subgraph(ds, idx)
    return CondensedData(features=ds.features[idx].astype(np.float64),
                         labels=ds.labels[idx].copy(), source=ds.name)


def emit_report(reports: List[EvalReport], path: str, fmt: str = "csv") -> None:
    header = ["dataset", "ratio", "method", "arch", "mean", "std", "seconds"]
    rows = [[r.dataset, f"{r.ratio:g}", r.method, r.architecture,
             f"{r.mean:.4f}", f"{r.std:.4f}", f"{r.seconds:.2f}"]
            for r in reports]
    if fmt == "csv":
        lines = [",".join(header)] + [",".join(row) for row in rows]
    elif fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(row) + " |" for row in rows]
    else:
        raise ValueError(f"unknown report format: {fmt}")
    atomic_write_text(path, "\n".join(lines) + "\n")
