"""Expert trajectory bank: train, persist, and sample GNN parameter snapshots."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import nn
from .data import GraphDataset, atomic_write_bytes, normalize_adjacency


class BankFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ExpertConfig:
    num_experts: int = 20
    total_epochs: int = 2400
    snapshot_interval: int = 100
    lr: float = 0.1
    weight_decay: float = 0.0
    seed_base: int = 0

    def __post_init__(self):
        if self.num_experts < 1:
            raise ValueError("need at least one expert")
        if self.total_epochs % self.snapshot_interval != 0:
            raise ValueError("snapshot interval must divide total epochs")

    @property
    def snapshots_per_trajectory(self) -> int:
        return self.total_epochs // self.snapshot_interval + 1


@dataclass(frozen=True)
class TrajectoryBank:
    arch: nn.GnnArch
    total_epochs: int
    snapshot_interval: int
    # (K, T/e + 1, param_len) float32, epoch axis includes epoch 0
    snapshots: np.ndarray
    final_train_acc: np.ndarray  # (K,)
    final_val_acc: np.ndarray    # (K,)

    def __post_init__(self):
        k, s, p = self.snapshots.shape
        if s != self.total_epochs // self.snapshot_interval + 1:
            raise BankFormatError("snapshot count does not match epochs/interval")
        if p != self.arch.param_len:
            raise BankFormatError("snapshot width does not match arch param_len")
        if not np.isfinite(self.snapshots).all():
            raise BankFormatError("non-finite snapshot values")
        self.snapshots.setflags(write=False)

    @property
    def num_experts(self) -> int:
        return self.snapshots.shape[0]

    @property
    def epochs(self) -> np.ndarray:
        return np.arange(self.snapshots.shape[1]) * self.snapshot_interval

    def snapshot(self, traj: int, epoch: int) -> np.ndarray:
        if epoch % self.snapshot_interval != 0:
            raise ValueError(f"epoch {epoch} is not a stored snapshot epoch")
        return self.snapshots[traj, epoch // self.snapshot_interval]


@dataclass(frozen=True)
class Segment:
    trajectory: int
    start_epoch: int
    start_params: np.ndarray   # theta*_{t0}
    target_params: np.ndarray  # theta*_{t0+p}


def train_experts(ds: GraphDataset, arch: nn.GnnArch, cfg: ExpertConfig) -> TrajectoryBank:
    """K independent plain-GD runs with seeds base..base+K-1, snapshotting
    every interval including the untrained epoch-0 parameters."""
    adj = normalize_adjacency(ds.edges, ds.num_nodes)
    x = ds.features.astype(np.float32)
    n_snap = cfg.snapshots_per_trajectory
    snaps = np.empty((cfg.num_experts, n_snap, arch.param_len), dtype=np.float32)
    tr_acc = np.empty(cfg.num_experts)
    va_acc = np.empty(cfg.num_experts)
    for i in range(cfg.num_experts):
        rng = np.random.default_rng(cfg.seed_base + i)
        params = arch.init_params(rng, dtype=np.float32)
        snaps[i, 0] = params
        for epoch in range(1, cfg.total_epochs + 1):
            loss, grad = nn.loss_and_grad(arch, adj, x, ds.labels,
                                          ds.train_idx, params, cfg.weight_decay)
            if not np.isfinite(loss):
                raise nn.TrainingDiverged(epoch, f"{loss} (expert {i})")
            params = params - np.float32(cfg.lr) * grad
            if epoch % cfg.snapshot_interval == 0:
                snaps[i, epoch // cfg.snapshot_interval] = params
        logits = nn.forward(arch, adj, x, params)
        tr_acc[i] = nn.accuracy(logits, ds.labels, ds.train_idx)
        va_acc[i] = (nn.accuracy(logits, ds.labels, ds.val_idx)
                     if ds.val_idx.size else np.nan)
    return TrajectoryBank(arch=arch, total_epochs=cfg.total_epochs,
                          snapshot_interval=cfg.snapshot_interval,
                          snapshots=snaps, final_train_acc=tr_acc,
                          final_val_acc=va_acc)


def sample_segment(bank: TrajectoryBank, rng: np.random.Generator,
                   p: int, max_start_epoch: int) -> Segment:
    """Uniform over (trajectory, start snapshot) with start <= max_start_epoch
    and start + p within the trajectory."""
    e = bank.snapshot_interval
    if p % e != 0 or p <= 0:
        raise ValueError(f"p={p} must be a positive multiple of the interval {e}")
    last_start = min(max_start_epoch, bank.total_epochs - p)
    if last_start < 0:
        raise ValueError("no admissible start epoch for the requested p")
    n_starts = last_start // e + 1
    traj = int(rng.integers(bank.num_experts))
    t0 = int(rng.integers(n_starts)) * e
    return Segment(trajectory=traj, start_epoch=t0,
                   start_params=bank.snapshot(traj, t0),
                   target_params=bank.snapshot(traj, t0 + p))


_MAGIC = "graphcondense-bank-v1"


def save_bank(bank: TrajectoryBank, path: str) -> None:
    header = {
        "magic": _MAGIC,
        "arch": {"kind": bank.arch.kind, "in_dim": bank.arch.in_dim,
                 "out_dim": bank.arch.out_dim, "hidden": bank.arch.hidden,
                 "prop_depth": bank.arch.prop_depth},
        "K": bank.num_experts,
        "T": bank.total_epochs,
        "interval": bank.snapshot_interval,
        "param_len": bank.arch.param_len,
        "final_train_acc": bank.final_train_acc.tolist(),
        "final_val_acc": bank.final_val_acc.tolist(),
    }
    payload = (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
    payload += bank.snapshots.astype("<f4").tobytes()
    atomic_write_bytes(path, payload)


def load_bank(path: str) -> TrajectoryBank:
    if not os.path.exists(path):
        raise BankFormatError(f"missing bank file: {path}")
    with open(path, "rb") as f:
        header_line = f.readline()
        raw = f.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BankFormatError(f"corrupted bank header: {exc}") from exc
    if header.get("magic") != _MAGIC:
        raise BankFormatError("not a trajectory bank file")
    arch = nn.GnnArch(**header["arch"])
    k, t, e = header["K"], header["T"], header["interval"]
    if header["param_len"] != arch.param_len:
        raise BankFormatError("header param_len disagrees with arch")
    n_snap = t // e + 1
    expected = k * n_snap * arch.param_len * 4
    if len(raw) != expected:
        raise BankFormatError(
            f"bank payload is {len(raw)} bytes, expected {expected}")
    snaps = np.frombuffer(raw, dtype="<f4").reshape(k, n_snap, arch.param_len).copy()
    return TrajectoryBank(arch=arch, total_epochs=t, snapshot_interval=e,
                          snapshots=snaps,
                          final_train_acc=np.asarray(header["final_train_acc"]),
                          final_val_acc=np.asarray(header["final_val_acc"]))
