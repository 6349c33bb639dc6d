"""Graph data model, on-disk format, adjacency normalization, subgraphs."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class DatasetError(ValueError):
    """Raised when a dataset directory or its arrays fail validation."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GraphDataset:
    """An undirected node-classification graph with fixed splits.

    Edges are stored once with u < v and no self-loops; self-loops are
    only introduced inside :func:`normalize_adjacency`.
    """

    name: str
    num_nodes: int
    num_features: int
    num_classes: int
    features: np.ndarray  # (N, d) float32
    labels: np.ndarray    # (N,) int64 in [0, C)
    edges: np.ndarray     # (E, 2) int64, u < v, deduplicated
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        n, c = self.num_nodes, self.num_classes
        if self.features.shape != (n, self.num_features):
            raise DatasetError(
                f"features shape {self.features.shape} != ({n}, {self.num_features})")
        if self.labels.shape != (n,):
            raise DatasetError(f"labels shape {self.labels.shape} != ({n},)")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= c):
            raise DatasetError("label id outside [0, num_classes)")
        if self.edges.size:
            u, v = self.edges[:, 0], self.edges[:, 1]
            if (u >= v).any():
                raise DatasetError("edges must be canonical with u < v")
            if u.min() < 0 or v.max() >= n:
                raise DatasetError("edge endpoint out of range")
            if len(np.unique(self.edges[:, 0] * n + self.edges[:, 1])) != len(self.edges):
                raise DatasetError("duplicate edges")
        splits = [self.train_idx, self.val_idx, self.test_idx]
        for idx in splits:
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise DatasetError("split index out of range")
            if len(np.unique(idx)) != len(idx):
                raise DatasetError("duplicate index within a split")
        all_idx = np.concatenate(splits)
        if len(np.unique(all_idx)) != len(all_idx):
            raise DatasetError("train/val/test splits overlap")
        present = np.unique(self.labels[self.train_idx])
        if len(present) != c:
            missing = sorted(set(range(c)) - set(present.tolist()))
            raise DatasetError(f"classes missing from train split: {missing}")
        for a in (self.features, self.labels, self.edges, *splits):
            _frozen(a)

    @property
    def num_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class NormalizedAdj:
    """Symmetric GCN propagation operator D^{-1/2}(A+I)D^{-1/2} in CSR form."""

    matrix: sp.csr_matrix
    degrees: np.ndarray  # (N,) degree including the self-loop

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other):
        return self.matrix @ other


def normalize_adjacency(edges: np.ndarray, num_nodes: int) -> NormalizedAdj:
    """Build the symmetric-normalized adjacency with self-loops added."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise DatasetError("edge endpoint out of range")
    u = np.concatenate([edges[:, 0], edges[:, 1], np.arange(num_nodes)])
    v = np.concatenate([edges[:, 1], edges[:, 0], np.arange(num_nodes)])
    data = np.ones(len(u), dtype=np.float64)
    a = sp.coo_matrix((data, (u, v)), shape=(num_nodes, num_nodes)).tocsr()
    a.sum_duplicates()
    deg = np.asarray(a.sum(axis=1)).ravel()
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(d_inv_sqrt)
    mat = (d @ a @ d).tocsr()
    mat.sort_indices()
    return NormalizedAdj(matrix=mat, degrees=_frozen(deg))


def row_normalize_features(x: np.ndarray) -> np.ndarray:
    """Scale each nonzero row to sum 1; zero rows are left unchanged."""
    x = np.asarray(x)
    sums = x.sum(axis=1, keepdims=True)
    safe = np.where(sums == 0, 1.0, sums)
    return (x / safe).astype(x.dtype)


def induced_subgraph(ds: GraphDataset, ids: np.ndarray) -> GraphDataset:
    """Restrict the graph to ``ids``, relabeling nodes to 0..len(ids)-1.

    Split lists are intersected with ``ids`` and remapped. Classes absent
    from the remapped train split keep their ids (num_classes unchanged),
    so the result may fail full validation; callers needing a trainable
    subgraph should check. Validation of the train-class invariant is
    skipped here on purpose.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise DatasetError("duplicate id in subgraph selection")
    if ids.size and (ids.min() < 0 or ids.max() >= ds.num_nodes):
        raise DatasetError("subgraph id out of range")
    pos = np.full(ds.num_nodes, -1, dtype=np.int64)
    pos[ids] = np.arange(len(ids))
    if ds.edges.size:
        keep = (pos[ds.edges[:, 0]] >= 0) & (pos[ds.edges[:, 1]] >= 0)
        e = pos[ds.edges[keep]]
        e = np.sort(e, axis=1)
        # canonical order after relabeling
        order = np.lexsort((e[:, 1], e[:, 0])) if e.size else np.array([], dtype=np.int64)
        e = e[order]
    else:
        e = np.zeros((0, 2), dtype=np.int64)

    def remap(idx):
        m = pos[idx]
        return np.sort(m[m >= 0])

    return _build_unchecked(
        name=f"{ds.name}[{len(ids)}]",
        num_nodes=len(ids),
        num_features=ds.num_features,
        num_classes=ds.num_classes,
        features=ds.features[ids].copy(),
        labels=ds.labels[ids].copy(),
        edges=e,
        train_idx=remap(ds.train_idx),
        val_idx=remap(ds.val_idx),
        test_idx=remap(ds.test_idx),
    )


def _build_unchecked(**kw) -> GraphDataset:
    """Construct bypassing the train-class-coverage check (subgraphs)."""
    ds = object.__new__(GraphDataset)
    for k, v in kw.items():
        object.__setattr__(ds, k, v)
    for a in (ds.features, ds.labels, ds.edges, ds.train_idx, ds.val_idx, ds.test_idx):
        _frozen(a)
    return ds


# ---------------------------------------------------------------------------
# on-disk format


def atomic_write_bytes(path: str, payload: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_dataset(ds: GraphDataset, path: str) -> None:
    """Write the dataset directory (meta.json + binary arrays + splits)."""
    os.makedirs(path, exist_ok=True)
    meta = {
        "name": ds.name,
        "num_nodes": ds.num_nodes,
        "num_features": ds.num_features,
        "num_classes": ds.num_classes,
        "num_edges": ds.num_edges,
    }
    atomic_write_text(os.path.join(path, "meta.json"), json.dumps(meta, indent=1))
    atomic_write_bytes(os.path.join(path, "features.bin"),
                       ds.features.astype("<f4").tobytes())
    atomic_write_bytes(os.path.join(path, "labels.bin"),
                       ds.labels.astype("<u4").tobytes())
    atomic_write_bytes(os.path.join(path, "edges.bin"),
                       ds.edges.astype("<u4").tobytes())
    splits = {
        "train": ds.train_idx.tolist(),
        "val": ds.val_idx.tolist(),
        "test": ds.test_idx.tolist(),
    }
    atomic_write_text(os.path.join(path, "splits.json"), json.dumps(splits))


def _read_exact(path: str, dtype, count: int, what: str) -> np.ndarray:
    if not os.path.exists(path):
        raise DatasetError(f"missing file: {path}")
    raw = np.fromfile(path, dtype=dtype)
    if raw.size != count:
        raise DatasetError(
            f"{what}: expected {count} entries, file holds {raw.size}")
    return raw


def load_dataset(path: str) -> GraphDataset:
    """Load and validate a dataset directory."""
    meta_path = os.path.join(path, "meta.json")
    if not os.path.exists(meta_path):
        raise DatasetError(f"missing file: {meta_path}")
    with open(meta_path) as f:
        meta = json.load(f)
    n = int(meta["num_nodes"])
    d = int(meta["num_features"])
    c = int(meta["num_classes"])
    e = int(meta["num_edges"])
    feats = _read_exact(os.path.join(path, "features.bin"), "<f4", n * d,
                        "features.bin").reshape(n, d)
    labels = _read_exact(os.path.join(path, "labels.bin"), "<u4", n,
                         "labels.bin").astype(np.int64)
    edges = _read_exact(os.path.join(path, "edges.bin"), "<u4", e * 2,
                        "edges.bin").astype(np.int64).reshape(e, 2)
    splits_path = os.path.join(path, "splits.json")
    if not os.path.exists(splits_path):
        raise DatasetError(f"missing file: {splits_path}")
    with open(splits_path) as f:
        splits = json.load(f)
    return GraphDataset(
        name=str(meta["name"]),
        num_nodes=n,
        num_features=d,
        num_classes=c,
        features=feats,
        labels=labels,
        edges=edges,
        train_idx=np.asarray(splits["train"], dtype=np.int64),
        val_idx=np.asarray(splits["val"], dtype=np.int64),
        test_idx=np.asarray(splits["test"], dtype=np.int64),
    )
