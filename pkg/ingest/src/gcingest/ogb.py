"""Converter for OGB node-property downloads (ogbn-arxiv layout).

Expects the extracted dataset root containing::

    raw/node-feat.csv[.gz]    one row of comma-separated floats per node
    raw/node-label.csv[.gz]   one integer label per node
    raw/edge.csv[.gz]         directed `u,v` pairs
    split/<scheme>/{train,valid,test}.csv[.gz]

Edges are canonicalized to undirected u<v with self-loops dropped and
duplicates merged, matching the native format contract.
"""

from __future__ import annotations

import glob
import os

import numpy as np

from graphcondense.data import GraphDataset, row_normalize_features


class RawFormatError(ValueError):
    pass


def _find(pattern: str) -> str:
    hits = sorted(glob.glob(pattern) + glob.glob(pattern + ".gz"))
    if not hits:
        raise FileNotFoundError(f"missing raw file: {pattern}[.gz]")
    return hits[0]


def _load_csv(path: str, dtype) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=2)


def load_ogb(root: str, name: str) -> GraphDataset:
    raw = os.path.join(root, "raw")
    feats = _load_csv(_find(os.path.join(raw, "node-feat.csv")), np.float64)
    labels = _load_csv(_find(os.path.join(raw, "node-label.csv")),
                       np.int64).reshape(-1)
    edges = _load_csv(_find(os.path.join(raw, "edge.csv")), np.int64)
    n = len(feats)
    if len(labels) != n:
        raise RawFormatError(f"{len(labels)} labels for {n} feature rows")

    keep = edges[:, 0] != edges[:, 1]
    e = edges[keep]
    e = np.stack([e.min(axis=1), e.max(axis=1)], axis=1)
    e = np.unique(e, axis=0)
    if e.size and e.max() >= n:
        raise RawFormatError(f"edge references node {e.max()} of {n}")

    split_dirs = sorted(glob.glob(os.path.join(root, "split", "*")))
    if not split_dirs:
        raise FileNotFoundError(f"missing split directory under {root}")
    sd = split_dirs[0]
    idx = {}
    for part in ("train", "valid", "test"):
        idx[part] = np.sort(_load_csv(_find(os.path.join(sd, f"{part}.csv")),
                                      np.int64).reshape(-1))

    return GraphDataset(
        name=name, num_nodes=n, num_features=feats.shape[1],
        num_classes=int(labels.max()) + 1,
        features=row_normalize_features(feats).astype(np.float32),
        labels=labels, edges=e,
        train_idx=idx["train"], val_idx=idx["valid"], test_idx=idx["test"])
