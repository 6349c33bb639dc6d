"""Parser for the pickled planetoid citation-dataset distribution.

A raw directory holds eight files per dataset, e.g. for cora:
``ind.cora.{x,y,tx,ty,allx,ally,graph,test.index}``.  ``allx``/``ally``
cover the non-test nodes (ids 0..n_known-1), ``tx``/``ty`` the test nodes
in the (unsorted) order of ``test.index``, and ``graph`` is an adjacency
dict.  Citeseer's test.index has gaps — isolated nodes that appear in no
file; they are kept as zero-feature, label-0, degree-0 nodes.
"""

from __future__ import annotations

import os
import pickle

import numpy as np
import scipy.sparse as sp

from graphcondense.data import GraphDataset, row_normalize_features

SUFFIXES = ("x", "y", "tx", "ty", "allx", "ally", "graph")


class RawFormatError(ValueError):
    pass


def _read_pickles(raw_dir: str, name: str) -> dict:
    objs = {}
    for suffix in SUFFIXES:
        path = os.path.join(raw_dir, f"ind.{name}.{suffix}")
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing raw file: {path}")
        with open(path, "rb") as f:
            objs[suffix] = pickle.load(f, encoding="latin1")
    return objs


def canonical_edges(graph: dict, num_nodes: int) -> np.ndarray:
    """Undirected u<v edge list: self-loops dropped, duplicates merged."""
    us, vs = [], []
    for node, nbrs in graph.items():
        for nbr in nbrs:
            if node == nbr:
                continue
            us.append(min(node, nbr))
            vs.append(max(node, nbr))
    if not us:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.stack([np.asarray(us, dtype=np.int64),
                  np.asarray(vs, dtype=np.int64)], axis=1)
    if e.max() >= num_nodes:
        raise RawFormatError(
            f"graph references node {e.max()} but only {num_nodes} exist")
    e = np.unique(e, axis=0)  # sorts lexicographically too
    return e


def load_planetoid(raw_dir: str, name: str,
                   val_size: int = 500) -> GraphDataset:
    """Parse one raw planetoid dataset.  ``val_size`` is the conventional
    500-node validation window taken right after the labeled train block."""
    objs = _read_pickles(raw_dir, name)
    test_path = os.path.join(raw_dir, f"ind.{name}.test.index")
    if not os.path.exists(test_path):
        raise FileNotFoundError(f"missing raw file: {test_path}")
    test_idx = np.loadtxt(test_path, dtype=np.int64).reshape(-1)

    allx = sp.csr_matrix(objs["allx"])
    tx = sp.csr_matrix(objs["tx"])
    ally = np.asarray(objs["ally"])
    ty = np.asarray(objs["ty"])
    n_known, d = allx.shape
    if tx.shape[1] != d:
        raise RawFormatError(f"tx has {tx.shape[1]} features, allx has {d}")
    if len(test_idx) != tx.shape[0]:
        raise RawFormatError(
            f"test.index lists {len(test_idx)} nodes, tx has {tx.shape[0]} rows")
    if test_idx.min() != n_known:
        raise RawFormatError(
            f"test ids start at {test_idx.min()}, expected {n_known}")

    # gaps in test.index are isolated nodes (citeseer); keep them as zeros
    n = int(test_idx.max()) + 1
    features = np.zeros((n, d), dtype=np.float64)
    features[:n_known] = allx.toarray()
    features[test_idx] = tx.toarray()

    num_classes = ally.shape[1]
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_known] = np.argmax(ally, axis=1)
    labels[test_idx] = np.argmax(ty, axis=1)

    n_train = np.asarray(objs["y"]).shape[0]
    train_idx = np.arange(n_train, dtype=np.int64)
    val_idx = np.arange(n_train, n_train + val_size, dtype=np.int64)
    if val_idx[-1] >= n_known:
        raise RawFormatError("validation range overlaps the test block")

    return GraphDataset(
        name=name, num_nodes=n, num_features=d, num_classes=num_classes,
        features=row_normalize_features(features).astype(np.float32),
        labels=labels,
        edges=canonical_edges(objs["graph"], n),
        train_idx=train_idx, val_idx=val_idx, test_idx=np.sort(test_idx))
