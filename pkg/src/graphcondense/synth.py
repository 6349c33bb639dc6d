"""Planted stochastic-block-model fixture generator for tests and demos."""

from __future__ import annotations

import numpy as np

from .data import GraphDataset


def make_sbm_fixture(num_nodes: int = 300, num_classes: int = 3,
                     num_features: int = 32, p_intra: float = 0.08,
                     p_inter: float = 0.005, train_per_class: int = 20,
                     val_frac: float = 0.3, test_frac: float = 0.5,
                     seed: int = 0, name: str = "sbm") -> GraphDataset:
    """3-block SBM by default: intra-edge prob 0.08, inter 0.005, features
    drawn as class mean plus unit Gaussian noise."""
    rng = np.random.default_rng(seed)
    n, c, d = num_nodes, num_classes, num_features
    labels = np.sort(np.arange(n) % c).astype(np.int64)  # balanced blocks

    means = rng.normal(0.0, 1.0, size=(c, d))
    feats = (means[labels] + rng.normal(0.0, 1.0, size=(n, d))).astype(np.float32)

    iu, iv = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[iv], p_intra, p_inter)
    keep = rng.random(len(p)) < p
    edges = np.stack([iu[keep], iv[keep]], axis=1).astype(np.int64)

    perm = rng.permutation(n)
    train = []
    taken = np.zeros(c, dtype=np.int64)
    for node in perm:
        if taken[labels[node]] < train_per_class:
            train.append(node)
            taken[labels[node]] += 1
    train = np.sort(np.asarray(train, dtype=np.int64))
    rest = perm[~np.isin(perm, train)]
    n_val = int(round(val_frac * n))
    n_test = int(round(test_frac * n))
    val = np.sort(rest[:n_val])
    test = np.sort(rest[n_val:n_val + n_test])

    return GraphDataset(name=name, num_nodes=n, num_features=d, num_classes=c,
                        features=feats, labels=labels, edges=edges,
                        train_idx=train, val_idx=val, test_idx=test)
