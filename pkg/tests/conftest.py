import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphcondense.synth import make_sbm_fixture


@pytest.fixture(scope="session")
def sbm():
    return make_sbm_fixture(seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_graph(rng, n, p=0.4):
    """Random undirected edge list on n nodes."""
    iu, iv = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return np.stack([iu[keep], iv[keep]], axis=1).astype(np.int64)
