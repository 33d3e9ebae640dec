import numpy as np
import pytest

from rtcmpn.network import from_edges, with_features
from rtcmpn.similarity import compute_similarities
from rtcmpn.state import init_state, segment_sum


def random_instance(seed, n=5, k=2, m=6, edge_p=0.6, feat_p=0.5, perturb=True,
                    path=False):
    """Small random network plus a randomized (non-initial) model state."""
    rng = np.random.default_rng(seed)
    while True:
        upper = np.triu(rng.random((n, n)) < edge_p, 1)
        if path:  # no isolated vertices
            upper[np.arange(n - 1), np.arange(1, n)] = True
        if upper.any():
            break
    r, c = np.nonzero(upper)
    net = from_edges(r, c, n)
    fj, fi = np.nonzero(rng.random((m, n)) < feat_p)
    net = with_features(net, fj, fi, m)
    sims = compute_similarities(net)
    state = init_state(net, sims, k, seed)
    if perturb:
        state.lam = rng.uniform(0.5, 5.0, n)
        x = rng.uniform(0.05, 1.0, sims.n_pairs)
        state.x = x / segment_sum(x, sims.indptr)[sims.rows]
        state.s = rng.dirichlet([1.0, 1.0], n)
    return net, sims, state


def two_cliques():
    """Two disjoint 5-cliques, each owning a disjoint block of 4 features."""
    src, dst = [], []
    for base in (0, 5):
        for i in range(5):
            for j in range(i + 1, 5):
                src.append(base + i)
                dst.append(base + j)
    net = from_edges(src, dst)
    feats, verts = [], []
    for v in range(10):
        for f in range(4):
            feats.append((v // 5) * 4 + f)
            verts.append(v)
    net = with_features(net, feats, verts)
    return net, np.repeat([0, 1], 5)


@pytest.fixture
def instance():
    return random_instance(0)


@pytest.fixture
def cliques():
    return two_cliques()
