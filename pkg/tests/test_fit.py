import csv

import numpy as np
import pytest

from rtcmpn.em import EMConfig, assign_labels, fit
from rtcmpn.evaluation import accuracy, nmi
from rtcmpn.network import from_edges, with_features
from rtcmpn.similarity import compute_similarities
from rtcmpn.synthetic import SyntheticSpec, generate_network

from conftest import two_cliques


def _fit(net, k, **kw):
    sims = compute_similarities(net)
    return sims, fit(net, sims, EMConfig(k_clusters=k, **kw))


def test_config_validation():
    for bad in (dict(k_clusters=0), dict(k_clusters=2, max_iters=0),
                dict(k_clusters=2, tol=-1.0), dict(k_clusters=2, tol_mode="loose")):
        with pytest.raises(ValueError):
            EMConfig(**bad)


def test_single_cluster():
    net, _ = two_cliques()
    sims, res = _fit(net, 1)
    assert (res.labels == 0).all()
    assert (res.final_state.v == 1.0).all()
    assert res.converged


@pytest.mark.parametrize("seed", range(10))
def test_two_cliques_recovered(seed):
    net, truth = two_cliques()
    _, res = _fit(net, 2, seed=seed)
    assert nmi(res.labels, truth) == pytest.approx(100.0)
    assert accuracy(res.labels, truth) == 100.0


def test_trace_is_monotone_and_written(tmp_path):
    net, _ = generate_network(SyntheticSpec(n_vertices=60, k_clusters=3, m_features=60, seed=2))
    path = tmp_path / "trace.csv"
    _, res = _fit(net, 3, seed=1, trace_path=str(path))
    prev = res.initial_loglik
    for _, ll, _ in res.trace:
        assert ll >= prev - 1e-6 * (1 + abs(prev))
        prev = ll
    assert res.decreases == 0
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iteration", "loglik", "delta"]
    assert len(rows) == res.iterations_run + 1
    assert float(rows[-1][1]) == res.trace[-1][1]


def test_deterministic():
    net, _ = generate_network(SyntheticSpec(n_vertices=50, k_clusters=2, m_features=40, seed=4))
    _, a = _fit(net, 2, seed=3)
    _, b = _fit(net, 2, seed=3)
    assert a.labels.tolist() == b.labels.tolist()
    assert a.trace == b.trace
    assert np.array_equal(a.final_state.v, b.final_state.v)


def test_iteration_cap():
    net, _ = generate_network(SyntheticSpec(n_vertices=60, k_clusters=3, m_features=60, seed=0))
    _, res = _fit(net, 3, max_iters=3, tol=0.0)
    assert res.iterations_run == 3 and not res.converged


def test_isolated_featureless_vertex():
    net, _ = two_cliques()
    src, dst = net.adjacency.nonzero()
    keep = src < dst
    bigger = from_edges(src[keep], dst[keep], n_vertices=11)
    feats = net.features.nonzero()
    bigger = with_features(bigger, feats[0], feats[1], n_features=net.n_features)
    sims, res = _fit(bigger, 2)
    st = res.final_state
    assert np.isfinite(st.v).all() and np.isfinite(res.trace[-1][1])
    assert abs(st.v[10].sum() - 1) <= 1e-12
    assert nmi(res.labels[:10], np.repeat([0, 1], 5)) == pytest.approx(100.0)


def test_empty_graph_rejected():
    net = from_edges([], [], n_vertices=3)
    with pytest.raises(ValueError, match="without edges"):
        _fit(net, 1)


def test_neighbor_preference_favors_similar_neighbors():
    net, _ = generate_network(SyntheticSpec(n_vertices=60, k_clusters=3, m_features=60, seed=1))
    sims, res = _fit(net, 3, seed=0)
    st = res.final_state
    eta = st.s[sims.rows, 0] * st.s[sims.cols, 0] * sims.z + st.s[sims.rows, 1] * st.s[sims.cols, 1] * sims.g
    hits = total = 0
    for i in range(net.n_vertices):
        lo, hi = sims.indptr[i], sims.indptr[i + 1]
        if hi - lo < 2 or np.ptp(eta[lo:hi]) == 0:
            continue
        best = lo + int(np.argmax(eta[lo:hi]))
        total += 1
        hits += st.x[best] > 1.0 / (hi - lo)
    assert hits >= 0.8 * total


def test_assign_labels_ties():
    assert assign_labels([[0.5, 0.5], [0.2, 0.8]]).tolist() == [0, 1]
