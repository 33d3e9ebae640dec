"""M-step update rules and the EM driver.

Every update returns a new array and leaves ``state`` untouched; :func:`fit`
swaps the arrays in one block at a time (V, U, X, H, S, lambda), so each rule
sees the freshest values of the blocks updated before it.

Four of the rules share one multiplicative form.  For a block ``w`` on a
simplex with gain ``delta`` and loss ``loss`` (the positive and negative parts
of the block gradient), the new value is

    (delta * a + w) / (loss * a + b),   a = sum(w / loss)

where ``b`` is a per-simplex offset that differs between the rules.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .network import AttributedNetwork
from .similarity import SimilarityMaps
from .state import (
    EPS_NUM,
    LAMBDA_MAX,
    LAMBDA_MIN,
    EnergyCache,
    ModelState,
    NumericalError,
    Responsibilities,
    energy_cache,
    feature_entries,
    init_state,
    log_likelihood,
    lower_bound,
    neighbor_mix,
    pair_matrix,
    responsibilities,
    segment_sum,
)

logger = logging.getLogger(__name__)


@dataclass
class EMConfig:
    k_clusters: int
    max_iters: int = 300
    tol: float = 1e-6
    tol_mode: str = "relative"   # "relative": dL <= tol * (1 + |L|); "absolute": dL <= tol
    seed: int = 0
    renormalize: bool = True
    weighted_h: bool = False     # weight H residuals by lambda_i
    guard: bool = True           # damp V/X/H/S steps that would lower the bound
    trace_path: str | None = None

    def __post_init__(self):
        if self.k_clusters < 1:
            raise ValueError("k_clusters must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.tol_mode not in ("relative", "absolute"):
            raise ValueError(f"unknown tol_mode {self.tol_mode!r}")


@dataclass
class FitResult:
    final_state: ModelState
    labels: np.ndarray
    trace: list[tuple[int, float, float]]
    converged: bool
    iterations_run: int
    initial_loglik: float = 0.0
    decreases: int = 0
    guarded_iterations: int = 0
    iter_seconds: list[float] = field(default_factory=list)


def _finite(arr, what):
    bad = ~np.isfinite(arr)
    if bad.any():
        raise NumericalError(what, index=tuple(int(i) for i in np.argwhere(bad)[0]))
    return arr


def _rows_to_simplex(p):
    """Scale rows to unit sum; empty or vanishing rows become uniform."""
    tot = p.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > EPS_NUM, p / tot, 1.0 / p.shape[1])


def _cols_to_simplex(p):
    return _rows_to_simplex(p.T).T


def update_v(state: ModelState, resp: Responsibilities, net: AttributedNetwork,
             sims: SimilarityMaps, renormalize: bool = True) -> np.ndarray:
    v, lam = state.v, state.lam[:, None]
    _, _, f_indptr = feature_entries(net)
    edge_mass = segment_sum(resp.theta, sims.indptr)
    feat_mass = segment_sum(resp.phi, f_indptr)
    xh = neighbor_mix(state, sims)
    gain = 2 * edge_mass + feat_mass + lam * xh * v
    loss = np.maximum(2 * v.sum(axis=0)[None, :] + lam * v, EPS_NUM)
    a = (v / loss).sum(axis=1, keepdims=True)
    b = (v * gain / loss).sum(axis=1, keepdims=True)
    new = (gain * a + v) / np.maximum(loss * a + b, EPS_NUM)
    _finite(new, "V update")
    return _rows_to_simplex(new) if renormalize else new


def update_u(resp: Responsibilities, net: AttributedNetwork) -> np.ndarray:
    feat, _, _ = feature_entries(net)
    m, k = net.n_features, resp.phi.shape[1]
    num = np.column_stack([np.bincount(feat, weights=resp.phi[:, c], minlength=m)
                           for c in range(k)]) if m else np.zeros((0, k))
    return _cols_to_simplex(num) if m else num


def update_x(state: ModelState, sims: SimilarityMaps, cache: EnergyCache,
             renormalize: bool = True) -> np.ndarray:
    r, c, x = sims.rows, sims.cols, state.x
    if x.size == 0:
        return x.copy()
    lam = state.lam[r]
    h = state.h
    vh = np.einsum("pk,pk->p", state.v[r], h[c])
    xhh = np.einsum("pk,pk->p", neighbor_mix(state, sims)[r], h[c])
    gain = (lam * vh + cache.eta) * x
    loss = np.maximum(lam * xhh + cache.eta * cache.boltz / max(cache.a_norm, EPS_NUM), EPS_NUM)
    a = segment_sum(x / loss, sims.indptr)[r]
    b = segment_sum(x * gain / loss, sims.indptr)[r]
    new = (gain * a + x) / np.maximum(loss * a + b, EPS_NUM)
    _finite(new, "X update")
    if renormalize:
        tot = segment_sum(new, sims.indptr)[r]
        deg = np.diff(sims.indptr)[r]
        new = np.where(tot > EPS_NUM, new / np.maximum(tot, EPS_NUM), 1.0 / deg)
    return new


def update_h(state: ModelState, sims: SimilarityMaps, renormalize: bool = True,
             weighted: bool = False, x_matrix=None) -> np.ndarray:
    """Cluster-vertex proportion rule.

    ``x_matrix`` overrides the neighbor-preference matrix built from
    ``state.x``; with ``weighted`` the Gaussian residuals carry lambda_i.
    """
    xm = pair_matrix(sims, state.x) if x_matrix is None else x_matrix
    h = state.h
    xh = xm @ h
    if weighted:
        gain_raw = xm.T @ (state.lam[:, None] * state.v)
        loss = xm.T @ (state.lam[:, None] * xh)
    else:
        gain_raw = xm.T @ state.v
        loss = xm.T @ xh
    gain_raw = np.asarray(gain_raw)
    loss = np.maximum(np.asarray(loss), EPS_NUM)
    a = (h / loss).sum(axis=0, keepdims=True)
    b = (h * gain_raw / loss).sum(axis=0, keepdims=True)
    new = (h * gain_raw * a + h) / np.maximum(loss * a + b, EPS_NUM)
    _finite(new, "H update")
    return _cols_to_simplex(new) if renormalize else new


def update_s(state: ModelState, sims: SimilarityMaps, cache: EnergyCache,
             renormalize: bool = True) -> np.ndarray:
    r, c, x, s = sims.rows, sims.cols, state.x, state.s
    if x.size == 0:
        return s.copy()
    weight = cache.boltz / max(cache.a_norm, EPS_NUM)
    topo = x * sims.z
    feat = x * sims.g
    topo_gain = segment_sum(topo * s[c, 0], sims.indptr)
    feat_gain = segment_sum(feat * s[c, 1], sims.indptr)
    topo_loss = np.maximum(segment_sum(topo * weight * s[c, 0], sims.indptr), EPS_NUM)
    feat_loss = np.maximum(segment_sum(feat * weight * s[c, 1], sims.indptr), EPS_NUM)
    s1, s2 = s[:, 0], s[:, 1]
    a = s1 / topo_loss + s2 / feat_loss
    b = s1 * topo_gain / topo_loss + s2 * feat_gain / feat_loss
    new = np.column_stack([
        (s1 * a * topo_gain + s1) / np.maximum(topo_loss * a + b, EPS_NUM),
        (s2 * a * feat_gain + s2) / np.maximum(feat_loss * a + b, EPS_NUM),
    ])
    _finite(new, "S update")
    return _rows_to_simplex(new) if renormalize else new


def update_lambda(state: ModelState, sims: SimilarityMaps) -> np.ndarray:
    resid = ((state.v - neighbor_mix(state, sims)) ** 2).sum(axis=1)
    k = state.k_clusters
    with np.errstate(divide="ignore"):
        lam = np.where(resid > 0, k / np.where(resid > 0, resid, 1.0), LAMBDA_MAX)
    return np.clip(lam, LAMBDA_MIN, LAMBDA_MAX)


def assign_labels(v) -> np.ndarray:
    """Hard labels; np.argmax already resolves ties to the lowest index."""
    return np.argmax(np.asarray(v), axis=1).astype(np.int64)


MAX_BACKTRACK = 12


def _guarded(state, name, proposal, objective, current):
    """Move block ``name`` toward ``proposal`` without lowering ``objective``.

    The step is halved until the objective does not decrease; after
    ``MAX_BACKTRACK`` halvings the block keeps its old value.  Convex
    combinations of simplex points stay on the simplex.
    """
    old = getattr(state, name)
    step = 1.0
    for _ in range(MAX_BACKTRACK + 1):
        cand = proposal if step == 1.0 else old + step * (proposal - old)
        setattr(state, name, cand)
        val = objective(state)
        if val >= current:
            return val, step
        step *= 0.5
    setattr(state, name, old)
    return current, 0.0


def em_step(state: ModelState, net: AttributedNetwork, sims: SimilarityMaps,
            renormalize: bool = True, weighted_h: bool = False,
            guard: bool = True) -> dict[str, float]:
    """One E-step plus the six M-step rules, in place on ``state``.

    With ``guard`` the V, X, H and S proposals are damped so the lower bound
    at the E-step responsibilities never decreases, which makes the
    likelihood trace monotone.  Returns the accepted step length per block.
    """
    resp = responsibilities(state, net, sims)
    steps = {}

    def objective(st):
        return lower_bound(st, resp, net, sims)

    q = objective(state) if guard else 0.0

    def apply(name, proposal):
        nonlocal q
        if guard:
            q, steps[name] = _guarded(state, name, proposal, objective, q)
        else:
            setattr(state, name, proposal)
            steps[name] = 1.0

    apply("v", update_v(state, resp, net, sims, renormalize))
    state.u = update_u(resp, net)
    if guard:
        q = objective(state)
    cache = energy_cache(state, sims)
    apply("x", update_x(state, sims, cache, renormalize))
    apply("h", update_h(state, sims, renormalize, weighted=weighted_h))
    apply("s", update_s(state, sims, cache, renormalize))
    state.lam = update_lambda(state, sims)
    return steps


def _write_trace(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loglik", "delta"])
        for t, ll, d in trace:
            w.writerow([t, repr(ll), repr(d)])


def fit(net: AttributedNetwork, sims: SimilarityMaps, cfg: EMConfig) -> FitResult:
    if net.n_edges == 0:
        raise ValueError("cannot fit a graph without edges")
    state = init_state(net, sims, cfg.k_clusters, cfg.seed)
    prev = log_likelihood(state, net, sims)
    initial = prev
    trace = []
    timings = []
    converged = False
    decreases = 0
    guarded = 0
    for t in range(1, cfg.max_iters + 1):
        start = time.perf_counter()
        try:
            backup = state.copy() if cfg.guard else None
            em_step(state, net, sims, cfg.renormalize, cfg.weighted_h, guard=False)
            cur = log_likelihood(state, net, sims)
            if cfg.guard and cur < prev:
                # redo the iteration with damped blocks
                state = backup
                em_step(state, net, sims, cfg.renormalize, cfg.weighted_h, guard=True)
                cur = log_likelihood(state, net, sims)
                guarded += 1
        except NumericalError as exc:
            exc.iteration = t
            exc.args = (f"{exc.args[0]} (iteration {t})",)
            raise
        timings.append(time.perf_counter() - start)
        delta = cur - prev
        trace.append((t, cur, delta))
        if delta < -1e-6 * (1 + abs(prev)):
            decreases += 1
            logger.warning("iteration %d: log-likelihood decreased by %.3g", t, -delta)
        threshold = cfg.tol * (1 + abs(prev)) if cfg.tol_mode == "relative" else cfg.tol
        prev = cur
        if delta <= threshold:
            converged = True
            break
    if cfg.trace_path:
        _write_trace(cfg.trace_path, trace)
    return FitResult(state, assign_labels(state.v), trace, converged, len(trace),
                     initial, decreases, guarded, timings)
