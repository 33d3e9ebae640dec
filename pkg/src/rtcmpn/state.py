"""Latent parameters, E-step responsibilities and the model log-likelihood.

Shapes (N vertices, M features, K clusters, P stored directed pairs):

    v    N x K   rows on the simplex        (vertex cluster preference)
    u    M x K   columns on the simplex     (cluster feature theme)
    h    N x K   columns on the simplex     (cluster vertex proportion)
    x    P       rows of the pair matrix on the simplex (neighbor preference)
    s    N x 2   rows on the simplex        (topology / feature inclination)
    lam  N       Gaussian precisions

``x`` follows the pair layout of :class:`~rtcmpn.similarity.SimilarityMaps`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .network import AttributedNetwork
from .similarity import SimilarityMaps

EPS_NUM = 1e-12
LAMBDA_MIN = 1e-6
LAMBDA_MAX = 1e9

CHECKPOINT_FORMAT = "rtcmpn-checkpoint"


class NumericalError(ArithmeticError):
    """A non-finite value showed up in a likelihood term or an update."""

    def __init__(self, what, index=None, iteration=None):
        self.what = what
        self.index = index
        self.iteration = iteration
        msg = f"non-finite value in {what}"
        if index is not None:
            msg += f" at {index}"
        if iteration is not None:
            msg += f" (iteration {iteration})"
        super().__init__(msg)


@dataclass
class ModelState:
    v: np.ndarray
    u: np.ndarray
    h: np.ndarray
    x: np.ndarray
    s: np.ndarray
    lam: np.ndarray

    @property
    def k_clusters(self) -> int:
        return self.v.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.v.shape[0]

    def copy(self) -> "ModelState":
        return ModelState(self.v.copy(), self.u.copy(), self.h.copy(), self.x.copy(),
                          self.s.copy(), self.lam.copy())

    def simplex_errors(self, indptr) -> dict[str, float]:
        """Max absolute deviation from unit sums, per parameter block."""
        xs = segment_sum(self.x, indptr)
        has_nbr = np.diff(indptr) > 0
        errs = {
            "v": np.abs(self.v.sum(axis=1) - 1).max(initial=0.0),
            "h": np.abs(self.h.sum(axis=0) - 1).max(initial=0.0),
            "x": np.abs(xs[has_nbr] - 1).max(initial=0.0),
            "s": np.abs(self.s.sum(axis=1) - 1).max(initial=0.0),
        }
        if self.u.shape[0]:
            errs["u"] = np.abs(self.u.sum(axis=0) - 1).max(initial=0.0)
        return errs


@dataclass
class Responsibilities:
    theta: np.ndarray  # P x K, one row per stored directed pair
    phi: np.ndarray    # nnz(F) x K, feature entries in vertex-major order


@dataclass
class EnergyCache:
    eta: np.ndarray      # S_i1 S_j1 Z_ij + S_i2 S_j2 G_ij per pair
    epsilon: np.ndarray  # -X_ij * eta_ij
    boltz: np.ndarray    # exp(-epsilon)
    a_norm: float = field(default=0.0)


def segment_sum(values, indptr) -> np.ndarray:
    """Sum consecutive runs of ``values`` delimited by a CSR ``indptr``."""
    values = np.asarray(values, dtype=np.float64)
    starts, ends = indptr[:-1], indptr[1:]
    out = np.zeros((len(starts),) + values.shape[1:])
    nonempty = starts < ends
    if values.shape[0] and nonempty.any():
        out[nonempty] = np.add.reduceat(values, starts[nonempty], axis=0)
    return out


def feature_entries(net: AttributedNetwork):
    """(feature, vertex) index arrays of present features, vertex-major."""
    fc = sp.csc_matrix(net.features)
    fc.sort_indices()
    vert = np.repeat(np.arange(fc.shape[1], dtype=np.int64), np.diff(fc.indptr))
    return fc.indices.astype(np.int64), vert, fc.indptr.astype(np.int64)


def pair_matrix(sims: SimilarityMaps, values) -> sp.csr_matrix:
    return sims.as_matrix(values)


def neighbor_mix(state: ModelState, sims: SimilarityMaps) -> np.ndarray:
    """(XH), the neighbor-averaged cluster-vertex proportions, N x K."""
    return pair_matrix(sims, state.x) @ state.h


def init_state(net: AttributedNetwork, sims: SimilarityMaps, k_clusters: int,
               seed: int) -> ModelState:
    n, m = net.n_vertices, net.n_features
    if k_clusters < 1:
        raise ValueError("k_clusters must be >= 1")
    if k_clusters > n:
        raise ValueError(f"k_clusters={k_clusters} exceeds N={n}")
    rng = np.random.default_rng(seed)
    v = rng.dirichlet(np.ones(k_clusters), size=n)
    u = rng.dirichlet(np.ones(m), size=k_clusters).T if m else np.zeros((0, k_clusters))
    h = rng.dirichlet(np.ones(n), size=k_clusters).T
    deg = np.diff(sims.indptr)
    x = 1.0 / deg[sims.rows] if sims.n_pairs else np.zeros(0)
    s = np.full((n, 2), 0.5)
    lam = np.ones(n)
    return ModelState(v, u, h, x.astype(np.float64), s, lam)


def _normalize_rows(p: np.ndarray) -> np.ndarray:
    tot = p.sum(axis=1, keepdims=True)
    k = p.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(tot > EPS_NUM, p / np.maximum(tot, EPS_NUM), 1.0 / k)
    return out


def responsibilities_theta(state: ModelState, sims: SimilarityMaps) -> np.ndarray:
    """theta_ij,k proportional to V_ik V_jk on every stored pair.

    A pair whose products sum below ``EPS_NUM`` gets the uniform row.
    """
    return _normalize_rows(state.v[sims.rows] * state.v[sims.cols])


def responsibilities_phi(state: ModelState, net: AttributedNetwork) -> np.ndarray:
    feat, vert, _ = feature_entries(net)
    return _normalize_rows(state.v[vert] * state.u[feat])


def responsibilities(state, net, sims) -> Responsibilities:
    return Responsibilities(responsibilities_theta(state, sims),
                            responsibilities_phi(state, net))


def energy_cache(state: ModelState, sims: SimilarityMaps) -> EnergyCache:
    s, r, c = state.s, sims.rows, sims.cols
    eta = s[r, 0] * s[c, 0] * sims.z + s[r, 1] * s[c, 1] * sims.g
    epsilon = -state.x * eta
    boltz = np.exp(-epsilon)
    return EnergyCache(eta, epsilon, boltz, float(np.sum(boltz)))


def _safe_log(x):
    return np.log(np.maximum(x, EPS_NUM))


def _check(terms: dict) -> None:
    for name, val in terms.items():
        if not np.isfinite(val):
            raise NumericalError(f"likelihood term {name!r}")


def _shared_terms(state, net, sims, cache):
    """Terms identical in the likelihood and its lower bound."""
    v, k = state.v, state.k_clusters
    col = v.sum(axis=0)
    return {
        "precision": 0.5 * k * float(np.sum(np.log(state.lam))),
        "edge_rate": -float(np.sum(col**2 - (v**2).sum(axis=0))),
        "log_norm": -float(_safe_log(cache.a_norm)),
        "energy": float(np.sum(state.x * cache.eta)),
    }


def likelihood_terms(state: ModelState, net: AttributedNetwork, sims: SimilarityMaps,
                     cache: EnergyCache | None = None) -> dict[str, float]:
    if cache is None:
        cache = energy_cache(state, sims)
    v, u = state.v, state.u
    feat, vert, _ = feature_entries(net)
    resid = v - neighbor_mix(state, sims)
    terms = _shared_terms(state, net, sims, cache)
    terms["residual"] = -0.5 * float(np.sum(state.lam * (resid**2).sum(axis=1)))
    terms["features"] = float(np.sum(_safe_log((v[vert] * u[feat]).sum(axis=1))))
    terms["edge_log"] = float(np.sum(_safe_log((v[sims.rows] * v[sims.cols]).sum(axis=1))))
    _check(terms)
    return terms


def log_likelihood(state, net, sims, cache=None) -> float:
    terms = likelihood_terms(state, net, sims, cache)
    return float(sum(terms[k] for k in sorted(terms)))


def _jensen(weights, products):
    """sum_k w_k log(p_k / w_k) per row, with 0 log 0 = 0."""
    w = np.asarray(weights)
    pos = w > 0
    out = np.zeros_like(w)
    out[pos] = w[pos] * (_safe_log(products[pos]) - np.log(w[pos]))
    return out.sum(axis=1)


def lower_bound(state: ModelState, resp: Responsibilities, net: AttributedNetwork,
                sims: SimilarityMaps, cache: EnergyCache | None = None) -> float:
    """Jensen lower bound Q(theta, phi) of the log-likelihood."""
    if cache is None:
        cache = energy_cache(state, sims)
    v, u = state.v, state.u
    feat, vert, _ = feature_entries(net)
    xh = neighbor_mix(state, sims)
    terms = _shared_terms(state, net, sims, cache)
    terms["residual"] = -0.5 * float(np.sum(state.lam * (v**2 - 2 * xh * v + xh**2).sum(axis=1)))
    terms["features"] = float(np.sum(_jensen(resp.phi, v[vert] * u[feat])))
    terms["edge_log"] = float(np.sum(_jensen(resp.theta, v[sims.rows] * v[sims.cols])))
    _check(terms)
    return float(sum(terms[k] for k in sorted(terms)))


def state_to_dict(state: ModelState, sims: SimilarityMaps) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "n_vertices": state.n_vertices,
        "n_features": int(state.u.shape[0]),
        "k_clusters": state.k_clusters,
        "v": state.v.tolist(),
        "u": state.u.tolist(),
        "h": state.h.tolist(),
        "x": [[int(i), int(j), float(val)] for i, j, val in zip(sims.rows, sims.cols, state.x)],
        "s": state.s.tolist(),
        "lambda": state.lam.tolist(),
    }


def state_from_dict(doc: dict, sims: SimilarityMaps | None = None) -> ModelState:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not an rtcmpn checkpoint")
    n, m, k = doc["n_vertices"], doc["n_features"], doc["k_clusters"]
    trip = doc["x"]
    x = np.array([t[2] for t in trip], dtype=np.float64)
    if sims is not None:
        pairs = [(t[0], t[1]) for t in trip]
        if pairs != sims.pairs:
            lookup = {p: val for p, val in zip(pairs, x)}
            try:
                x = np.array([lookup[p] for p in sims.pairs])
            except KeyError as exc:
                raise ValueError(f"checkpoint lacks pair {exc.args[0]}") from None
    state = ModelState(
        v=np.array(doc["v"], dtype=np.float64).reshape(n, k),
        u=np.array(doc["u"], dtype=np.float64).reshape(m, k),
        h=np.array(doc["h"], dtype=np.float64).reshape(n, k),
        x=x,
        s=np.array(doc["s"], dtype=np.float64).reshape(n, 2),
        lam=np.array(doc["lambda"], dtype=np.float64).reshape(n),
    )
    return state


def save_checkpoint(path, state: ModelState, sims: SimilarityMaps) -> None:
    # json writes floats with repr(), so values round-trip exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state_to_dict(state, sims), fh)


def load_checkpoint(path, sims: SimilarityMaps | None = None) -> ModelState:
    with open(path, encoding="utf-8") as fh:
        return state_from_dict(json.load(fh), sims)
