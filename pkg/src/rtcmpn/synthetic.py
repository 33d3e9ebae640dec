"""Planted-cluster attributed networks.

Only the edge and feature parts of the generative story are sampled; the
similarity maps are recomputed from the sample by :mod:`rtcmpn.similarity`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .network import AttributedNetwork, symmetrize, write_edge_list, write_feature_table, write_labels


class EmptyGraphError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    n_vertices: int = 200
    k_clusters: int = 4
    m_features: int = 200
    membership_concentration: float = 10.0  # Dirichlet weight of the home cluster; inf = one-hot
    edge_scale: float = 0.2
    theme_purity: float = 0.8
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("n_vertices", "k_clusters", "m_features"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.k_clusters > self.n_vertices:
            raise ValueError("k_clusters exceeds n_vertices")
        for name in ("theme_purity", "noise"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.edge_scale > 0:
            raise ValueError("edge_scale must be positive")
        if not self.membership_concentration > 0:
            raise ValueError("membership_concentration must be positive")


@dataclass
class PlantedModel:
    v: np.ndarray
    u: np.ndarray
    home: np.ndarray     # cluster each vertex was seeded from
    labels: np.ndarray   # argmax of the planted V rows
    rates: np.ndarray    # Poisson edge rates, N x N

    def to_json(self) -> dict:
        return {"v": self.v.tolist(), "u": self.u.tolist(),
                "home": self.home.tolist(), "labels": self.labels.tolist()}


def feature_blocks(m: int, k: int) -> np.ndarray:
    """Home cluster of each feature: K contiguous, near-equal blocks."""
    return (np.arange(m) * k) // m


def planted_themes(spec: SyntheticSpec) -> np.ndarray:
    m, k = spec.m_features, spec.k_clusters
    block = feature_blocks(m, k)
    u = np.zeros((m, k))
    for c in range(k):
        own = block == c
        n_own, n_other = own.sum(), m - own.sum()
        if n_other == 0:
            u[:, c] = 1.0 / m
            continue
        purity = spec.theme_purity if n_own else 0.0
        if n_own:
            u[own, c] = purity / n_own
        u[~own, c] = (1.0 - purity) / n_other
    return (1.0 - spec.noise) * u + spec.noise / m


def generate_network(spec: SyntheticSpec) -> tuple[AttributedNetwork, PlantedModel]:
    rng = np.random.default_rng(spec.seed)
    n, k, m = spec.n_vertices, spec.k_clusters, spec.m_features
    home = rng.permutation(np.arange(n) % k)
    if math.isinf(spec.membership_concentration):
        v = np.eye(k)[home]
    else:
        alpha = np.ones((n, k))
        alpha[np.arange(n), home] = spec.membership_concentration
        v = np.vstack([rng.dirichlet(a) for a in alpha])
    labels = np.argmax(v, axis=1)

    rates = spec.edge_scale * (v @ v.T)
    iu = np.triu_indices(n, k=1)
    counts = rng.poisson(rates[iu])
    hit = counts > 0
    if not hit.any():
        raise EmptyGraphError("sampled graph has no edges; increase edge_scale")
    adjacency = symmetrize(sp.coo_matrix((np.ones(hit.sum()), (iu[0][hit], iu[1][hit])),
                                         shape=(n, n)))

    u = planted_themes(spec)
    prob = np.minimum(1.0, (u @ v.T) * (m / k))
    present = rng.random((m, n)) < prob
    features = sp.csr_matrix(present.astype(np.float64))
    features.sort_indices()

    net = AttributedNetwork(adjacency, features,
                            labels={i: int(c) for i, c in enumerate(labels)})
    return net, PlantedModel(v, u, home, labels, rates)


def write_synthetic(out_dir, spec: SyntheticSpec, net: AttributedNetwork,
                    planted: PlantedModel) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"edges": out / "edges.tsv", "features": out / "features.tsv",
             "labels": out / "labels.tsv", "planted": out / "planted.json"}
    write_edge_list(paths["edges"], net)
    write_feature_table(paths["features"], net)
    write_labels(paths["labels"], net.labels)
    with open(paths["planted"], "w", encoding="utf-8") as fh:
        json.dump({"spec": asdict(spec), "planted": planted.to_json()}, fh)
    return paths
