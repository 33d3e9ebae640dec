"""Cosine similarities between connected vertices.

Only directed connected pairs (i, j) with Y_ij = 1 are stored.  Pairs are
kept in CSR order of the adjacency matrix, so every per-pair array in the
package (similarities, neighbor preferences, energies) shares one layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .network import AttributedNetwork


@dataclass(frozen=True)
class SimilarityMaps:
    indptr: np.ndarray   # CSR row pointer over source vertices
    rows: np.ndarray     # source vertex of every stored pair
    cols: np.ndarray     # target vertex of every stored pair
    z: np.ndarray        # topology cosine per pair
    g: np.ndarray        # feature cosine per pair

    @property
    def n_vertices(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_pairs(self) -> int:
        return len(self.rows)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    def as_matrix(self, values) -> sp.csr_matrix:
        """Per-pair ``values`` as an N x N CSR matrix on the adjacency pattern."""
        n = self.n_vertices
        return sp.csr_matrix((np.asarray(values, dtype=np.float64), self.cols, self.indptr),
                             shape=(n, n))


def _pair_layout(net: AttributedNetwork):
    a = net.adjacency
    indptr = a.indptr.astype(np.int64)
    rows = np.repeat(np.arange(a.shape[0], dtype=np.int64), np.diff(indptr))
    cols = a.indices.astype(np.int64)
    return indptr, rows, cols


def _rowwise_cosine(mat: sp.csr_matrix, rows, cols) -> np.ndarray:
    """cos(mat[r], mat[c]) for each pair; zero when either row is empty."""
    mat = sp.csr_matrix(mat, dtype=np.float64)
    if rows.size == 0:
        return np.zeros(0)
    dots = np.asarray(mat[rows].multiply(mat[cols]).sum(axis=1)).ravel()
    sq = np.asarray(mat.multiply(mat).sum(axis=1)).ravel()
    denom = np.sqrt(sq[rows] * sq[cols])
    out = np.zeros(rows.size)
    ok = denom > 0
    out[ok] = dots[ok] / denom[ok]
    # guard rounding on identical binary vectors
    return np.clip(out, 0.0, 1.0)


def topology_similarity(net: AttributedNetwork) -> np.ndarray:
    """Cosine between adjacency rows of every connected pair."""
    _, rows, cols = _pair_layout(net)
    return _rowwise_cosine(net.adjacency, rows, cols)


def feature_similarity(net: AttributedNetwork) -> np.ndarray:
    """Cosine between feature columns of every connected pair."""
    _, rows, cols = _pair_layout(net)
    return _rowwise_cosine(net.features.T.tocsr(), rows, cols)


def compute_similarities(net: AttributedNetwork) -> SimilarityMaps:
    indptr, rows, cols = _pair_layout(net)
    return SimilarityMaps(indptr, rows, cols,
                          _rowwise_cosine(net.adjacency, rows, cols),
                          _rowwise_cosine(net.features.T.tocsr(), rows, cols))


def dump_triplets(path, sims: SimilarityMaps, which: str = "z") -> None:
    """Write ``i j value`` lines for the ``z`` or ``g`` map."""
    values = {"z": sims.z, "g": sims.g}[which]
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, v in zip(sims.rows, sims.cols, values):
            fh.write(f"{i} {j} {float(v)!r}\n")
