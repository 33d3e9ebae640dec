"""Observed attributed networks: binary adjacency, binary features, labels.

All text inputs are whitespace separated, 0-based, UTF-8, with ``#`` comment
lines.  A comment of the form ``# n_vertices: 230`` (or ``n_features``) is a
header and overrides the size inferred from the largest index.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

MAX_INDEX = 2**31 - 2

_HEADER = re.compile(r"^#\s*(n_vertices|n_features)\s*[:=]\s*(\d+)\s*$")


class NetworkFormatError(ValueError):
    """Raised for malformed or inconsistent network input files."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class AttributedNetwork:
    """Undirected binary graph with binary vertex features.

    ``adjacency`` is N x N CSR (symmetric, zero diagonal) and ``features``
    is M x N CSR with entry (j, i) set when vertex i carries feature j.
    """

    adjacency: sp.csr_matrix
    features: sp.csr_matrix
    labels: dict[int, int] | None = None
    vertex_names: list[str] | None = None
    feature_names: list[str] | None = None

    @property
    def n_vertices(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    @property
    def n_clusters(self) -> int | None:
        if self.labels is None:
            return None
        return len(set(self.labels.values()))

    def label_vector(self, missing: int = -1) -> np.ndarray:
        out = np.full(self.n_vertices, missing, dtype=np.int64)
        if self.labels:
            idx = np.fromiter(self.labels.keys(), dtype=np.int64)
            out[idx] = np.fromiter(self.labels.values(), dtype=np.int64)
        return out


def symmetrize(adjacency) -> sp.csr_matrix:
    """Binary, symmetric, loop-free CSR version of ``adjacency``."""
    a = sp.coo_matrix(adjacency)
    keep = (a.row != a.col) & (a.data != 0)
    r, c = a.row[keep], a.col[keep]
    out = sp.csr_matrix((np.ones(2 * r.size), (np.r_[r, c], np.r_[c, r])), shape=a.shape)
    out.sum_duplicates()
    out.data[:] = 1.0
    out.sort_indices()
    return out


def from_edges(src, dst, n_vertices: int | None = None) -> AttributedNetwork:
    """Build a feature-less network from paired endpoint arrays."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if src.shape != dst.shape:
        raise ValueError("endpoint arrays differ in length")
    if src.size and min(src.min(), dst.min()) < 0:
        raise ValueError("negative vertex id")
    inferred = int(max(src.max(), dst.max())) + 1 if src.size else 0
    n = inferred if n_vertices is None else int(n_vertices)
    if n < inferred:
        raise ValueError(f"vertex id {inferred - 1} out of range for N={n}")
    a = sp.coo_matrix((np.ones(src.size), (src, dst)), shape=(n, n))
    adjacency = symmetrize(a)
    return AttributedNetwork(adjacency, sp.csr_matrix((0, n)))


def with_features(net: AttributedNetwork, feature_ids, vertex_ids,
                  n_features: int | None = None) -> AttributedNetwork:
    feature_ids = np.asarray(feature_ids, dtype=np.int64)
    vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
    inferred = int(feature_ids.max()) + 1 if feature_ids.size else 0
    m = inferred if n_features is None else int(n_features)
    if m < inferred:
        raise ValueError(f"feature id {inferred - 1} out of range for M={m}")
    if vertex_ids.size and vertex_ids.max() >= net.n_vertices:
        raise ValueError(f"vertex id {vertex_ids.max()} >= N={net.n_vertices}")
    f = sp.coo_matrix((np.ones(feature_ids.size), (feature_ids, vertex_ids)),
                      shape=(m, net.n_vertices)).tocsr()
    f.sum_duplicates()
    f.data[:] = 1.0
    f.sort_indices()
    return replace(net, features=f)


def _read_pairs(path, n_cols=(2,)):
    """Yield (line_no, fields) and collect header directives."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    headers = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = _HEADER.match(line)
                if m:
                    headers[m.group(1)] = int(m.group(2))
                continue
            parts = line.split()
            if len(parts) not in n_cols:
                raise NetworkFormatError(
                    f"expected {' or '.join(map(str, n_cols))} fields, got {len(parts)}",
                    path, line_no)
            try:
                vals = [int(p) for p in parts]
            except ValueError:
                raise NetworkFormatError(f"non-integer field in {line!r}", path, line_no) from None
            if min(vals) < 0:
                raise NetworkFormatError("negative id", path, line_no)
            if max(vals) > MAX_INDEX:
                raise NetworkFormatError(f"id overflow (> {MAX_INDEX})", path, line_no)
            rows.append((line_no, vals))
    return rows, headers


def load_edge_list(path, n_vertices: int | None = None) -> AttributedNetwork:
    """Read an undirected edge list.

    Edges are symmetrized, duplicates merged and self-loops dropped.  An
    explicit ``n_vertices`` argument beats a file header, which beats the
    inferred ``max id + 1``.
    """
    rows, headers = _read_pairs(path)
    if not rows:
        raise NetworkFormatError("empty edge list", path)
    arr = np.array([vals for _, vals in rows], dtype=np.int64)
    n = n_vertices if n_vertices is not None else headers.get("n_vertices")
    inferred = int(arr.max()) + 1
    if n is not None and n < inferred:
        bad = next(ln for ln, vals in rows if max(vals) >= n)
        raise NetworkFormatError(f"vertex id >= declared N={n}", path, bad)
    return from_edges(arr[:, 0], arr[:, 1], n)


def load_feature_table(path, net: AttributedNetwork,
                       n_features: int | None = None) -> AttributedNetwork:
    """Attach binary features from ``vertex feature`` lines.

    Three-column lines ``vertex feature value`` (sparse triplets) are also
    accepted; a zero value means absent, any other value besides 1 is an
    error since features are binary.
    """
    rows, headers = _read_pairs(path, n_cols=(2, 3))
    if headers.get("n_vertices") not in (None, net.n_vertices):
        raise NetworkFormatError(
            f"header n_vertices={headers['n_vertices']} disagrees with N={net.n_vertices}", path)
    m = n_features if n_features is not None else headers.get("n_features")
    vertices, feats = [], []
    for line_no, vals in rows:
        if len(vals) == 3 and vals[2] not in (0, 1):
            raise NetworkFormatError(f"non-binary feature value {vals[2]}", path, line_no)
        if vals[0] >= net.n_vertices:
            raise NetworkFormatError(f"vertex id {vals[0]} >= N={net.n_vertices}", path, line_no)
        if m is not None and vals[1] >= m:
            raise NetworkFormatError(f"feature id {vals[1]} >= declared M={m}", path, line_no)
        if len(vals) == 3 and vals[2] == 0:
            continue
        vertices.append(vals[0])
        feats.append(vals[1])
    if not feats and m is None:
        logger.warning("%s: no feature entries; using M=0", path)
    return with_features(net, feats, vertices, m)


def load_labels(path, net: AttributedNetwork) -> AttributedNetwork:
    rows, _ = _read_pairs(path)
    labels: dict[int, int] = {}
    for line_no, (vertex, cluster) in rows:
        if vertex >= net.n_vertices:
            raise NetworkFormatError(f"unknown vertex id {vertex}", path, line_no)
        prev = labels.setdefault(vertex, cluster)
        if prev != cluster:
            raise NetworkFormatError(
                f"vertex {vertex} labeled both {prev} and {cluster}", path, line_no)
    out = replace(net, labels=labels)
    logger.info("%s: %d labeled vertices, %d clusters", path, len(labels), out.n_clusters)
    return out


@dataclass
class ValidationReport:
    isolated: list[int] = field(default_factory=list)
    featureless: list[int] = field(default_factory=list)
    symmetric: bool = True
    zero_diagonal: bool = True
    binary: bool = True
    labels_in_range: bool = True

    @property
    def ok(self) -> bool:
        return self.symmetric and self.zero_diagonal and self.binary and self.labels_in_range


def validate_network(net: AttributedNetwork) -> ValidationReport:
    """Report structural problems without touching ``net``."""
    a = sp.csr_matrix(net.adjacency)
    f = sp.csr_matrix(net.features)
    asym = abs(a - a.T)
    report = ValidationReport(
        isolated=np.flatnonzero(np.diff(a.indptr) == 0).tolist(),
        featureless=np.flatnonzero(np.asarray(f.getnnz(axis=0)) == 0).tolist(),
        symmetric=asym.nnz == 0 or float(asym.max()) == 0.0,
        zero_diagonal=not np.any(a.diagonal()),
        binary=bool(np.all(np.isin(a.data, (0.0, 1.0))) and np.all(np.isin(f.data, (0.0, 1.0)))),
    )
    if net.labels:
        report.labels_in_range = all(0 <= v < net.n_vertices for v in net.labels)
    return report


def write_edge_list(path, net: AttributedNetwork) -> None:
    upper = sp.triu(net.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n_vertices: {net.n_vertices}\n")
        for i, j in zip(upper.row[order], upper.col[order]):
            fh.write(f"{i}\t{j}\n")


def write_feature_table(path, net: AttributedNetwork) -> None:
    ft = net.features.T.tocsr()
    ft.sort_indices()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n_vertices: {net.n_vertices}\n# n_features: {net.n_features}\n")
        for i in range(ft.shape[0]):
            for j in ft.indices[ft.indptr[i]:ft.indptr[i + 1]]:
                fh.write(f"{i}\t{j}\n")


def write_labels(path, labels) -> None:
    """Write ``vertex label`` lines from a dict or a dense label vector."""
    items = sorted(labels.items()) if isinstance(labels, dict) else enumerate(labels)
    with open(path, "w", encoding="utf-8") as fh:
        for v, c in items:
            if c >= 0:
                fh.write(f"{v}\t{c}\n")
