"""Agreement between predicted clusters and ground-truth classes."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

NMI_VARIANTS = ("arithmetic", "sqrt")


@dataclass
class EvalReport:
    nmi: float
    acc: float
    confusion: list[list[int]]
    assignment: dict[int, int]     # predicted cluster id -> matched true class id
    normalization_variant: str
    pred_ids: list[int]
    true_ids: list[int]

    def to_json(self) -> str:
        doc = asdict(self)
        doc["assignment"] = {str(k): v for k, v in self.assignment.items()}
        return json.dumps(doc, indent=2)


def _check_pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"label length mismatch: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise ValueError("empty labelings")
    return pred, truth


def confusion_matrix(pred, truth):
    """Counts of (predicted, true) label pairs plus the sorted id tables."""
    pred, truth = _check_pair(pred, truth)
    p_ids, p_idx = np.unique(pred, return_inverse=True)
    t_ids, t_idx = np.unique(truth, return_inverse=True)
    conf = np.zeros((p_ids.size, t_ids.size), dtype=np.int64)
    np.add.at(conf, (p_idx, t_idx), 1)
    return conf, p_ids, t_ids


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth, variant: str = "arithmetic") -> float:
    """Normalized mutual information, in percent.

    ``arithmetic`` divides by the mean of the two entropies, ``sqrt`` by
    their geometric mean.  Two single-cluster labelings score 100.
    """
    if variant not in NMI_VARIANTS:
        raise ValueError(f"unknown NMI variant {variant!r}")
    conf, _, _ = confusion_matrix(pred, truth)
    n = conf.sum()
    hp = _entropy(conf.sum(axis=1))
    ht = _entropy(conf.sum(axis=0))
    if hp == 0.0 and ht == 0.0:
        return 100.0
    nz = conf > 0
    joint = conf[nz] / n
    outer = np.outer(conf.sum(axis=1), conf.sum(axis=0))[nz] / n**2
    mi = float(np.sum(joint * np.log(joint / outer)))
    denom = 0.5 * (hp + ht) if variant == "arithmetic" else np.sqrt(hp * ht)
    if denom == 0.0:
        return 0.0
    return float(np.clip(100.0 * mi / denom, 0.0, 100.0))


def hungarian(cost):
    """Minimum-cost one-to-one matching.

    Rectangular inputs are padded with zero-cost dummy rows or columns; the
    returned ``(rows, cols, total)`` omits dummy matches.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    r, c = cost.shape
    size = max(r, c)
    square = np.zeros((size, size))
    square[:r, :c] = cost
    rows, cols = linear_sum_assignment(square)
    keep = (rows < r) & (cols < c)
    rows, cols = rows[keep], cols[keep]
    return rows, cols, float(cost[rows, cols].sum())


def _best_matching(conf):
    rows, cols, _ = hungarian(-conf)
    return rows, cols, int(conf[rows, cols].sum())


def accuracy(pred, truth) -> float:
    """Percent of vertices covered by the best cluster-to-class matching."""
    conf, _, _ = confusion_matrix(pred, truth)
    _, _, matched = _best_matching(conf)
    return 100.0 * matched / conf.sum()


def evaluate(pred, truth, variant: str = "arithmetic") -> EvalReport:
    conf, p_ids, t_ids = confusion_matrix(pred, truth)
    rows, cols, matched = _best_matching(conf)
    return EvalReport(
        nmi=nmi(pred, truth, variant),
        acc=100.0 * matched / conf.sum(),
        confusion=conf.tolist(),
        assignment={int(p_ids[i]): int(t_ids[j]) for i, j in zip(rows, cols)},
        normalization_variant=variant,
        pred_ids=p_ids.tolist(),
        true_ids=t_ids.tolist(),
    )
