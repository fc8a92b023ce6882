"""Accuracy metrics: arrival matching, hit rate, RMSE, classification scores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class ArrivalMatch:
    """One-to-one matching between estimated and true arrival times.

    Pairs are restricted to the bipartite graph of (estimate, truth)
    within ``window`` seconds of each other and chosen to maximize the
    number of matches, then minimize the total absolute time difference.
    """

    pairs: list[tuple[float, float]] = field(default_factory=list)
    unmatched_est: list[float] = field(default_factory=list)
    unmatched_true: list[float] = field(default_factory=list)

    @property
    def total_abs_error(self) -> float:
        return float(sum(abs(e - t) for e, t in self.pairs))


def match_arrivals(
    est: Sequence[float],
    true: Sequence[float],
    window: float = 60.0,
) -> ArrivalMatch:
    est = sorted(float(e) for e in est)
    true = sorted(float(t) for t in true)
    if not est or not true:
        return ArrivalMatch(pairs=[], unmatched_est=list(est), unmatched_true=list(true))

    # a cost above any total of valid matches makes the solver maximize
    # the count of within-window pairs before minimizing their error
    big = window * (len(est) + len(true) + 1) + 1.0
    cost = np.full((len(est), len(true)), big)
    for i, e in enumerate(est):
        for j, t in enumerate(true):
            d = abs(e - t)
            if d <= window:
                cost[i, j] = d
    rows, cols = linear_sum_assignment(cost)
    pairs = []
    used_e, used_t = set(), set()
    for i, j in zip(rows, cols):
        if cost[i, j] < big:
            pairs.append((est[i], true[j]))
            used_e.add(i)
            used_t.add(j)
    return ArrivalMatch(
        pairs=pairs,
        unmatched_est=[e for i, e in enumerate(est) if i not in used_e],
        unmatched_true=[t for j, t in enumerate(true) if j not in used_t],
    )


def hit_rate(
    est: Sequence[float],
    true: Sequence[float],
    window: float = 60.0,
) -> float | None:
    """Fraction of true arrivals matched within ``window`` seconds."""
    if not true:
        return None
    match = match_arrivals(est, true, window)
    return len(match.pairs) / len(true)


def rmse_minutes(pairs: Sequence[tuple[float, float]]) -> float | None:
    """Root mean squared arrival error of matched pairs, in minutes."""
    if not pairs:
        return None
    diffs = np.array([e - t for e, t in pairs], dtype=np.float64)
    return float(np.sqrt(np.mean(diffs ** 2)) / 60.0)


@dataclass
class ClassificationReport:
    precision: float | None
    recall: float | None
    accuracy: float | None
    f1: float | None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "accuracy": self.accuracy, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def classification_report(
    predictions: Sequence[int] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
) -> ClassificationReport:
    """Confusion-matrix ratios; undefined ratios come back as None."""
    pred = np.asarray(predictions).astype(int)
    y = np.asarray(labels).astype(int)
    if pred.shape != y.shape:
        raise ValueError("predictions and labels must align")
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    accuracy = (tp + tn) / len(y) if len(y) > 0 else None
    f1 = (2 * precision * recall / (precision + recall)
          if precision is not None and recall is not None and precision + recall > 0
          else None)
    return ClassificationReport(precision=precision, recall=recall, accuracy=accuracy,
                                f1=f1, tp=tp, fp=fp, fn=fn, tn=tn)


def adjusted_rand_index(a: Sequence[int], b: Sequence[int]) -> float:
    """ARI between two labelings over the same items."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("labelings must align")
    n = len(a)
    if n == 0:
        return 1.0
    contingency: dict[tuple[int, int], int] = {}
    for x, y in zip(a.tolist(), b.tolist()):
        contingency[(x, y)] = contingency.get((x, y), 0) + 1
    sum_comb = sum(math.comb(c, 2) for c in contingency.values())
    rows: dict[int, int] = {}
    cols: dict[int, int] = {}
    for (x, y), c in contingency.items():
        rows[x] = rows.get(x, 0) + c
        cols[y] = cols.get(y, 0) + c
    comb_a = sum(math.comb(c, 2) for c in rows.values())
    comb_b = sum(math.comb(c, 2) for c in cols.values())
    total = math.comb(n, 2)
    expected = comb_a * comb_b / total if total else 0.0
    max_index = 0.5 * (comb_a + comb_b)
    if max_index == expected:
        return 1.0
    return (sum_comb - expected) / (max_index - expected)
