"""Journey similarity metrics and sparse similarity-graph construction.

Two journeys are compared through their common stations: a spatial term
(the number of stations where both were observed) and a temporal term
(the largest absolute time difference over those stations). The soft
variant weighs the spatial term by a Gaussian kernel of the temporal
term; the hard variant gates it by a threshold tau.

The temporal difference per station can be taken over first-seen times,
last-seen times, or the max of both. Last-seen times align best on
boarding platforms (everyone leaves when the train does, while
first-seen spreads over the whole wait), so pipeline configurations
default to ``component="depart"`` even though ``"both"`` is the
conservative library default.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .types import Journey

_COMPONENTS = ("both", "arrive", "depart")


@dataclass
class SimilarityParams:
    kind: str = "soft"                # {"soft", "hard"}
    two_sigma_sq: float = 30.0        # soft kernel width, seconds^2
    tau: float = 30.0                 # hard threshold, seconds
    min_weight: float | None = None   # graph sparsification floor; None -> per-kind default
    component: str = "both"           # which times enter the temporal term

    def __post_init__(self):
        if self.kind not in ("soft", "hard"):
            raise ValueError(f"kind must be 'soft' or 'hard', got {self.kind!r}")
        if self.two_sigma_sq <= 0:
            raise ValueError("two_sigma_sq must be > 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.component not in _COMPONENTS:
            raise ValueError(f"component must be one of {_COMPONENTS}")
        if self.min_weight is None:
            # hard weights are integers, keep them all; soft drops the
            # numerically negligible tail
            self.min_weight = 0.0 if self.kind == "hard" else math.exp(-9.0)
        if self.min_weight < 0:
            raise ValueError("min_weight must be >= 0")


def overlap(j1: Journey, j2: Journey, component: str = "both") -> tuple[int, float | None]:
    """Common-station count and max absolute time difference over them.

    Returns ``(0, None)`` when the journeys share no station.
    """
    common = j1.stops.keys() & j2.stops.keys()
    if not common:
        return 0, None
    max_diff = 0.0
    for s in common:
        a1, d1 = j1.stops[s]
        a2, d2 = j2.stops[s]
        if component == "arrive":
            diff = abs(a1 - a2)
        elif component == "depart":
            diff = abs(d1 - d2)
        else:
            diff = max(abs(a1 - a2), abs(d1 - d2))
        if diff > max_diff:
            max_diff = diff
    return len(common), max_diff


def soft_similarity(j1: Journey, j2: Journey, params: SimilarityParams) -> float:
    """Common-station count weighted by a Gaussian kernel of the max time diff."""
    count, max_diff = overlap(j1, j2, params.component)
    if count == 0:
        return 0.0
    return count * math.exp(-(max_diff ** 2) / params.two_sigma_sq)


def hard_similarity(j1: Journey, j2: Journey, params: SimilarityParams) -> float:
    """Common-station count when the max time diff is within tau (inclusive), else 0."""
    count, max_diff = overlap(j1, j2, params.component)
    if count == 0:
        return 0.0
    return float(count) if max_diff <= params.tau else 0.0


def similarity(j1: Journey, j2: Journey, params: SimilarityParams) -> float:
    if params.kind == "soft":
        return soft_similarity(j1, j2, params)
    return hard_similarity(j1, j2, params)


@dataclass
class SimilarityGraph:
    """Sparse symmetric weighted graph over journeys.

    Edges are stored once with ``i < j`` and weight strictly above the
    sparsification floor; no self loops.
    """

    n: int
    edges_i: np.ndarray
    edges_j: np.ndarray
    weights: np.ndarray
    journeys: list[Journey] = field(default_factory=list, repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    def to_csr(self) -> sparse.csr_matrix:
        data = np.concatenate([self.weights, self.weights])
        rows = np.concatenate([self.edges_i, self.edges_j])
        cols = np.concatenate([self.edges_j, self.edges_i])
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def neighbors(self) -> list[list[tuple[int, float]]]:
        """Adjacency lists as (neighbor, weight) pairs."""
        adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for i, j, w in zip(self.edges_i, self.edges_j, self.weights):
            adj[int(i)].append((int(j), float(w)))
            adj[int(j)].append((int(i), float(w)))
        return adj

    def edge_set(self) -> dict[tuple[int, int], float]:
        return {
            (int(i), int(j)): float(w)
            for i, j, w in zip(self.edges_i, self.edges_j, self.weights)
        }

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "weight"])
            for i, j, w in zip(self.edges_i, self.edges_j, self.weights):
                writer.writerow([int(i), int(j), repr(float(w))])


def build_graph(journeys: Sequence[Journey], params: SimilarityParams) -> SimilarityGraph:
    """Similarity graph with edges above ``params.min_weight``.

    Candidate pairs are restricted by blocking (shared station, and a
    time-gap bound when it provably cannot clear the floor); the result
    is identical to the all-pairs computation.
    """
    if not journeys:
        raise ValueError("journeys must be non-empty")

    by_station: dict[int, list[int]] = {}
    for idx, j in enumerate(journeys):
        for s in j.stops:
            by_station.setdefault(s, []).append(idx)

    spans = [(j.start_time, j.end_time) for j in journeys]
    sizes = [len(j.stops) for j in journeys]

    # largest time gap between two journeys' spans that can still clear
    # the weight floor; None disables the time block
    max_gap = _max_useful_gap(params, max(sizes))

    candidates: set[tuple[int, int]] = set()
    for members in by_station.values():
        for a in range(len(members)):
            ia = members[a]
            for b in range(a + 1, len(members)):
                ib = members[b]
                pair = (ia, ib) if ia < ib else (ib, ia)
                candidates.add(pair)

    edges_i: list[int] = []
    edges_j: list[int] = []
    weights: list[float] = []
    for i, j in sorted(candidates):
        if max_gap is not None:
            gap = max(spans[i][0] - spans[j][1], spans[j][0] - spans[i][1])
            if gap > max_gap:
                continue
        w = similarity(journeys[i], journeys[j], params)
        if w > params.min_weight:
            edges_i.append(i)
            edges_j.append(j)
            weights.append(w)

    return SimilarityGraph(
        n=len(journeys),
        edges_i=np.asarray(edges_i, dtype=np.int64),
        edges_j=np.asarray(edges_j, dtype=np.int64),
        weights=np.asarray(weights, dtype=np.float64),
        journeys=list(journeys),
    )


def _max_useful_gap(params: SimilarityParams, max_size: int) -> float | None:
    """Span gap beyond which similarity cannot exceed the weight floor.

    When two journeys' observation spans are disjoint by a gap g, every
    per-station difference is at least g, so the temporal term is bounded
    by the kernel at g regardless of component choice.
    """
    if params.kind == "hard":
        return params.tau
    if params.min_weight <= 0:
        return None
    bound = params.min_weight / max_size
    if bound >= 1.0:
        return 0.0
    return math.sqrt(-params.two_sigma_sq * math.log(bound))
