"""Train-trip identification from journey sets.

Two routes to the same product: a per-station density-clustering
baseline with cross-station label re-identification, and the robust
route -- spectral clustering of the journey similarity graph with
eigengap model selection, two-stage outlier pruning, and reconciliation
of fragmented clusters via median segment travel times. Both end in a
per-trip arrival/departure envelope per station.
"""

from __future__ import annotations

import csv
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .similarity import SimilarityGraph, SimilarityParams, build_graph
from .types import Journey, LineTopology, StationId, TrainId

log = logging.getLogger(__name__)

OUTLIER = -1


@dataclass
class ClusterLabeling:
    """Per-item integer labels; OUTLIER (-1) marks noise."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) and self.labels.max() >= 0 else 0

    @property
    def n_outliers(self) -> int:
        return int(np.sum(self.labels == OUTLIER))

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


# ---------------------------------------------------------------------------
# 1-D DBSCAN


def dbscan_1d(timestamps: Sequence[float], eps: float, min_pts: int) -> ClusterLabeling:
    """Density clustering of scalar timestamps, O(n log n) via sorting.

    Standard semantics with self-inclusive neighborhood counts: a point
    with at least ``min_pts`` points (itself included) within ``eps`` is
    a core point; core points chain when within ``eps`` of each other;
    a non-core point joins its nearest core's cluster when within
    ``eps`` (ties toward the earlier core), otherwise it is noise.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    ts = np.asarray(timestamps, dtype=np.float64)
    n = len(ts)
    if n == 0:
        return ClusterLabeling(labels=np.empty(0, dtype=np.int64))

    order = np.argsort(ts, kind="stable")
    t = ts[order]
    left = np.searchsorted(t, t - eps, side="left")
    right = np.searchsorted(t, t + eps, side="right")
    core = (right - left) >= min_pts

    labels_sorted = np.full(n, OUTLIER, dtype=np.int64)
    cluster = -1
    prev_core = -1
    for i in range(n):
        if not core[i]:
            continue
        if prev_core < 0 or t[i] - t[prev_core] > eps:
            cluster += 1
        labels_sorted[i] = cluster
        prev_core = i

    core_idx = np.flatnonzero(core)
    if len(core_idx):
        core_t = t[core_idx]
        for i in np.flatnonzero(~core):
            pos = np.searchsorted(core_t, t[i])
            best = OUTLIER
            best_d = np.inf
            if pos > 0 and t[i] - core_t[pos - 1] <= eps:
                best = labels_sorted[core_idx[pos - 1]]
                best_d = t[i] - core_t[pos - 1]
            if pos < len(core_idx):
                d_right = core_t[pos] - t[i]
                if d_right <= eps and d_right < best_d:
                    best = labels_sorted[core_idx[pos]]
            labels_sorted[i] = best

    labels = np.empty(n, dtype=np.int64)
    labels[order] = labels_sorted
    return ClusterLabeling(labels=labels)


# ---------------------------------------------------------------------------
# baseline: per-station clustering + cross-station re-identification


@dataclass
class StationClustering:
    """Per-station clustering input to re-identification."""

    station: StationId
    journey_ids: list[int]
    times: list[float]
    labeling: ClusterLabeling


def cluster_stations(
    journeys: Sequence[Journey],
    topology: LineTopology,
    eps: float = 45.0,
    min_pts: int = 2,
) -> dict[StationId, StationClustering]:
    """Per-station density clustering of journey last-seen times."""
    out: dict[StationId, StationClustering] = {}
    for station in topology.stations:
        ids = [i for i, j in enumerate(journeys) if station in j.stops]
        if not ids:
            continue
        times = [journeys[i].last_seen(station) for i in ids]
        out[station] = StationClustering(
            station=station, journey_ids=ids, times=times,
            labeling=dbscan_1d(times, eps, min_pts),
        )
    return out


def baseline_reidentify(
    per_station: Mapping[StationId, StationClustering],
    tolerance: float = 1800.0,
    station_order: Sequence[StationId] | None = None,
) -> dict[int, dict[StationId, list[int]]]:
    """Chain per-station clusters into line-level train labels.

    Stations are visited in line order (``station_order`` when the ids
    are not already sorted that way). Each cluster polls its members: a
    member observed at an earlier station within ``tolerance`` seconds
    proposes the final label it received there (nearest such station);
    the majority proposal wins, ties toward the smaller label, and a
    cluster with no proposals gets a fresh label. Returns members per
    (final label, station).
    """
    if station_order is None:
        stations = sorted(per_station)
    else:
        stations = [s for s in station_order if s in per_station]
    pos = {s: i for i, s in enumerate(stations)}
    final: dict[int, dict[StationId, list[int]]] = {}
    journey_labels: dict[int, dict[StationId, int]] = {}
    journey_times: dict[int, dict[StationId, float]] = {}
    next_label = 0

    for station in stations:
        sc = per_station[station]
        locals_: dict[int, list[int]] = {}
        for jid, t, lab in zip(sc.journey_ids, sc.times, sc.labeling.labels):
            journey_times.setdefault(jid, {})[station] = t
            if lab != OUTLIER:
                locals_.setdefault(int(lab), []).append(jid)

        # process local clusters in time order for deterministic labels
        ordered = sorted(locals_.items(),
                         key=lambda kv: min(journey_times[j][station] for j in kv[1]))
        for _, members in ordered:
            proposals = []
            for jid in members:
                t_here = journey_times[jid][station]
                prior = [
                    (pos[s], journey_labels[jid][s]) for s in journey_labels.get(jid, {})
                    if pos[s] < pos[station]
                    and abs(t_here - journey_times[jid][s]) <= tolerance
                ]
                if prior:
                    proposals.append(max(prior)[1])  # nearest previous station
            if proposals:
                counts = Counter(proposals)
                top = max(counts.values())
                label = min(lab for lab, c in counts.items() if c == top)
            else:
                label = next_label
                next_label += 1
            final.setdefault(label, {}).setdefault(station, []).extend(members)
            for jid in members:
                journey_labels.setdefault(jid, {})[station] = label
    return final


def baseline_pipeline(
    journeys: Sequence[Journey],
    topology: LineTopology,
    eps: float = 45.0,
    min_pts: int = 2,
    tolerance: float = 1800.0,
    q_lo: float = 0.1,
    q_hi: float = 0.9,
) -> "EstimatedTimetable":
    """Full baseline route: station clustering, re-identification, envelopes."""
    per_station = cluster_stations(journeys, topology, eps=eps, min_pts=min_pts)
    station_members = baseline_reidentify(per_station, tolerance=tolerance,
                                          station_order=topology.stations)
    trips = build_trips(station_members, journeys, q_lo=q_lo, q_hi=q_hi)
    return EstimatedTimetable(trips=trips)


# ---------------------------------------------------------------------------
# spectral clustering with eigengap model selection


def spectral_cluster(
    graph: SimilarityGraph,
    k: int | str = "auto",
    k_max: int = 50,
    seed: int = 0,
) -> ClusterLabeling:
    """Cluster the similarity graph through its normalized Laplacian.

    Embeds vertices in the bottom-k eigenvectors of the symmetric
    normalized Laplacian (rows re-normalized) and clusters them with
    seeded farthest-first k-means. ``k="auto"`` picks k at the largest
    gap in the ascending eigenvalue sequence, searching gaps after
    positions 1..k_max. Isolated vertices are outliers and do not enter
    the decomposition.
    """
    if graph.n == 0:
        raise ValueError("graph is empty")
    if k_max < 2:
        raise ValueError("k_max must be >= 2")

    W = graph.to_csr()
    degree = np.asarray(W.sum(axis=1)).ravel()
    active = np.flatnonzero(degree > 0)
    labels = np.full(graph.n, OUTLIER, dtype=np.int64)
    n_a = len(active)
    if n_a == 0:
        return ClusterLabeling(labels=labels)

    if isinstance(k, str):
        if k != "auto":
            raise ValueError(f"k must be an integer or 'auto', got {k!r}")
        want_auto = True
    else:
        want_auto = False
        if k < 1 or k > n_a:
            raise ValueError(f"k={k} out of range for {n_a} connected vertices")

    Wa = W[active][:, active].toarray()
    d = 1.0 / np.sqrt(degree[active])
    L = np.eye(n_a) - (d[:, None] * Wa) * d[None, :]
    evals, evecs = scipy.linalg.eigh(L)

    if want_auto:
        m_hi = min(k_max, n_a - 1)
        if m_hi < 1:
            k = 1
        else:
            gaps = evals[1:m_hi + 1] - evals[:m_hi]
            k = int(np.argmax(gaps)) + 1

    U = evecs[:, :k]
    norms = np.linalg.norm(U, axis=1)
    norms[norms == 0] = 1.0
    U = U / norms[:, None]
    labels[active] = _kmeans(U, int(k), seed=seed)
    return ClusterLabeling(labels=labels)


def _kmeans(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 100) -> np.ndarray:
    """Lloyd's algorithm with farthest-first seeding from a fixed RNG."""
    n = len(X)
    rng = np.random.default_rng(seed)
    centers = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        centers[c] = X[int(np.argmax(d2))]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))

    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dist = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dist, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            mask = assign == c
            if mask.any():
                centers[c] = X[mask].mean(axis=0)
            else:
                far = int(np.argmax(np.min(dist, axis=1)))
                centers[c] = X[far]
                assign[far] = c
    return assign


# ---------------------------------------------------------------------------
# outlier pruning


def prune_knn_outliers(
    graph: SimilarityGraph,
    labeling: ClusterLabeling,
    k_nn: int = 10,
    agreement: float = 0.5,
) -> ClusterLabeling:
    """Outlier journeys whose top-k neighbors disagree with their label.

    Among a journey's ``k_nn`` highest-similarity neighbors, the
    fraction sharing its label must reach ``agreement`` or the journey
    becomes an outlier. A single pass over the input labeling; pruned
    points never cascade.
    """
    if not 0 < agreement <= 1:
        raise ValueError("agreement must be in (0, 1]")
    adj = graph.neighbors()
    labels = labeling.labels.copy()
    for i in range(graph.n):
        if labeling.labels[i] == OUTLIER:
            continue
        nbrs = sorted(adj[i], key=lambda e: (-e[1], e[0]))[:k_nn]
        if not nbrs:
            labels[i] = OUTLIER
            continue
        same = sum(1 for j, _ in nbrs if labeling.labels[j] == labeling.labels[i])
        if same / len(nbrs) < agreement:
            labels[i] = OUTLIER
    return ClusterLabeling(labels=labels)


def prune_similarity_outliers(
    graph: SimilarityGraph,
    labeling: ClusterLabeling,
    quantile_floor: float = 0.1,
    scale: float = 0.5,
) -> ClusterLabeling:
    """Outlier cluster members far less similar to co-members than typical.

    Per cluster, each member's mean similarity to its co-members is
    compared against ``scale`` times the cluster's ``quantile_floor``
    quantile of those means; members strictly below are outliers.
    """
    if not 0 < quantile_floor < 1:
        raise ValueError("quantile_floor must be in (0, 1)")
    W = graph.to_csr()
    labels = labeling.labels.copy()
    for label in range(labeling.k):
        members = labeling.members(label)
        if len(members) <= 1:
            continue
        sub = W[members][:, members]
        means = np.asarray(sub.sum(axis=1)).ravel() / (len(members) - 1)
        threshold = scale * np.quantile(means, quantile_floor)
        labels[members[means < threshold]] = OUTLIER
    return ClusterLabeling(labels=labels)


# ---------------------------------------------------------------------------
# trips, envelopes, timetable extraction


@dataclass
class TrainTrip:
    """One inferred train: member journeys and a per-station envelope.

    The envelope's arrival estimate at a station comes from members who
    were already riding when they got there (their first sighting is the
    train's arrival); members who boarded at the station contribute only
    to the departure side, since their first sighting is their own
    platform arrival. ``support`` counts the riding members per station;
    stations with zero support carry no envelope entry.
    """

    train: TrainId
    members: list[int]
    envelope: dict[StationId, tuple[float, float]] = field(default_factory=dict)
    support: dict[StationId, int] = field(default_factory=dict)

    @property
    def n_members(self) -> int:
        return len(self.members)

    def arrive_est(self, station: StationId) -> float | None:
        pair = self.envelope.get(station)
        return pair[0] if pair else None


@dataclass
class EstimatedTimetable:
    trips: list[TrainTrip] = field(default_factory=list)

    def stations(self) -> set[StationId]:
        out: set[StationId] = set()
        for t in self.trips:
            out |= set(t.envelope)
        return out

    def arrivals_at(self, station: StationId) -> list[float]:
        return sorted(t.envelope[station][0] for t in self.trips if station in t.envelope)

    def departures_at(self, station: StationId) -> list[tuple[float, float]]:
        """(arrive_est, depart_est) pairs at a station, by arrival."""
        return sorted((t.envelope[station][0], t.envelope[station][1])
                      for t in self.trips if station in t.envelope)

    def headways(self, station: StationId) -> list[tuple[float, float]]:
        """(arrival time, headway seconds) for successive arrivals."""
        arr = self.arrivals_at(station)
        return [(b, b - a) for a, b in zip(arr, arr[1:])]

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["train", "station", "arrive_est", "depart_est", "support"])
            for t in self.trips:
                for station in sorted(t.envelope):
                    a, d = t.envelope[station]
                    writer.writerow([t.train, station, repr(a), repr(d),
                                     t.support.get(station, 0)])

    def write_headways_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["station", "time", "headway_s"])
            for station in sorted(self.stations()):
                for t, h in self.headways(station):
                    writer.writerow([station, repr(t), repr(h)])


def build_trips(
    station_members: Mapping[int, Mapping[StationId, Sequence[int]]],
    journeys: Sequence[Journey],
    q_lo: float = 0.1,
    q_hi: float = 0.9,
) -> list[TrainTrip]:
    """Quantile envelopes per (label, station) from member sightings."""
    trips = []
    for label in sorted(station_members):
        members_by_station = station_members[label]
        all_members = sorted({j for ms in members_by_station.values() for j in ms})
        if not all_members:
            continue
        envelope: dict[StationId, tuple[float, float]] = {}
        support: dict[StationId, int] = {}
        for station, ms in members_by_station.items():
            riders = [j for j in ms if journeys[j].origin_station() != station]
            if not riders:
                continue
            arrive = float(np.quantile([journeys[j].first_seen(station) for j in riders], q_lo))
            depart = float(np.quantile([journeys[j].last_seen(station) for j in ms], q_hi))
            envelope[station] = (arrive, max(arrive, depart))
            support[station] = len(riders)
        if not envelope:
            warnings.warn(f"cluster {label}: no station with riding support, dropped",
                          stacklevel=2)
            continue
        trips.append(TrainTrip(train="", members=all_members,
                               envelope=envelope, support=support))

    trips.sort(key=lambda t: min(a for a, _ in t.envelope.values()))
    for idx, t in enumerate(trips):
        t.train = f"e{idx:03d}"
    return trips


def extract_timetable(
    labeling: ClusterLabeling,
    journeys: Sequence[Journey],
    q_lo: float = 0.1,
    q_hi: float = 0.9,
) -> EstimatedTimetable:
    """Envelopes for a line-level labeling (each member at all its stations)."""
    station_members: dict[int, dict[StationId, list[int]]] = {}
    for i, lab in enumerate(labeling.labels):
        if lab == OUTLIER:
            continue
        for station in journeys[i].stops:
            station_members.setdefault(int(lab), {}).setdefault(station, []).append(i)
    trips = build_trips(station_members, journeys, q_lo=q_lo, q_hi=q_hi)
    return EstimatedTimetable(trips=trips)


# ---------------------------------------------------------------------------
# fragment reconciliation


def segment_travel_medians(
    journeys: Sequence[Journey],
    topology: LineTopology,
) -> dict[int, float]:
    """Median first-seen time difference per consecutive station pair."""
    diffs: dict[int, list[float]] = {}
    for j in journeys:
        for seg, (a, b) in enumerate(zip(topology.stations, topology.stations[1:])):
            if a in j.stops and b in j.stops:
                d = j.first_seen(b) - j.first_seen(a)
                if d > 0:
                    diffs.setdefault(seg, []).append(d)
    return {seg: float(np.median(v)) for seg, v in diffs.items()}


def reconcile_fragments(
    trips: Sequence[TrainTrip],
    travel_medians: Mapping[int, float],
    topology: LineTopology,
    max_gap: float = 120.0,
) -> list[TrainTrip]:
    """Merge trips that are fragments of one train.

    Two trips with disjoint station support merge when extrapolating the
    earlier trip's last arrival across the intervening segments by
    median travel times lands within ``max_gap`` of the later trip's
    first arrival. Merging is greedy by smallest extrapolation error.
    """
    trips = list(trips)
    order = {s: i for i, s in enumerate(topology.stations)}

    def member_stations(t: TrainTrip) -> set[StationId]:
        return set(t.envelope) | set(t.support)

    while True:
        best: tuple[float, int, int] | None = None
        for a in range(len(trips)):
            for b in range(len(trips)):
                if a == b:
                    continue
                sa, sb = member_stations(trips[a]), member_stations(trips[b])
                if not sa or not sb or (sa & sb):
                    continue
                if max(order[s] for s in sa) >= min(order[s] for s in sb):
                    continue
                err = _extrapolation_error(trips[a], trips[b], travel_medians, order)
                if err is not None and err <= max_gap:
                    if best is None or err < best[0]:
                        best = (err, a, b)
        if best is None:
            break
        _, a, b = best
        merged = TrainTrip(
            train=trips[a].train,
            members=sorted(set(trips[a].members) | set(trips[b].members)),
            envelope={**trips[a].envelope, **trips[b].envelope},
            support={**trips[a].support, **trips[b].support},
        )
        trips = [t for i, t in enumerate(trips) if i not in (a, b)] + [merged]

    trips.sort(key=lambda t: min(a for a, _ in t.envelope.values()) if t.envelope else np.inf)
    for idx, t in enumerate(trips):
        t.train = f"e{idx:03d}"
    return trips


def _extrapolation_error(
    early: TrainTrip,
    late: TrainTrip,
    travel_medians: Mapping[int, float],
    order: Mapping[StationId, int],
) -> float | None:
    if not early.envelope or not late.envelope:
        return None
    s_from = max(early.envelope, key=lambda s: order[s])
    s_to = min(late.envelope, key=lambda s: order[s])
    predicted = early.envelope[s_from][0]
    for seg in range(order[s_from], order[s_to]):
        if seg not in travel_medians:
            return None
        predicted += travel_medians[seg]
    return abs(predicted - late.envelope[s_to][0])


# ---------------------------------------------------------------------------
# windowed spectral pipeline


@dataclass
class PipelineParams:
    """Knobs of the windowed spectral route."""

    similarity: SimilarityParams = field(
        default_factory=lambda: SimilarityParams(
            kind="soft", two_sigma_sq=3600.0, min_weight=1e-3, component="depart"))
    window_s: float = 3600.0
    stride_s: float = 1800.0
    k_max: int | None = None          # None -> derive from nominal headway, else 50
    nominal_headway: float | None = None
    knn_k: int = 10
    knn_agreement: float = 0.5
    sim_quantile_floor: float = 0.1
    sim_scale: float = 0.5
    q_lo: float = 0.1
    q_hi: float = 0.9
    reconcile_max_gap: float | None = 120.0
    dedup_overlap: float = 0.5
    seed: int = 0

    def effective_k_max(self) -> int:
        if self.k_max is not None:
            return self.k_max
        if self.nominal_headway:
            return max(2, int(2 * np.ceil(self.window_s / self.nominal_headway)))
        return 50

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineParams":
        sim_kwargs = {k: obj[k] for k in
                      ("kind", "two_sigma_sq", "tau", "min_weight", "component") if k in obj}
        params = cls(similarity=SimilarityParams(**sim_kwargs)) if sim_kwargs else cls()
        for name in ("window_s", "stride_s", "k_max", "nominal_headway", "knn_k",
                     "knn_agreement", "sim_quantile_floor", "sim_scale", "q_lo", "q_hi",
                     "reconcile_max_gap", "dedup_overlap", "seed"):
            if name in obj:
                setattr(params, name, obj[name])
        return params


JourneyKey = tuple[str, int]


def journey_key(j: Journey) -> JourneyKey:
    """Stable journey identity, independent of list position."""
    return (j.device, j.journey_seq)


class WindowMerger:
    """Accumulates per-window cluster member sets into global clusters.

    Shared by the batch pipeline and the streaming replay so that both
    produce identical output for identical window sequences. Members
    are stable journey keys. A window cluster either merges into an
    accepted cluster it overlaps by at least ``dedup_overlap`` (overlap
    coefficient on member sets) or is accepted as new; each journey
    belongs to at most one accepted cluster.
    """

    def __init__(self, dedup_overlap: float = 0.5):
        self.dedup_overlap = dedup_overlap
        self.clusters: list[set[JourneyKey]] = []
        self._claimed: dict[JourneyKey, int] = {}

    def add(self, member_sets: Sequence[set[JourneyKey]]) -> None:
        for members in member_sets:
            if not members:
                continue
            best_idx, best_ov = -1, 0.0
            for idx, acc in enumerate(self.clusters):
                inter = len(members & acc)
                if inter == 0:
                    continue
                ov = inter / min(len(members), len(acc))
                if ov > best_ov:
                    best_idx, best_ov = idx, ov
            fresh = {j for j in members if j not in self._claimed}
            if best_ov >= self.dedup_overlap:
                for j in fresh:
                    self._claimed[j] = best_idx
                self.clusters[best_idx] |= fresh
            elif fresh:
                idx = len(self.clusters)
                self.clusters.append(fresh)
                for j in fresh:
                    self._claimed[j] = idx


def window_starts(t_min: float, t_max: float, window_s: float, stride_s: float) -> list[float]:
    """Stride-aligned window starts covering [t_min, t_max]."""
    first = np.floor(t_min / stride_s) * stride_s
    starts = []
    w = first
    while w <= t_max:
        starts.append(float(w))
        w += stride_s
    return starts


def cluster_window(
    window_journeys: Sequence[Journey],
    params: PipelineParams,
) -> list[set[JourneyKey]]:
    """Spectral clustering + pruning of one window's journeys.

    Journeys are ordered by their stable key before embedding so the
    result does not depend on how the caller assembled the window.
    """
    if len(window_journeys) < 2:
        return []
    ordered = sorted(window_journeys, key=journey_key)
    graph = build_graph(ordered, params.similarity)
    labeling = spectral_cluster(graph, k="auto", k_max=params.effective_k_max(),
                                seed=params.seed)
    labeling = prune_knn_outliers(graph, labeling, k_nn=params.knn_k,
                                  agreement=params.knn_agreement)
    labeling = prune_similarity_outliers(graph, labeling,
                                         quantile_floor=params.sim_quantile_floor,
                                         scale=params.sim_scale)
    out = []
    for label in range(labeling.k):
        members = {journey_key(ordered[i]) for i in labeling.members(label)}
        if members:
            out.append(members)
    # deterministic order: by earliest member start time
    start_of = {journey_key(j): j.start_time for j in ordered}
    out.sort(key=lambda ms: (min(start_of[k] for k in ms), min(ms)))
    return out


def trips_from_clusters(
    clusters: Sequence[set[JourneyKey]],
    journeys: Sequence[Journey],
    topology: LineTopology,
    params: PipelineParams,
) -> tuple[EstimatedTimetable, ClusterLabeling]:
    """Envelopes + reconciliation for accepted key-sets over ``journeys``."""
    index_of = {journey_key(j): i for i, j in enumerate(journeys)}
    labels = np.full(len(journeys), OUTLIER, dtype=np.int64)
    for idx, members in enumerate(clusters):
        for key in members:
            if key in index_of:
                labels[index_of[key]] = idx
    labeling = ClusterLabeling(labels=labels)

    trips = build_trips(_station_members(labeling, journeys), journeys,
                        q_lo=params.q_lo, q_hi=params.q_hi)
    if params.reconcile_max_gap is not None and len(trips) > 1:
        medians = segment_travel_medians(journeys, topology)
        trips = reconcile_fragments(trips, medians, topology,
                                    max_gap=params.reconcile_max_gap)
    final = np.full(len(journeys), OUTLIER, dtype=np.int64)
    for idx, t in enumerate(trips):
        for j in t.members:
            final[j] = idx
    return EstimatedTimetable(trips=trips), ClusterLabeling(labels=final)


def spectral_pipeline(
    journeys: Sequence[Journey],
    topology: LineTopology,
    params: PipelineParams | None = None,
) -> tuple[EstimatedTimetable, ClusterLabeling]:
    """Windowed spectral route from journeys to an estimated timetable.

    Journeys are processed in sliding time windows (assigned by first
    observation), clustered per window, deduplicated across windows,
    reconciled across fragments, and reduced to envelopes.
    """
    if params is None:
        params = PipelineParams()
    if not journeys:
        return EstimatedTimetable(), ClusterLabeling(labels=np.empty(0, dtype=np.int64))

    starts = [j.start_time for j in journeys]
    merger = WindowMerger(dedup_overlap=params.dedup_overlap)
    for w0 in window_starts(min(starts), max(starts), params.window_s, params.stride_s):
        window = [j for j, t in zip(journeys, starts) if w0 <= t < w0 + params.window_s]
        merger.add(cluster_window(window, params))
    return trips_from_clusters(merger.clusters, journeys, topology, params)


def _station_members(
    labeling: ClusterLabeling,
    journeys: Sequence[Journey],
) -> dict[int, dict[StationId, list[int]]]:
    out: dict[int, dict[StationId, list[int]]] = {}
    for i, lab in enumerate(labeling.labels):
        if lab == OUTLIER:
            continue
        for station in journeys[i].stops:
            out.setdefault(int(lab), {}).setdefault(station, []).append(i)
    return out
