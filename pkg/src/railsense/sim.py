"""Discrete-event transit simulator with a noisy passive-sensing channel.

Produces ground-truth timetables, commuter movements with capacity
constraints (left-behind events), per-window demand-supply-gap labels,
and observation traces reproducing the sensing pathologies of real
passive wifi collection: per-visit sampling that varies by station and
time, timestamp jitter, tail dropout (the mechanism behind non-physical
traces that appear to switch trains), and mid-journey identifier splits.

Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .types import LineTopology, ObservationRecord, StationId, TrainId

DSG_WINDOW_S = 1800.0
GATE_BIN_S = 600.0


# ---------------------------------------------------------------------------
# ground-truth timetable


@dataclass(frozen=True, slots=True)
class TimetableEntry:
    train: TrainId
    station: StationId
    arrive: float
    depart: float


@dataclass
class GroundTruthTimetable:
    """Per-(train, station) arrival/departure events.

    Entries follow station order per train and dispatch order per
    station under nominal operation; an injected incident may queue
    trains so that dwell intervals overlap at the held station.
    """

    entries: list[TimetableEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def trains(self) -> list[TrainId]:
        seen: dict[TrainId, None] = {}
        for e in self.entries:
            seen.setdefault(e.train, None)
        return list(seen)

    def stations(self) -> set[StationId]:
        return {e.station for e in self.entries}

    def by_train(self) -> dict[TrainId, list[TimetableEntry]]:
        out: dict[TrainId, list[TimetableEntry]] = {}
        for e in self.entries:
            out.setdefault(e.train, []).append(e)
        for entries in out.values():
            entries.sort(key=lambda e: e.arrive)
        return out

    def at_station(self, station: StationId) -> list[TimetableEntry]:
        return sorted((e for e in self.entries if e.station == station),
                      key=lambda e: e.depart)

    def arrivals_at(self, station: StationId) -> list[float]:
        return sorted(e.arrive for e in self.entries if e.station == station)

    @property
    def start(self) -> float:
        return min(e.arrive for e in self.entries)

    @property
    def end(self) -> float:
        return max(e.depart for e in self.entries)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["train", "station", "arrive", "depart"])
            for e in self.entries:
                writer.writerow([e.train, e.station, repr(e.arrive), repr(e.depart)])

    @classmethod
    def read_csv(cls, path: str | Path) -> "GroundTruthTimetable":
        entries = []
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                entries.append(TimetableEntry(
                    train=row["train"], station=int(row["station"]),
                    arrive=float(row["arrive"]), depart=float(row["depart"]),
                ))
        return cls(entries=entries)


def generate_timetable(
    topology: LineTopology,
    headway: float,
    dwell: float,
    run_time: float | Sequence[float],
    span: tuple[float, float],
) -> GroundTruthTimetable:
    """Dispatch trains every ``headway`` seconds across ``span``.

    ``run_time`` is the inter-station travel time, a scalar or one value
    per segment. Each train dwells ``dwell`` seconds at every station.
    Trains dispatched near the end of the span complete their full run;
    a span too short for even one full run yields an empty timetable
    with a warning.
    """
    if headway <= 0:
        raise ValueError("headway must be > 0")
    if dwell < 0:
        raise ValueError("dwell must be >= 0")
    n_seg = len(topology) - 1
    runs = [float(run_time)] * n_seg if np.isscalar(run_time) else [float(r) for r in run_time]
    if len(runs) != n_seg:
        raise ValueError(f"need {n_seg} run times, got {len(runs)}")

    t0, t1 = span
    traverse = dwell * n_seg + sum(runs)
    if t1 - t0 < traverse or t1 <= t0:
        if t1 > t0:
            warnings.warn(
                f"span of {t1 - t0:.0f}s is shorter than one full run ({traverse:.0f}s); "
                "empty timetable", stacklevel=2)
        return GroundTruthTimetable()

    entries = []
    k = 0
    dispatch = t0
    while dispatch < t1:
        train = f"t{k:03d}"
        arrive = dispatch
        for idx, station in enumerate(topology.stations):
            depart = arrive + dwell
            entries.append(TimetableEntry(train, station, arrive, depart))
            if idx < n_seg:
                arrive = depart + runs[idx]
        k += 1
        dispatch = t0 + k * headway
    return GroundTruthTimetable(entries=entries)


# ---------------------------------------------------------------------------
# commuters and boarding


@dataclass
class Commuter:
    id: int
    origin: StationId
    destination: StationId
    platform_arrival: float
    boarded_train: TrainId | None = None
    board_time: float | None = None
    alight_time: float | None = None
    trains_missed: int = 0
    first_witnessed_departure: float | None = None

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError("origin must differ from destination")


@dataclass(frozen=True, slots=True)
class BoardingEvent:
    """Outcome of one train departure at one station."""

    train: TrainId
    station: StationId
    arrive: float
    depart: float
    n_waiting: int
    n_boarded: int
    n_left_behind: int
    left_behind_ids: tuple[int, ...] = ()


@dataclass
class Surge:
    """Extra demand at one station over a time block (arrivals/second)."""

    station: StationId
    start: float
    end: float
    rate: float


@dataclass
class DemandProfile:
    """Piecewise-constant platform arrival rates per station.

    ``dest_power`` shapes the destination draw among downstream
    stations: 1 is uniform, larger values weight longer rides (a radial
    trunk-line pattern where most riders head far downstream).
    """

    base: float | dict[StationId, float] = 0.0
    surges: list[Surge] = field(default_factory=list)
    dest_power: float = 1.0

    def base_rate(self, station: StationId) -> float:
        if isinstance(self.base, dict):
            return float(self.base.get(station, 0.0))
        return float(self.base)

    def segments(self, station: StationId, t0: float, t1: float) -> list[tuple[float, float, float]]:
        """(start, end, rate) pieces covering [t0, t1) at ``station``."""
        cuts = {t0, t1}
        for s in self.surges:
            if s.station == station:
                cuts.add(min(max(s.start, t0), t1))
                cuts.add(min(max(s.end, t0), t1))
        points = sorted(cuts)
        out = []
        for a, b in zip(points, points[1:]):
            if b <= a:
                continue
            rate = self.base_rate(station)
            mid = 0.5 * (a + b)
            for s in self.surges:
                if s.station == station and s.start <= mid < s.end:
                    rate += s.rate
            out.append((a, b, rate))
        return out


@dataclass
class CommuterSim:
    commuters: list[Commuter]
    events: list[BoardingEvent]


def simulate_commuters(
    timetable: GroundTruthTimetable,
    topology: LineTopology,
    demand: float | dict[StationId, float] | DemandProfile,
    train_capacity: int,
    seed: int = 0,
    demand_span: tuple[float, float] | None = None,
) -> CommuterSim:
    """Generate commuters and board them FIFO under a capacity cap.

    Arrivals at each platform follow a (piecewise) Poisson process;
    destinations are uniform over downstream stations. A commuter
    waiting on the platform of a departing full train has
    ``trains_missed`` incremented; boarding is strictly FIFO by
    platform arrival.
    """
    if train_capacity <= 0:
        raise ValueError("train_capacity must be > 0")
    if not isinstance(demand, DemandProfile):
        demand = DemandProfile(base=demand)

    if not timetable.entries:
        return CommuterSim(commuters=[], events=[])
    if demand_span is None:
        demand_span = (timetable.start, timetable.end)
    t0, t1 = demand_span

    rng = np.random.default_rng(seed)

    # platform arrivals, per station in line order (skip the terminus)
    raw: list[tuple[float, StationId, StationId]] = []
    for station in topology.stations[:-1]:
        downstream = topology.downstream_of(station)
        for a, b, rate in demand.segments(station, t0, t1):
            if rate <= 0:
                continue
            n = rng.poisson(rate * (b - a))
            times = np.sort(rng.uniform(a, b, size=n))
            u = rng.random(size=n) ** (1.0 / demand.dest_power)
            dests = np.minimum((u * len(downstream)).astype(int), len(downstream) - 1)
            for t, d in zip(times, dests):
                raw.append((float(t), station, downstream[int(d)]))

    raw.sort(key=lambda r: (r[0], r[1], r[2]))
    commuters = [
        Commuter(id=i, origin=s, destination=d, platform_arrival=t)
        for i, (t, s, d) in enumerate(raw)
    ]

    # FIFO queues per station; boarded commuters are a prefix of the
    # eligible range, so a moving pointer suffices
    queue: dict[StationId, list[Commuter]] = {s: [] for s in topology.stations}
    for c in commuters:
        queue[c.origin].append(c)
    ptr = {s: 0 for s in topology.stations}

    events: list[BoardingEvent] = []
    for train, entries in timetable.by_train().items():
        onboard: list[Commuter] = []
        for e in entries:
            onboard = _alight(onboard, e)
            q = queue[e.station]
            lo = ptr[e.station]
            hi = lo
            while hi < len(q) and q[hi].platform_arrival <= e.depart:
                if q[hi].first_witnessed_departure is None:
                    q[hi].first_witnessed_departure = e.depart
                hi += 1
            n_waiting = hi - lo
            room = train_capacity - len(onboard)
            n_boarded = min(room, n_waiting)
            for c in q[lo:lo + n_boarded]:
                c.boarded_train = train
                c.board_time = e.depart
                onboard.append(c)
            left = q[lo + n_boarded:hi]
            for c in left:
                c.trains_missed += 1
            ptr[e.station] = lo + n_boarded
            events.append(BoardingEvent(
                train=train, station=e.station, arrive=e.arrive, depart=e.depart,
                n_waiting=n_waiting, n_boarded=n_boarded,
                n_left_behind=n_waiting - n_boarded,
                left_behind_ids=tuple(c.id for c in left),
            ))
    return CommuterSim(commuters=commuters, events=events)


def _alight(onboard: list[Commuter], entry: TimetableEntry) -> list[Commuter]:
    stay = []
    for c in onboard:
        if c.destination == entry.station:
            c.alight_time = entry.arrive
        else:
            stay.append(c)
    return stay


# ---------------------------------------------------------------------------
# demand-supply-gap ground truth


@dataclass(frozen=True, slots=True)
class WindowLabel:
    """Ground-truth DSG outcome for one (station, 30-min window)."""

    station: StationId
    window_start: float
    n_intending: int
    n_left_behind: int
    pct_left_behind: float
    avg_trains_missed: float
    positive: bool
    severity_class: str  # {"none", "DSG-1", "DSG-2+"}


def dsg_window_labels(
    commuters: Iterable[Commuter],
    window_s: float = DSG_WINDOW_S,
) -> list[WindowLabel]:
    """Aggregate commuter outcomes into per-(station, window) DSG labels.

    A commuter belongs to the window of the first departure they
    witnessed at their origin (platform arrival when no train ever
    came). A window is DSG-positive when at least one commuter in it
    missed at least one train; the severity class thresholds the mean
    miss count of impacted commuters at 2.
    """
    acc: dict[tuple[StationId, float], list[Commuter]] = {}
    for c in commuters:
        anchor = c.first_witnessed_departure
        if anchor is None:
            anchor = c.platform_arrival
        w = float(np.floor(anchor / window_s) * window_s)
        acc.setdefault((c.origin, w), []).append(c)

    labels = []
    for (station, w), group in sorted(acc.items()):
        left = [c for c in group if c.trains_missed >= 1]
        n_int, n_left = len(group), len(left)
        avg_missed = float(np.mean([c.trains_missed for c in left])) if left else 0.0
        if n_left == 0:
            severity = "none"
        elif avg_missed >= 2.0:
            severity = "DSG-2+"
        else:
            severity = "DSG-1"
        labels.append(WindowLabel(
            station=station, window_start=w,
            n_intending=n_int, n_left_behind=n_left,
            pct_left_behind=100.0 * n_left / n_int,
            avg_trains_missed=avg_missed,
            positive=n_left >= 1, severity_class=severity,
        ))
    return labels


def write_window_labels(path: str | Path, labels: Iterable[WindowLabel]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station", "window_start", "n_intending", "n_left_behind",
                         "pct_left_behind", "avg_trains_missed", "positive", "severity"])
        for lb in labels:
            writer.writerow([lb.station, repr(lb.window_start), lb.n_intending,
                             lb.n_left_behind, f"{lb.pct_left_behind:.4f}",
                             f"{lb.avg_trains_missed:.4f}", int(lb.positive),
                             lb.severity_class])


def gate_entry_counts(
    commuters: Iterable[Commuter],
    bin_s: float = GATE_BIN_S,
) -> dict[tuple[StationId, int], int]:
    """Fare-gate style entry counts per (station, time bin)."""
    counts: dict[tuple[StationId, int], int] = {}
    for c in commuters:
        key = (c.origin, int(c.platform_arrival // bin_s))
        counts[key] = counts.get(key, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# passive sensing channel


@dataclass
class SensingConfig:
    """Noise channels of the passive observation process.

    ``base_sampling`` is the probability that a station visit is
    observed at all, optionally modulated per station and per time
    block (the product is clamped to [0, 1]). ``dropout_tail`` removes
    the trailing records of a visit, which is what makes a trace appear
    to leave a station earlier than it did. ``id_split`` renames the
    device once mid-journey.
    """

    base_sampling: float = 1.0
    station_factors: dict[StationId, float] | None = None
    time_factors: list[tuple[float, float, float]] | None = None
    jitter_sd: float = 0.0
    dropout_tail: float = 0.0
    id_split: float = 0.0
    emit_period: float = 10.0

    def __post_init__(self):
        for name in ("base_sampling", "dropout_tail", "id_split"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.jitter_sd < 0:
            raise ValueError("jitter_sd must be >= 0")
        if self.emit_period <= 0:
            raise ValueError("emit_period must be > 0")

    def sampling(self, station: StationId, t: float) -> float:
        p = self.base_sampling
        if self.station_factors is not None:
            p *= self.station_factors.get(station, 1.0)
        if self.time_factors is not None:
            for t0, t1, factor in self.time_factors:
                if t0 <= t < t1:
                    p *= factor
                    break
        return min(max(p, 0.0), 1.0)


def observe(
    commuters: Iterable[Commuter],
    timetable: GroundTruthTimetable,
    cfg: SensingConfig,
    seed: int = 0,
) -> list[ObservationRecord]:
    """Emit noisy observation records for each commuter's station visits.

    A boarded commuter is present at the origin platform from platform
    arrival until the train departs, at each intermediate station for
    the train's dwell, and at the destination at the arrival instant.
    An unboarded commuter lingers at the origin until the last departure
    there. Records are emitted every ``emit_period`` seconds with the
    visit boundaries always included, then passed through the noise
    channels. Fixed seed means byte-identical output.
    """
    rng = np.random.default_rng(seed)
    train_times: dict[TrainId, list[TimetableEntry]] = timetable.by_train()
    last_dep: dict[StationId, float] = {}
    for e in timetable.entries:
        last_dep[e.station] = max(last_dep.get(e.station, -np.inf), e.depart)

    records: list[ObservationRecord] = []
    for c in sorted(commuters, key=lambda c: c.id):
        visits = _visits(c, train_times, last_dep)
        if not visits:
            continue
        device = f"d{c.id:06d}"
        j_start = visits[0][1]
        j_end = max(t for _, _, t in visits)

        split_at = np.inf
        if cfg.id_split > 0 and rng.random() < cfg.id_split and j_end > j_start:
            split_at = rng.uniform(j_start, j_end)

        for station, t_a, t_b in visits:
            if rng.random() >= cfg.sampling(station, t_a):
                continue
            times = list(np.arange(t_a, t_b, cfg.emit_period))
            if not times or times[-1] < t_b:
                times.append(t_b)
            if len(times) >= 2 and cfg.dropout_tail > 0 and rng.random() < cfg.dropout_tail:
                keep = int(rng.integers(1, len(times)))
                times = times[:keep]
            for t in times:
                dev = device if t <= split_at else device + "~1"
                if cfg.jitter_sd > 0:
                    t = t + rng.normal(0.0, cfg.jitter_sd)
                records.append(ObservationRecord(dev, station, max(0, int(round(t)))))

    records.sort(key=lambda r: (r.timestamp, r.device, r.station))
    return records


def _visits(
    c: Commuter,
    train_times: dict[TrainId, list[TimetableEntry]],
    last_dep: dict[StationId, float],
) -> list[tuple[StationId, float, float]]:
    if c.boarded_train is None:
        if c.origin not in last_dep:
            return []
        t_end = max(c.platform_arrival, last_dep[c.origin])
        return [(c.origin, c.platform_arrival, t_end)]

    path = train_times[c.boarded_train]
    times = {e.station: (e.arrive, e.depart) for e in path}
    origin_arr = times[c.origin][0]
    dest_arr = times[c.destination][0]
    visits = [(c.origin, c.platform_arrival, times[c.origin][1])]
    for e in path:
        if origin_arr < e.arrive < dest_arr:
            visits.append((e.station, e.arrive, e.depart))
    visits.append((c.destination, dest_arr, dest_arr))
    return visits


# ---------------------------------------------------------------------------
# incident injection


def inject_incident(
    timetable: GroundTruthTimetable,
    station: StationId,
    start: float,
    hold: float,
    recovery_factor: float = 1.0,
    min_separation: float = 60.0,
) -> GroundTruthTimetable:
    """Hold trains reaching ``station`` during [start, start+hold].

    Held trains are released FIFO at the end of the hold with
    ``min_separation`` spacing; their downstream times shift by the
    incurred delay. Trains arriving after the hold keep at least
    ``min_separation * recovery_factor`` behind their predecessor's
    departure until the nominal schedule is recovered.
    """
    if hold <= 0:
        raise ValueError("hold must be > 0")
    if recovery_factor < 1.0:
        raise ValueError("recovery_factor must be >= 1")
    if station not in timetable.stations():
        raise ValueError(f"station {station} not served by this timetable")

    by_train = timetable.by_train()
    serving = [
        (entries_by_station[station].arrive, train)
        for train, entries_by_station in
        ((t, {e.station: e for e in es}) for t, es in by_train.items())
        if station in entries_by_station
    ]
    serving.sort()

    delays: dict[TrainId, float] = {}
    new_dep_at_station: dict[TrainId, float] = {}
    prev_dep = -np.inf
    for arr, train in serving:
        nominal_dep = next(e.depart for e in by_train[train] if e.station == station)
        if arr < start:
            new_dep = max(nominal_dep, prev_dep + min_separation) if np.isfinite(prev_dep) \
                else nominal_dep
        elif arr <= start + hold:
            new_dep = max(nominal_dep, start + hold, prev_dep + min_separation)
        else:
            new_dep = max(nominal_dep, prev_dep + min_separation * recovery_factor)
        delays[train] = new_dep - nominal_dep
        new_dep_at_station[train] = new_dep
        prev_dep = new_dep

    entries = []
    for train, train_entries in by_train.items():
        delay = delays.get(train, 0.0)
        if delay <= 0:
            entries.extend(train_entries)
            continue
        hold_arr = next(e.arrive for e in train_entries if e.station == station)
        for e in train_entries:
            if e.station == station:
                entries.append(replace(e, depart=new_dep_at_station[train]))
            elif e.arrive > hold_arr:
                entries.append(replace(e, arrive=e.arrive + delay, depart=e.depart + delay))
            else:
                entries.append(e)
    return GroundTruthTimetable(entries=entries)


# ---------------------------------------------------------------------------
# scenario configuration


@dataclass
class IncidentConfig:
    station: StationId
    start: float
    hold: float
    recovery_factor: float = 1.0
    min_separation: float = 60.0


@dataclass
class ScenarioConfig:
    """Everything needed to run one simulated line for one period."""

    topology: LineTopology
    headway: float
    dwell: float
    run_time: float | list[float]
    span: tuple[float, float]
    demand: DemandProfile
    capacity: int
    sensing: SensingConfig
    incident: IncidentConfig | None = None
    gap_threshold: float = 3600.0

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioConfig":
        topo = obj["topology"]
        if "stations" in topo:
            topology = LineTopology(topo.get("line_id", "L1"), tuple(topo["stations"]),
                                    topo.get("direction", "up"))
        else:
            topology = LineTopology.linear(int(topo["n_stations"]),
                                           topo.get("line_id", "L1"),
                                           topo.get("direction", "up"))
        dem = obj.get("demand", {})
        base = dem.get("base", 0.0)
        if isinstance(base, dict):
            base = {int(k): float(v) for k, v in base.items()}
        demand = DemandProfile(
            base=base,
            surges=[Surge(int(s["station"]), float(s["start"]), float(s["end"]),
                          float(s["rate"])) for s in dem.get("surges", [])],
        )
        sen = obj.get("sensing", {})
        sensing = SensingConfig(
            base_sampling=float(sen.get("base_sampling", 1.0)),
            station_factors={int(k): float(v)
                             for k, v in sen.get("station_factors", {}).items()} or None,
            time_factors=[tuple(map(float, tf)) for tf in sen.get("time_factors", [])] or None,
            jitter_sd=float(sen.get("jitter_sd", 0.0)),
            dropout_tail=float(sen.get("dropout_tail", 0.0)),
            id_split=float(sen.get("id_split", 0.0)),
            emit_period=float(sen.get("emit_period", 10.0)),
        )
        inc = None
        if obj.get("incident"):
            i = obj["incident"]
            inc = IncidentConfig(
                station=int(i["station"]), start=float(i["start"]), hold=float(i["hold"]),
                recovery_factor=float(i.get("recovery_factor", 1.0)),
                min_separation=float(i.get("min_separation", 60.0)),
            )
        return cls(
            topology=topology,
            headway=float(obj["headway"]),
            dwell=float(obj.get("dwell", 30.0)),
            run_time=obj.get("run_time", 120.0),
            span=(float(obj["span"][0]), float(obj["span"][1])),
            demand=demand,
            capacity=int(obj.get("capacity", 10 ** 9)),
            sensing=sensing,
            incident=inc,
            gap_threshold=float(obj.get("gap_threshold", 3600.0)),
        )

    def to_dict(self) -> dict:
        out: dict = {
            "topology": {
                "line_id": self.topology.line_id,
                "stations": list(self.topology.stations),
                "direction": self.topology.direction,
            },
            "headway": self.headway,
            "dwell": self.dwell,
            "run_time": self.run_time,
            "span": list(self.span),
            "demand": {
                "base": (self.demand.base if not isinstance(self.demand.base, dict)
                         else {str(k): v for k, v in self.demand.base.items()}),
                "surges": [
                    {"station": s.station, "start": s.start, "end": s.end, "rate": s.rate}
                    for s in self.demand.surges
                ],
            },
            "capacity": self.capacity,
            "sensing": {
                "base_sampling": self.sensing.base_sampling,
                "station_factors": {str(k): v
                                    for k, v in (self.sensing.station_factors or {}).items()},
                "time_factors": [list(tf) for tf in (self.sensing.time_factors or [])],
                "jitter_sd": self.sensing.jitter_sd,
                "dropout_tail": self.sensing.dropout_tail,
                "id_split": self.sensing.id_split,
                "emit_period": self.sensing.emit_period,
            },
            "gap_threshold": self.gap_threshold,
        }
        if self.incident is not None:
            out["incident"] = {
                "station": self.incident.station, "start": self.incident.start,
                "hold": self.incident.hold,
                "recovery_factor": self.incident.recovery_factor,
                "min_separation": self.incident.min_separation,
            }
        return out

    @classmethod
    def from_json(cls, path: str | Path) -> "ScenarioConfig":
        with Path(path).open() as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass
class SimOutput:
    timetable: GroundTruthTimetable
    commuters: list[Commuter]
    events: list[BoardingEvent]
    records: list[ObservationRecord]
    window_labels: list[WindowLabel]
    gate_counts: dict[tuple[StationId, int], int]


def simulate_scenario(cfg: ScenarioConfig, seed: int = 0) -> SimOutput:
    """One-shot driver: timetable (+ incident), commuters, sensing."""
    timetable = generate_timetable(cfg.topology, cfg.headway, cfg.dwell,
                                   cfg.run_time, cfg.span)
    if cfg.incident is not None:
        timetable = inject_incident(
            timetable, cfg.incident.station, cfg.incident.start, cfg.incident.hold,
            cfg.incident.recovery_factor, cfg.incident.min_separation)
    sim = simulate_commuters(timetable, cfg.topology, cfg.demand, cfg.capacity, seed=seed)
    records = observe(sim.commuters, timetable, cfg.sensing, seed=seed + 1)
    return SimOutput(
        timetable=timetable,
        commuters=sim.commuters,
        events=sim.events,
        records=records,
        window_labels=dsg_window_labels(sim.commuters),
        gate_counts=gate_entry_counts(sim.commuters),
    )
