"""Core domain types shared across the package.

Stations are small integer indices, contiguous 0..S-1 along a line
direction. Devices are opaque string tokens, trains string labels.
All times are seconds; raw observation timestamps are integer seconds
(sub-second precision carries no information at train-event timescales).
"""

from __future__ import annotations

from dataclasses import dataclass, field

StationId = int
DeviceId = str
TrainId = str


@dataclass(frozen=True, slots=True)
class ObservationRecord:
    """One passive sensing event: a device seen at a station at a time."""

    device: DeviceId
    station: StationId
    timestamp: int


@dataclass(slots=True)
class Journey:
    """Per-device sparse vector of (first-seen, last-seen) per station.

    ``stops`` maps station index to the pair (t_first, t_last) of the
    earliest and latest times the device was observed there within one
    journey. A device produces a new journey whenever its trace goes
    quiet for longer than the vectorization gap threshold.
    """

    device: DeviceId
    journey_seq: int
    stops: dict[StationId, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.stops:
            raise ValueError("journey must visit at least one station")
        for s, (t_first, t_last) in self.stops.items():
            if t_first > t_last:
                raise ValueError(f"station {s}: first-seen {t_first} > last-seen {t_last}")

    @property
    def stations(self) -> set[StationId]:
        return set(self.stops)

    @property
    def start_time(self) -> float:
        return min(t for t, _ in self.stops.values())

    @property
    def end_time(self) -> float:
        return max(t for _, t in self.stops.values())

    def origin_station(self) -> StationId:
        """Station of the temporally first observation (boarding platform)."""
        return min(self.stops, key=lambda s: (self.stops[s][0], s))

    def first_seen(self, station: StationId) -> float:
        return self.stops[station][0]

    def last_seen(self, station: StationId) -> float:
        return self.stops[station][1]


@dataclass(frozen=True)
class LineTopology:
    """Ordered stations of one line direction.

    ``stations`` lists station ids in travel order; trains serve them
    front to back. A topology needs at least two distinct stations.
    """

    line_id: str
    stations: tuple[StationId, ...]
    direction: str = "up"

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        if len(self.stations) < 2:
            raise ValueError("a line needs at least 2 stations")
        if len(set(self.stations)) != len(self.stations):
            raise ValueError("duplicate station on line")
        if self.direction not in ("up", "down"):
            raise ValueError(f"direction must be 'up' or 'down', got {self.direction!r}")

    def __len__(self) -> int:
        return len(self.stations)

    def __contains__(self, station: StationId) -> bool:
        return station in self.stations

    def index(self, station: StationId) -> int:
        """Position of ``station`` along the travel direction."""
        return self.stations.index(station)

    def downstream_of(self, station: StationId) -> tuple[StationId, ...]:
        return self.stations[self.index(station) + 1:]

    @classmethod
    def linear(cls, n_stations: int, line_id: str = "L1", direction: str = "up") -> "LineTopology":
        """Convenience builder: stations 0..n-1 in order."""
        return cls(line_id=line_id, stations=tuple(range(n_stations)), direction=direction)
