"""Raw observation traces: file I/O and the record -> journey vectorization.

Trace files are JSON Lines (one ``{"device":..., "station":..., "timestamp":...}``
object per line) or CSV with a ``device,station,timestamp`` header.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .types import DeviceId, Journey, ObservationRecord, StationId


@dataclass
class VectorizeResult:
    journeys: list[Journey]
    n_rejected: int = 0


def vectorize_journeys(
    records: Iterable[ObservationRecord],
    gap_threshold: float = 3600.0,
    valid_stations: set[StationId] | None = None,
) -> VectorizeResult:
    """Collapse raw records into per-device journeys.

    Per device, records are ordered in time and split into a new journey
    whenever two consecutive records are more than ``gap_threshold``
    seconds apart. Within a journey only (min, max) observation times per
    station are kept. The output is deterministic and independent of the
    input record order.

    Records naming a station outside ``valid_stations`` (when given) are
    dropped and counted in ``n_rejected`` rather than raising.
    """
    if gap_threshold <= 0:
        raise ValueError("gap_threshold must be > 0")

    by_device: dict[DeviceId, list[ObservationRecord]] = {}
    n_rejected = 0
    for rec in records:
        if valid_stations is not None and rec.station not in valid_stations:
            n_rejected += 1
            continue
        by_device.setdefault(rec.device, []).append(rec)

    journeys: list[Journey] = []
    for device in sorted(by_device):
        recs = sorted(by_device[device], key=lambda r: (r.timestamp, r.station))
        seq = 0
        stops: dict[StationId, tuple[float, float]] = {}
        prev_t = None
        for rec in recs:
            if prev_t is not None and rec.timestamp - prev_t > gap_threshold:
                journeys.append(Journey(device=device, journey_seq=seq, stops=stops))
                seq += 1
                stops = {}
            t = float(rec.timestamp)
            if rec.station in stops:
                lo, hi = stops[rec.station]
                stops[rec.station] = (min(lo, t), max(hi, t))
            else:
                stops[rec.station] = (t, t)
            prev_t = rec.timestamp
        if stops:
            journeys.append(Journey(device=device, journey_seq=seq, stops=stops))
    return VectorizeResult(journeys=journeys, n_rejected=n_rejected)


def expand_to_records(journeys: Iterable[Journey]) -> list[ObservationRecord]:
    """Re-expand journeys to their boundary records (first/last per station)."""
    out = []
    for j in journeys:
        for station, (t_first, t_last) in sorted(j.stops.items()):
            out.append(ObservationRecord(j.device, station, int(round(t_first))))
            if t_last != t_first:
                out.append(ObservationRecord(j.device, station, int(round(t_last))))
    out.sort(key=lambda r: (r.timestamp, r.device, r.station))
    return out


def read_records(path: str | Path) -> list[ObservationRecord]:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _read_csv(path)
    return _read_jsonl(path)


def write_records(path: str | Path, records: Iterable[ObservationRecord]) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["device", "station", "timestamp"])
            for rec in records:
                writer.writerow([rec.device, rec.station, rec.timestamp])
    else:
        with path.open("w") as fh:
            for rec in records:
                fh.write(json.dumps(
                    {"device": rec.device, "station": rec.station, "timestamp": rec.timestamp}
                ) + "\n")


def _read_jsonl(path: Path) -> list[ObservationRecord]:
    out = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(ObservationRecord(
                device=str(obj["device"]),
                station=int(obj["station"]),
                timestamp=int(obj["timestamp"]),
            ))
    return out


def _read_csv(path: Path) -> list[ObservationRecord]:
    out = []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ObservationRecord(
                device=row["device"],
                station=int(row["station"]),
                timestamp=int(float(row["timestamp"])),
            ))
    return out
