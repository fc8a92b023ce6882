"""Demand-supply-gap estimation.

Device counts become passenger counts through per-(station, time-bin)
scaling factors calibrated against gate entries and refreshed online
with an auto-regressive update. Per train departure, platform features
(scaled waiting count, scaled still-waiting-after-departure count, wait
time statistics, headway) feed a logistic classifier trained with
class-rebalanced bootstrap rounds, organized as a hierarchy of models:
one network-wide, one per line where data allows, one per station where
positive events are frequent enough. A second logistic head grades
flagged events into severity classes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .types import Journey, StationId

log = logging.getLogger(__name__)

FEATURE_NAMES = ("waiting_count", "missed_count", "wait_q3", "wait_sd", "headway")
SCALING_BIN_S = 600.0


# ---------------------------------------------------------------------------
# scaling factors


@dataclass(frozen=True)
class ScalingFactor:
    """Gate-entries per observed device for one (station, time bin)."""

    station: StationId
    time_bin: int
    theta: float
    alpha: float = 0.3
    n_updates: int = 0
    n_skipped: int = 0

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be > 0")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")


def estimate_scaling(
    gate_counts: Mapping[tuple[StationId, int], float],
    device_counts: Mapping[tuple[StationId, int], float],
    alpha: float = 0.3,
) -> tuple[list[ScalingFactor], list[tuple[StationId, int]]]:
    """Ratio of gate entries to device observations per aligned bin.

    Bins without device observations cannot be calibrated; they are
    skipped and returned separately for diagnostics.
    """
    factors = []
    skipped = []
    for key in sorted(set(gate_counts) | set(device_counts)):
        y = float(gate_counts.get(key, 0.0))
        x = float(device_counts.get(key, 0.0))
        if y < 0 or x < 0:
            raise ValueError(f"negative count in bin {key}")
        if x == 0:
            skipped.append(key)
            continue
        if y == 0:
            skipped.append(key)
            continue
        factors.append(ScalingFactor(station=key[0], time_bin=key[1],
                                     theta=y / x, alpha=alpha, n_updates=1))
    if skipped:
        log.debug("estimate_scaling: %d bins skipped (zero counts)", len(skipped))
    return factors, skipped


def update_scaling_online(prev: ScalingFactor, y_new: float, x_new: float) -> ScalingFactor:
    """Auto-regressive refresh: theta <- (1-alpha)*theta + alpha*(y/x)."""
    if x_new == 0:
        return replace(prev, n_skipped=prev.n_skipped + 1)
    theta = (1.0 - prev.alpha) * prev.theta + prev.alpha * (y_new / x_new)
    return replace(prev, theta=theta, n_updates=prev.n_updates + 1)


class ThetaTable:
    """Lookup of scaling factors with a neutral default."""

    def __init__(self, factors: Iterable[ScalingFactor] = (), bin_s: float = SCALING_BIN_S,
                 default: float = 1.0):
        self.bin_s = bin_s
        self.default = default
        self._table: dict[tuple[StationId, int], ScalingFactor] = {
            (f.station, f.time_bin): f for f in factors
        }

    def theta(self, station: StationId, t: float) -> float:
        f = self._table.get((station, int(t // self.bin_s)))
        return f.theta if f is not None else self.default

    def update(self, station: StationId, t: float, y_new: float, x_new: float,
               alpha: float = 0.3) -> None:
        key = (station, int(t // self.bin_s))
        prev = self._table.get(key)
        if prev is None:
            if x_new > 0 and y_new > 0:
                self._table[key] = ScalingFactor(station=key[0], time_bin=key[1],
                                                 theta=y_new / x_new, alpha=alpha,
                                                 n_updates=1)
            return
        self._table[key] = update_scaling_online(prev, y_new, x_new)


def device_entry_counts(
    journeys: Iterable[Journey],
    bin_s: float = SCALING_BIN_S,
) -> dict[tuple[StationId, int], int]:
    """Distinct devices first seen per (station, time bin).

    The sensing-side counterpart of fare-gate entry counts: a device
    "enters" at the station and time of its journey's first observation.
    """
    counts: dict[tuple[StationId, int], int] = {}
    for j in journeys:
        s = j.origin_station()
        key = (s, int(j.first_seen(s) // bin_s))
        counts[key] = counts.get(key, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# features


@dataclass
class DsgFeatures:
    waiting_count: float
    missed_count: float
    wait_q3: float
    wait_sd: float
    headway: float

    def as_array(self) -> np.ndarray:
        return np.array([self.waiting_count, self.missed_count, self.wait_q3,
                         self.wait_sd, self.headway], dtype=np.float64)


def extract_features(
    station: StationId,
    departure: float,
    prev_departure: float | None,
    journeys: Sequence[Journey],
    theta: float = 1.0,
    nominal_headway: float | None = None,
    grace: float = 60.0,
) -> DsgFeatures:
    """Platform state around one train departure.

    Devices whose presence at the station intersects (prev_departure,
    departure] count as waiting (scaled by theta); those still observed
    more than ``grace`` seconds after the departure count as having
    missed the train. Wait statistics are per-device presence durations.
    With no prior departure the headway falls back to the nominal value.
    """
    if prev_departure is None:
        if nominal_headway is None:
            raise ValueError("need prev_departure or nominal_headway")
        headway = float(nominal_headway)
        prev_departure = departure - headway
        log.debug("station %s t=%.0f: no prior departure, nominal headway used",
                  station, departure)
    else:
        headway = float(departure - prev_departure)

    waits = []
    n_waiting = 0
    n_missed = 0
    for j in journeys:
        if station not in j.stops:
            continue
        t_first, t_last = j.stops[station]
        if t_first <= departure and t_last > prev_departure:
            n_waiting += 1
            waits.append(t_last - t_first)
            if t_last > departure + grace:
                n_missed += 1
    if waits:
        wait_q3 = float(np.quantile(waits, 0.75))
        wait_sd = float(np.std(waits))
    else:
        wait_q3 = 0.0
        wait_sd = 0.0
    return DsgFeatures(
        waiting_count=theta * n_waiting,
        missed_count=theta * n_missed,
        wait_q3=wait_q3,
        wait_sd=wait_sd,
        headway=headway,
    )


def winsorize(values: Sequence[float] | np.ndarray, percentile: float = 0.99) -> np.ndarray:
    """Clip the upper tail at the given quantile (lower tail untouched)."""
    if not 0 < percentile < 1:
        raise ValueError("percentile must be in (0, 1)")
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return arr.copy()
    cap = np.quantile(arr, percentile)
    return np.minimum(arr, cap)


def winsorize_columns(X: np.ndarray, percentile: float = 0.99) -> np.ndarray:
    out = np.asarray(X, dtype=np.float64).copy()
    for c in range(out.shape[1]):
        out[:, c] = winsorize(out[:, c], percentile)
    return out


@dataclass(frozen=True)
class NormParams:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.sd

    def invert(self, Xn: np.ndarray) -> np.ndarray:
        return np.asarray(Xn, dtype=np.float64) * self.sd + self.mean


def normalize(X: np.ndarray) -> tuple[np.ndarray, NormParams]:
    """Per-feature z-scoring; constant features pass through (sd kept as 1)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("need at least 2 samples to normalize")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0, 1.0, sd)
    params = NormParams(mean=mean, sd=sd)
    return params.apply(X), params


# ---------------------------------------------------------------------------
# logistic regression core


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def nll_and_grad(
    weights: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Regularized negative log-likelihood and its analytic gradient.

    ``weights[0]`` is the intercept (unpenalized); ``X`` carries no
    intercept column.
    """
    w0, w = weights[0], weights[1:]
    z = w0 + X @ w
    nll = float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w))
    p = sigmoid(z)
    resid = p - y
    grad = np.empty_like(weights)
    grad[0] = np.sum(resid)
    grad[1:] = X.T @ resid + l2 * w
    return nll, grad


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 1e-4,
    max_iter: int = 100,
    tol: float = 1e-8,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Newton's method with backtracking; monotone in the regularized NLL."""
    n, d = X.shape
    w = np.zeros(d + 1) if init is None else np.asarray(init, dtype=np.float64).copy()
    nll, grad = nll_and_grad(w, X, y, l2)
    for _ in range(max_iter):
        if np.max(np.abs(grad)) <= tol:
            break
        z = w[0] + X @ w[1:]
        p = sigmoid(z)
        r = np.maximum(p * (1.0 - p), 1e-12)
        Xb = np.hstack([np.ones((n, 1)), X])
        H = (Xb * r[:, None]).T @ Xb
        H[1:, 1:] += l2 * np.eye(d)
        H += 1e-10 * np.eye(d + 1)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = grad
        lr = 1.0
        for _ in range(50):
            w_new = w - lr * step
            nll_new, grad_new = nll_and_grad(w_new, X, y, l2)
            if nll_new <= nll - 1e-4 * lr * float(grad @ step):
                break
            lr *= 0.5
        else:
            break
        w, nll, grad = w_new, nll_new, grad_new
    return w


@dataclass
class TrainConfig:
    bootstrap_rounds: int = 25
    l2: float = 1e-4
    max_iter: int = 100
    tol: float = 1e-8
    seed: int = 0
    cutoff_grid: tuple[float, ...] = tuple(np.round(np.arange(0.05, 1.0, 0.05), 2))
    val_fraction: float = 0.25
    min_positive_samples: int = 50
    winsor_percentile: float = 0.99


def train_logistic(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig | None = None,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Bootstrap-averaged logistic weights on class-rebalanced resamples.

    Each round resamples both classes with replacement to the majority
    size (1:1 within the round), fits, and the rounds' weights are
    averaged. Deterministic for a fixed seed.
    """
    if config is None:
        config = TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both classes must be present")

    rng = np.random.default_rng(config.seed)
    n_each = max(len(pos), len(neg))
    acc = np.zeros(X.shape[1] + 1)
    for _ in range(config.bootstrap_rounds):
        take = np.concatenate([rng.choice(pos, size=n_each, replace=True),
                               rng.choice(neg, size=n_each, replace=True)])
        acc += fit_logistic(X[take], y[take], l2=config.l2,
                            max_iter=config.max_iter, tol=config.tol, init=init)
    return acc / config.bootstrap_rounds


def f1_score(pred: np.ndarray, y: np.ndarray) -> float:
    """F1 with the 0-on-degenerate convention used for threshold search."""
    tp = float(np.sum((pred == 1) & (y == 1)))
    fp = float(np.sum((pred == 1) & (y == 0)))
    fn = float(np.sum((pred == 0) & (y == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def grid_search_cutoff(
    weights: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    grid: Sequence[float] | None = None,
) -> float:
    """Probability cutoff maximizing F1 on validation; ties take the lowest."""
    if grid is None:
        grid = TrainConfig().cutoff_grid
    y_val = np.asarray(y_val)
    if len(np.unique(y_val)) < 2:
        raise ValueError("validation set must contain both classes")
    p = sigmoid(weights[0] + X_val @ weights[1:])
    best_cut, best_f1 = None, -1.0
    for cut in sorted(grid):
        f1 = f1_score((p >= cut).astype(int), y_val)
        if f1 > best_f1:
            best_cut, best_f1 = float(cut), f1
    return best_cut


def stratified_folds(y: np.ndarray, folds: int, seed: int = 0) -> list[np.ndarray]:
    """Deterministic stratified fold assignment (round-robin per class)."""
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(y), dtype=np.int64)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for i, j in enumerate(idx):
            assignment[j] = i % folds
    return [np.flatnonzero(assignment == f) for f in range(folds)]


def forward_select(
    X: np.ndarray,
    y: np.ndarray,
    folds: int = 10,
    epsilon: float = 1e-3,
    config: TrainConfig | None = None,
    candidates: Sequence[int] | None = None,
) -> tuple[int, ...]:
    """Greedy forward feature selection on cross-validated F1.

    Adds the candidate with the best mean F1 across folds; stops when
    the best addition improves by no more than ``epsilon``.
    """
    if config is None:
        config = TrainConfig(bootstrap_rounds=5)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if candidates is None:
        candidates = range(X.shape[1])
    remaining = list(candidates)
    fold_idx = stratified_folds(y, folds, seed=config.seed)
    selected: list[int] = []
    best_score = 0.0

    def cv_f1(mask: list[int]) -> float:
        scores = []
        for f, test_idx in enumerate(fold_idx):
            train_idx = np.concatenate([fold_idx[g] for g in range(folds) if g != f])
            ytr, yte = y[train_idx], y[test_idx]
            if len(np.unique(ytr)) < 2 or len(test_idx) == 0:
                continue
            w = train_logistic(X[np.ix_(train_idx, mask)], ytr, config)
            p = sigmoid(w[0] + X[np.ix_(test_idx, mask)] @ w[1:])
            scores.append(f1_score((p >= 0.5).astype(int), yte))
        return float(np.mean(scores)) if scores else 0.0

    while remaining:
        trial = [(cv_f1(selected + [c]), -c) for c in remaining]
        score, neg_c = max(trial)
        if score - best_score <= epsilon:
            break
        selected.append(-neg_c)
        remaining.remove(-neg_c)
        best_score = score
    return tuple(selected)


# ---------------------------------------------------------------------------
# models, hierarchy, prediction


@dataclass
class DsgModel:
    """Logistic weights plus everything needed to score a raw feature row."""

    weights: np.ndarray
    cutoff: float
    feature_mask: tuple[int, ...]
    normalization: NormParams
    n_samples: int = 0
    n_positive: int = 0

    def probability(self, features: DsgFeatures | np.ndarray) -> float:
        x = features.as_array() if isinstance(features, DsgFeatures) else np.asarray(features)
        xn = self.normalization.apply(x)[list(self.feature_mask)]
        return float(sigmoid(self.weights[0] + xn @ self.weights[1:]))

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "cutoff": self.cutoff,
            "feature_mask": list(self.feature_mask),
            "normalization": {"mean": [float(v) for v in self.normalization.mean],
                              "sd": [float(v) for v in self.normalization.sd]},
            "n_samples": self.n_samples,
            "n_positive": self.n_positive,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DsgModel":
        return cls(
            weights=np.asarray(obj["weights"], dtype=np.float64),
            cutoff=float(obj["cutoff"]),
            feature_mask=tuple(obj["feature_mask"]),
            normalization=NormParams(
                mean=np.asarray(obj["normalization"]["mean"], dtype=np.float64),
                sd=np.asarray(obj["normalization"]["sd"], dtype=np.float64)),
            n_samples=int(obj.get("n_samples", 0)),
            n_positive=int(obj.get("n_positive", 0)),
        )


@dataclass
class DsgDataset:
    """Per-departure-event samples with their grouping keys."""

    X: np.ndarray                 # (n, len(FEATURE_NAMES)) raw feature rows
    y: np.ndarray                 # binary DSG label per event
    stations: np.ndarray          # station id per event
    lines: np.ndarray             # line id per event
    severity: np.ndarray | None = None   # trains missed (avg) for positive events

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, mask: np.ndarray) -> "DsgDataset":
        return DsgDataset(
            X=self.X[mask], y=self.y[mask], stations=self.stations[mask],
            lines=self.lines[mask],
            severity=self.severity[mask] if self.severity is not None else None,
        )


@dataclass
class ModelHierarchy:
    network: DsgModel
    lines: dict[str, DsgModel] = field(default_factory=dict)
    stations: dict[StationId, DsgModel] = field(default_factory=dict)
    severity: DsgModel | None = None
    min_positive_samples: int = 50

    def resolve(self, station: StationId, line: str | None = None) -> tuple[DsgModel, str]:
        if station in self.stations:
            return self.stations[station], "station"
        if line is not None and line in self.lines:
            return self.lines[line], "line"
        return self.network, "network"

    def to_json(self, path: str | Path) -> None:
        obj = {
            "network": self.network.to_dict(),
            "lines": {k: m.to_dict() for k, m in self.lines.items()},
            "stations": {str(k): m.to_dict() for k, m in self.stations.items()},
            "severity": self.severity.to_dict() if self.severity else None,
            "min_positive_samples": self.min_positive_samples,
            "feature_names": list(FEATURE_NAMES),
        }
        with Path(path).open("w") as fh:
            json.dump(obj, fh, indent=2)

    @classmethod
    def from_json(cls, path: str | Path) -> "ModelHierarchy":
        with Path(path).open() as fh:
            obj = json.load(fh)
        return cls(
            network=DsgModel.from_dict(obj["network"]),
            lines={k: DsgModel.from_dict(v) for k, v in obj["lines"].items()},
            stations={int(k): DsgModel.from_dict(v) for k, v in obj["stations"].items()},
            severity=DsgModel.from_dict(obj["severity"]) if obj.get("severity") else None,
            min_positive_samples=int(obj.get("min_positive_samples", 50)),
        )


def _train_one(
    X: np.ndarray,
    y: np.ndarray,
    norm: NormParams,
    mask: tuple[int, ...],
    config: TrainConfig,
    init: np.ndarray | None = None,
) -> DsgModel:
    Xn = norm.apply(X)[:, list(mask)]
    n = len(y)
    rng = np.random.default_rng(config.seed + 1)
    order = rng.permutation(n)
    n_val = max(1, int(round(config.val_fraction * n)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(np.unique(y[train_idx])) < 2 or len(np.unique(y[val_idx])) < 2:
        train_idx = val_idx = np.arange(n)
    weights = train_logistic(Xn[train_idx], y[train_idx], config, init=init)
    cutoff = grid_search_cutoff(weights, Xn[val_idx], y[val_idx], config.cutoff_grid)
    return DsgModel(weights=weights, cutoff=cutoff, feature_mask=mask,
                    normalization=norm, n_samples=n, n_positive=int(y.sum()))


def train_hierarchy(
    dataset: DsgDataset,
    config: TrainConfig | None = None,
    feature_mask: tuple[int, ...] | None = None,
) -> ModelHierarchy:
    """Top-down training: network, then lines, then stations.

    Features are winsorized and normalized on the full training set;
    children start Newton from their parent's weights and are only
    trained where positive events reach ``min_positive_samples``.
    """
    if config is None:
        config = TrainConfig()
    if len(np.unique(dataset.y)) < 2:
        raise ValueError("network-level training needs both classes")
    mask = feature_mask if feature_mask is not None else tuple(range(dataset.X.shape[1]))

    Xw = winsorize_columns(dataset.X, config.winsor_percentile)
    _, norm = normalize(Xw)
    network = _train_one(Xw, dataset.y, norm, mask, config)

    hierarchy = ModelHierarchy(network=network,
                               min_positive_samples=config.min_positive_samples)

    for line in sorted(set(dataset.lines)):
        sel = dataset.lines == line
        y = dataset.y[sel]
        if y.sum() < config.min_positive_samples or len(np.unique(y)) < 2:
            continue
        hierarchy.lines[str(line)] = _train_one(
            Xw[sel], y, norm, mask, config, init=network.weights)

    for station in sorted(set(dataset.stations)):
        sel = dataset.stations == station
        y = dataset.y[sel]
        if y.sum() < config.min_positive_samples or len(np.unique(y)) < 2:
            continue
        line = str(dataset.lines[sel][0])
        parent = hierarchy.lines.get(line, network)
        hierarchy.stations[int(station)] = _train_one(
            Xw[sel], y, norm, mask, config, init=parent.weights)

    if dataset.severity is not None:
        pos = dataset.y == 1
        sev_y = (dataset.severity[pos] >= 2.0).astype(np.float64)
        if len(sev_y) >= 4 and len(np.unique(sev_y)) == 2:
            Xp = Xw[pos]
            sev_weights = train_logistic(norm.apply(Xp)[:, list(mask)], sev_y, config)
            hierarchy.severity = DsgModel(
                weights=sev_weights, cutoff=0.5, feature_mask=mask,
                normalization=norm, n_samples=len(sev_y), n_positive=int(sev_y.sum()))
    return hierarchy


@dataclass(frozen=True)
class Prediction:
    probability: float
    dsg_flag: bool
    severity_class: str
    model_level: str
    fallback: bool = False


def predict(
    hierarchy: ModelHierarchy,
    features: DsgFeatures | np.ndarray,
    station: StationId,
    line: str | None = None,
) -> Prediction:
    """Score with the most specific model available for the station.

    Unknown stations fall back to the line model and then to the
    network model, flagged as such. Severity splits flagged events at
    an average of two missed trains.
    """
    model, level = hierarchy.resolve(station, line)
    fallback = level != "station" and len(hierarchy.stations) > 0
    p = model.probability(features)
    flag = p >= model.cutoff
    if not flag:
        severity = "none"
    elif hierarchy.severity is not None:
        severity = "DSG-2+" if hierarchy.severity.probability(features) >= \
            hierarchy.severity.cutoff else "DSG-1"
    else:
        severity = "DSG-1"
    return Prediction(probability=p, dsg_flag=bool(flag), severity_class=severity,
                      model_level=level, fallback=fallback)


# ---------------------------------------------------------------------------
# window aggregation


@dataclass(frozen=True)
class WindowCounts:
    """One event's contribution to a (station, window) DSG percentage."""

    station: StationId
    time: float
    left_behind: float
    intending: float


def window_dsg_percentage(
    events: Iterable[WindowCounts],
    window_s: float = 1800.0,
) -> dict[tuple[StationId, float], float]:
    """Percent left behind per (station, window); empty windows skipped."""
    acc: dict[tuple[StationId, float], list[float]] = {}
    for e in events:
        w = float(np.floor(e.time / window_s) * window_s)
        bucket = acc.setdefault((e.station, w), [0.0, 0.0])
        bucket[0] += e.left_behind
        bucket[1] += e.intending
    out = {}
    for key, (left, intending) in sorted(acc.items()):
        if intending <= 0:
            continue
        out[key] = float(np.clip(100.0 * left / intending, 0.0, 100.0))
    return out
