"""Command-line surface.

Subcommands: simulate, cluster, timetable, dsg-train, dsg-predict,
evaluate, robustness, stream. Each takes a JSON config, a seed and an
output directory, writes CSVs plus a summary.json, and exits 0 on
success or nonzero with a machine-readable error JSON on failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import experiments
from .clustering import PipelineParams, baseline_pipeline, spectral_pipeline
from .dsg import ModelHierarchy, ThetaTable, TrainConfig, device_entry_counts, estimate_scaling
from .experiments import (
    MovementEvalConfig,
    build_day,
    concat_datasets,
    default_pipeline_params,
    run_movement_experiment,
    run_robustness_sweep,
    train_hierarchy,
    window_metrics,
)
from .sim import ScenarioConfig, simulate_scenario, write_window_labels
from .streaming import stream_run
from .traces import read_records, vectorize_journeys, write_records


def _write_summary(out_dir: Path, payload: dict) -> None:
    with (out_dir / "summary.json").open("w") as fh:
        json.dump(payload, fh, indent=2, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _load_scenario(args) -> ScenarioConfig:
    if args.config is None:
        raise ValueError("--config is required for this subcommand")
    return ScenarioConfig.from_json(args.config)


def _pipeline_from_config(args, cfg: ScenarioConfig) -> PipelineParams:
    params = default_pipeline_params(cfg, seed=args.seed)
    if args.config:
        with open(args.config) as fh:
            obj = json.load(fh)
        if "pipeline" in obj:
            params = PipelineParams.from_dict(obj["pipeline"])
            params.seed = args.seed
            if params.nominal_headway is None:
                params.nominal_headway = cfg.headway
    return params


def cmd_simulate(args) -> dict:
    cfg = _load_scenario(args)
    out = simulate_scenario(cfg, seed=args.seed)
    out_dir = Path(args.out)
    write_records(out_dir / "trace.jsonl", out.records)
    out.timetable.write_csv(out_dir / "timetable_true.csv")
    write_window_labels(out_dir / "dsg_labels.csv", out.window_labels)
    return {
        "n_records": len(out.records),
        "n_commuters": len(out.commuters),
        "n_trains": len(out.timetable.trains()),
        "n_positive_windows": sum(1 for lb in out.window_labels if lb.positive),
        "outputs": ["trace.jsonl", "timetable_true.csv", "dsg_labels.csv"],
    }


def _cluster_common(args) -> dict:
    cfg = _load_scenario(args)
    trace = args.trace or str(Path(args.out) / "trace.jsonl")
    records = read_records(trace)
    journeys = vectorize_journeys(records, gap_threshold=cfg.gap_threshold,
                                  valid_stations=set(cfg.topology.stations)).journeys
    if args.method == "baseline":
        timetable = baseline_pipeline(journeys, cfg.topology)
        labeling = None
    else:
        params = _pipeline_from_config(args, cfg)
        timetable, labeling = spectral_pipeline(journeys, cfg.topology, params)
    out_dir = Path(args.out)
    timetable.write_csv(out_dir / "timetable_est.csv")
    timetable.write_headways_csv(out_dir / "headways.csv")
    if labeling is not None:
        with (out_dir / "labels.csv").open("w") as fh:
            fh.write("journey,device,journey_seq,label\n")
            for i, j in enumerate(journeys):
                fh.write(f"{i},{j.device},{j.journey_seq},{int(labeling.labels[i])}\n")
    return {
        "method": args.method,
        "n_journeys": len(journeys),
        "n_trips": len(timetable.trips),
        "outputs": ["timetable_est.csv", "headways.csv"] +
                   (["labels.csv"] if labeling is not None else []),
    }


def cmd_cluster(args) -> dict:
    return _cluster_common(args)


def cmd_timetable(args) -> dict:
    # same pipeline as `cluster`; kept as its own verb for the common case
    return _cluster_common(args)


def cmd_dsg_train(args) -> dict:
    cfg = _load_scenario(args)
    train_seeds = range(args.seed, args.seed + args.days)
    days = [build_day(cfg, seed) for seed in train_seeds]
    config = TrainConfig(min_positive_samples=args.min_positive)
    hierarchy = train_hierarchy(concat_datasets([d.dataset for d in days]), config)
    out_dir = Path(args.out)
    hierarchy.to_json(out_dir / "model.json")

    with (out_dir / "features.csv").open("w") as fh:
        fh.write("station,time,waiting_count,missed_count,wait_q3,wait_sd,headway,label\n")
        for day in days:
            ds = day.dataset
            for i in range(len(ds)):
                row = ",".join(repr(float(v)) for v in ds.X[i])
                fh.write(f"{int(ds.stations[i])},{day.event_times[i]!r},{row},"
                         f"{int(ds.y[i])}\n")
    fit = window_metrics(days, hierarchy, level="auto")
    return {
        "n_days": len(days),
        "n_samples": sum(len(d.dataset) for d in days),
        "n_station_models": len(hierarchy.stations),
        "train_fit": fit,
        "outputs": ["model.json", "features.csv"],
    }


def cmd_dsg_predict(args) -> dict:
    cfg = _load_scenario(args)
    hierarchy = ModelHierarchy.from_json(args.model)
    trace = args.trace or str(Path(args.out) / "trace.jsonl")
    records = read_records(trace)
    journeys = vectorize_journeys(records, gap_threshold=cfg.gap_threshold,
                                  valid_stations=set(cfg.topology.stations)).journeys
    params = _pipeline_from_config(args, cfg)
    timetable, _ = spectral_pipeline(journeys, cfg.topology, params)

    factors, _ = estimate_scaling(
        _gate_csv(args.gate_counts) if args.gate_counts else {},
        {k: float(v) for k, v in device_entry_counts(journeys).items()})
    theta = ThetaTable(factors)

    from .dsg import extract_features, predict
    out_dir = Path(args.out)
    n_flagged = 0
    with (out_dir / "dsg_flags.csv").open("w") as fh:
        fh.write("station,departure,probability,dsg_flag,severity\n")
        for station in sorted(timetable.stations()):
            prev = None
            for _, dep in timetable.departures_at(station):
                feats = extract_features(station, dep, prev, journeys,
                                         theta=theta.theta(station, dep),
                                         nominal_headway=cfg.headway)
                pred = predict(hierarchy, feats, station,
                               line=cfg.topology.line_id)
                n_flagged += pred.dsg_flag
                fh.write(f"{station},{dep!r},{pred.probability:.6f},"
                         f"{int(pred.dsg_flag)},{pred.severity_class}\n")
                prev = dep
    return {"n_journeys": len(journeys), "n_flagged": n_flagged,
            "outputs": ["dsg_flags.csv"]}


def _gate_csv(path: str) -> dict:
    import csv as _csv

    out = {}
    with open(path, newline="") as fh:
        for row in _csv.DictReader(fh):
            out[(int(row["station"]), int(row["time_bin"]))] = float(row["entries"])
    return out


def cmd_evaluate(args) -> dict:
    cfg = _load_scenario(args)
    pipeline = _pipeline_from_config(args, cfg)
    report = run_movement_experiment(cfg, seed=args.seed, pipeline=pipeline,
                                     eval_cfg=MovementEvalConfig())
    out_dir = Path(args.out)
    report.to_json(out_dir / "eval_report.json")
    with (out_dir / "per_station.csv").open("w") as fh:
        fh.write("method,station,hit_rate,rmse_min,n_true\n")
        for method, score in report.methods.items():
            for station, row in score.per_station.items():
                fh.write(f"{method},{station},{row['hit_rate']},"
                         f"{row['rmse_min']},{row['n_true']}\n")
    return report.as_dict() | {"outputs": ["eval_report.json", "per_station.csv"]}


def cmd_robustness(args) -> dict:
    cfg = _load_scenario(args) if args.config else None
    result = run_robustness_sweep(
        cfg,
        train_seeds=range(args.seed, args.seed + args.days),
        test_seeds=range(args.seed + 100, args.seed + 100 + args.test_days),
        config=TrainConfig(min_positive_samples=args.min_positive),
    )
    out_dir = Path(args.out)
    experiments.write_sweep_csv(result["rows"], out_dir / "robustness.csv")
    return {"rows": result["rows"], "outputs": ["robustness.csv"]}


def cmd_stream(args) -> dict:
    cfg = _load_scenario(args)
    params = _pipeline_from_config(args, cfg)
    model = ModelHierarchy.from_json(args.model) if args.model else None
    trace = args.trace or str(Path(args.out) / "trace.jsonl")
    result = stream_run(trace, args.batch_seconds, cfg.topology, params,
                        gap_threshold=cfg.gap_threshold, model=model)
    out_dir = Path(args.out)
    result.timetable.write_csv(out_dir / "timetable_stream.csv")
    with (out_dir / "incremental.csv").open("w") as fh:
        fh.write("batch,train,station,arrive_est,depart_est\n")
        for row in result.emitted:
            fh.write(f"{row.batch},{row.train},{row.station},"
                     f"{row.arrive_est!r},{row.depart_est!r}\n")
    if result.dsg_flags:
        with (out_dir / "dsg_flags_stream.csv").open("w") as fh:
            fh.write("batch,station,departure,probability,dsg_flag,severity\n")
            for fl in result.dsg_flags:
                fh.write(f"{fl.batch},{fl.station},{fl.departure!r},"
                         f"{fl.probability:.6f},{int(fl.dsg_flag)},{fl.severity_class}\n")
    return {
        "n_batches": result.n_batches,
        "n_records": result.n_records,
        "n_late_dropped": result.n_late_dropped,
        "n_trips": len(result.timetable.trips),
        "outputs": ["timetable_stream.csv", "incremental.csv"],
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="railsense",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("simulate", help="run a scenario, write trace + ground truth")
    common(p)
    p.set_defaults(func=cmd_simulate)

    for name, fn in (("cluster", cmd_cluster), ("timetable", cmd_timetable)):
        p = sub.add_parser(name, help="infer train trips from a trace")
        common(p)
        p.add_argument("--trace", help="trace file (default: <out>/trace.jsonl)")
        p.add_argument("--method", choices=["baseline", "spectral"], default="spectral")
        p.set_defaults(func=fn)

    p = sub.add_parser("dsg-train", help="train the DSG model hierarchy on simulated days")
    common(p)
    p.add_argument("--days", type=int, default=6)
    p.add_argument("--min-positive", type=int, default=30)
    p.set_defaults(func=cmd_dsg_train)

    p = sub.add_parser("dsg-predict", help="flag DSG events on a trace")
    common(p)
    p.add_argument("--model", required=True, help="model.json from dsg-train")
    p.add_argument("--trace")
    p.add_argument("--gate-counts", help="CSV station,time_bin,entries for calibration")
    p.set_defaults(func=cmd_dsg_predict)

    p = sub.add_parser("evaluate", help="baseline vs spectral movement accuracy")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("robustness", help="precision/recall vs down-sampling level")
    common(p)
    p.add_argument("--days", type=int, default=4)
    p.add_argument("--test-days", type=int, default=1)
    p.add_argument("--min-positive", type=int, default=30)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("stream", help="mini-batch replay of a trace")
    common(p)
    p.add_argument("--trace")
    p.add_argument("--batch-seconds", type=float, default=300.0)
    p.add_argument("--model", help="optional model.json for live DSG flags")
    p.set_defaults(func=cmd_stream)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = args.func(args)
        _write_summary(out_dir, {"command": args.command, "seed": args.seed, **summary})
        print(json.dumps({"status": "ok", "command": args.command,
                          "out": str(out_dir)}))
        return 0
    except Exception as exc:  # noqa: BLE001 - converted to machine-readable error
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)},
                          "trace": traceback.format_exc().splitlines()[-3:]}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
