"""Command-line scenario runner: single runs, sweeps, and trace audits."""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import io as io_mod
from .errors import ConfigError, InvariantError
from .model import SimConfig, load_config_file
from .runtime import prepare_params, run_both_engines, run_config

_AXIS_PATHS = {
    "gate": "gate",
    "scheduler": "scheduler",
    "engine": "engine",
    "seed": "seed",
    "rho": "traffic.target_rho",
    "num_ues": "ue_template.num_ues",
}


def _parse_set(values) -> dict:
    out = {}
    for item in values or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = _AXIS_PATHS.get(key, key)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load_with_overrides(config_path: str, args) -> SimConfig:
    config = load_config_file(config_path)
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.engine in ("naive", "event"):
        overrides["engine"] = args.engine
    if args.trace:
        overrides["run.collect_trace"] = True
    if overrides:
        config = config.with_overrides(**overrides)
    return config


def cmd_run(args) -> int:
    config = _load_with_overrides(args.config, args)
    outdir = io_mod.out_root(args.out) / config.name / config.config_hash()
    if args.engine == "both":
        res_naive, res_event, problems = run_both_engines(config)
        manifest = io_mod.write_run_outputs(res_naive, outdir, write_trace=args.trace)
        if problems:
            for p in problems:
                print(f"ENGINE MISMATCH: {p}", file=sys.stderr)
            return 1
        print(f"engines agree over {config.num_slots} slots "
              f"({res_event.counters.wakeups} wake-ups, "
              f"{res_event.counters.heap_inserts} heap inserts)")
    else:
        result = run_config(config)
        manifest = io_mod.write_run_outputs(result, outdir, write_trace=args.trace)
    print(f"wrote {outdir}")
    summary = manifest["summary"]
    if summary["latency_ms"]:
        for cid, q in summary["latency_ms"].items():
            if q["p50"] is not None:
                print(f"  {cid}: p50 {q['p50']:.2f} ms  p99 {q['p99']:.2f} ms")
    return 0


def _sweep_points(scenario: dict, base: SimConfig):
    axes = scenario.get("axes", {})
    keys = [_AXIS_PATHS.get(k, k) for k in axes]
    value_lists = list(axes.values())
    if not keys:
        yield {}, base
        return
    for combo in itertools.product(*value_lists):
        overrides = dict(zip(keys, combo))
        yield overrides, base.with_overrides(**overrides)


def _run_point(point_config: SimConfig, outdir: Path, write_trace: bool) -> dict:
    result = run_config(point_config)
    return io_mod.write_run_outputs(result, outdir, write_trace=write_trace)


def cmd_sweep(args) -> int:
    path = Path(args.scenario)
    try:
        with open(path) as fh:
            scenario = json.load(fh)
    except FileNotFoundError:
        print(f"scenario not found: {path}", file=sys.stderr)
        return 2
    if "base" in scenario:
        from .model import load_config_dict
        base = load_config_dict(scenario["base"])
    elif "base_file" in scenario:
        base = load_config_file(str(path.parent / scenario["base_file"]))
    else:
        print("scenario needs 'base' or 'base_file'", file=sys.stderr)
        return 2
    name = scenario.get("name", base.name)
    root = io_mod.out_root(args.out) / name
    rows = []
    failed = 0
    for overrides, config in _sweep_points(scenario, base):
        phash = config.config_hash()
        outdir = root / phash
        row = {"point": phash, **{k: v for k, v in overrides.items()}}
        try:
            manifest = _run_point(config, outdir, args.trace)
            summary = manifest["summary"]
            row["status"] = "ok"
            row["eta_overall_pct"] = summary["eta_overall_pct"]
            for cid, eta in summary["eta_by_class_pct"].items():
                row[f"eta_{cid}_pct"] = eta
            for cid, q in summary["latency_ms"].items():
                for qk, qv in q.items():
                    row[f"lat_{cid}_{qk}_ms"] = qv
            row["delivered"] = summary["delivered_packets"]
            row["dropped"] = summary["dropped_packets"]
            row["rho_measured"] = summary["rho_measured"]
            row["max_eligible"] = summary["max_eligible"]
            for ck in ("slots", "activations", "new_grants", "wakeups",
                       "heap_inserts", "heap_comparisons", "touched_sum"):
                row[ck] = manifest["counters"].get(ck)
        except Exception as exc:  # per-point isolation: record and continue
            failed += 1
            row["status"] = "error"
            row["error"] = f"{type(exc).__name__}: {exc}"
            if args.verbose:
                traceback.print_exc()
        rows.append(row)
        print(f"[{row['status']}] {row.get('error', '')} "
              f"{json.dumps({k: v for k, v in overrides.items()})} -> {outdir}")
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    root.mkdir(parents=True, exist_ok=True)
    import csv as _csv
    with open(root / "summary.csv", "w", newline="") as fh:
        w = _csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {root / 'summary.csv'} ({len(rows)} points, {failed} failed)")
    return 1 if failed else 0


def cmd_audit(args) -> int:
    try:
        stored = io_mod.StoredRun(Path(args.run_dir))
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    report = bounds_mod.audit_trace(stored, e_max=args.e_max)
    out_path = Path(args.run_dir) / "audit.json"
    with open(out_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for warning in report["warnings"]:
        print(f"warning: {warning}")
    n_violations = len(report["violations"])
    print(f"audit: {n_violations} violations, {report['open_events']} open events, "
          f"E_max measured {report['e_max_measured']} -> {out_path}")
    return 1 if n_violations else 0


def cmd_costmodel(args) -> int:
    """Fit the cost constants from a scalability sweep and emit the curves."""
    import csv as _csv
    with open(args.summary) as fh:
        rows = [row for row in _csv.DictReader(fh) if row.get("status") == "ok"]
    naive_pts, event_pts, u_values = [], [], []
    for row in rows:
        n = float(row["slots"])
        u = int(float(row["ue_template.num_ues"]))
        grants = float(row["new_grants"]) / n
        acts = float(row["activations"]) / n
        if row["engine"] == "naive":
            cost = float(row["touched_sum"]) / n + grants + 1
            naive_pts.append((u, cost))
        else:
            cost = (float(row["wakeups"]) + float(row["activations"])
                    + float(row["new_grants"]) + float(row["heap_comparisons"])) / n + 1
            event_pts.append((u, acts, grants, cost))
            u_values.append(u)
    if not naive_pts or not event_pts:
        print("summary.csv needs both naive and event points "
              "(axes engine: [naive, event])", file=sys.stderr)
        return 2
    model, fit = bounds_mod.fit_cost_model(naive_pts, event_pts)
    envelope = [(a, g) for a in (0.5, 2, 4) for g in (4, 8, 16)]
    evaluation = bounds_mod.cost_model_eval(model, sorted(set(u_values)), envelope)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cost_curves.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        header = ["u", "naive_cost"]
        for c in evaluation["curves"]:
            header.append(f"event_cost_a{c['a_bar']}_g{c['g_bar']}")
        w.writerow(header)
        for i, u in enumerate(evaluation["u"]):
            row = [u, evaluation["naive_cost"][i]]
            row += [c["event_cost"][i] for c in evaluation["curves"]]
            w.writerow(row)
    with open(out / "cost_model.json", "w") as fh:
        json.dump({"model": model.as_dict(), "fit": fit,
                   "crossovers": [{"a_bar": c["a_bar"], "g_bar": c["g_bar"],
                                   "u_star": c["crossover"],
                                   "n_crossings": c["n_crossings"]}
                                  for c in evaluation["curves"]],
                   "measured_naive": naive_pts,
                   "measured_event": [(u, a, g, c) for u, a, g, c in event_pts]},
                  fh, indent=2)
        fh.write("\n")
    print(f"fit r2: naive {fit['r2_naive']:.4f}, event {fit['r2_event']:.4f}; "
          f"wrote {out / 'cost_curves.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cbsnr",
        description="Slot-level downlink MAC simulator with a per-UE credit gate")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario config or manifest")
    run_p.add_argument("config", help="scenario JSON (or a manifest.json to replay)")
    run_p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted paths allowed)")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--engine", choices=["naive", "event", "both"])
    run_p.add_argument("--trace", action="store_true",
                       help="record and write the per-slot trace")
    run_p.add_argument("--out", help="output root (default $CBSNR_OUT or ./out)")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a scenario grid and aggregate")
    sweep_p.add_argument("scenario", help="scenario JSON with base config and axes")
    sweep_p.add_argument("--trace", action="store_true")
    sweep_p.add_argument("--out")
    sweep_p.add_argument("--verbose", action="store_true")
    sweep_p.set_defaults(func=cmd_sweep)

    audit_p = sub.add_parser("audit", help="check a traced run against the bounds")
    audit_p.add_argument("run_dir", help="directory with manifest.json and trace.csv.gz")
    audit_p.add_argument("--e-max", type=int, default=None,
                         help="admission bound on the eligible burst "
                              "(default: measured maximum)")
    audit_p.set_defaults(func=cmd_audit)

    cm_p = sub.add_parser("costmodel",
                          help="fit scan-vs-event cost constants from a sweep summary")
    cm_p.add_argument("summary", help="summary.csv of a scalability sweep")
    cm_p.add_argument("--out", help="output directory")
    cm_p.set_defaults(func=cmd_costmodel)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
