"""File artifacts of a run: metrics/ue-stats CSVs, manifest, and trace files.

All columns are documented in docs/data_dictionary.md. Formatting is fixed
(integers and %.3f milliseconds) so identical runs produce byte-identical
files, which the manifest round-trip test relies on.
"""

from __future__ import annotations

import csv
import gzip
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError
from .model import SimConfig, load_config_dict
from .runtime import RunParams, RunResult, Trace


def out_root(explicit: str | None = None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("CBSNR_OUT", "out"))


def latency_quantiles(report, qs=(0.5, 0.95, 0.99)) -> dict:
    out = {}
    for cid, lat in report.latencies_ms_by_class().items():
        if len(lat):
            values = np.quantile(lat, qs)
            out[cid] = {f"p{int(q * 100)}": float(v) for q, v in zip(qs, values)}
        else:
            out[cid] = {f"p{int(q * 100)}": None for q in qs}
    return out


def build_manifest(result: RunResult) -> dict:
    report = result.report
    return {
        "format": "cbsnr-manifest",
        "version": __version__,
        "config_hash": result.config.config_hash(),
        "seed": result.config.seed,
        "engine": result.config.engine,
        "resolved_config": result.config.raw,
        "params": result.params.as_dict(),
        "counters": report.counters,
        "summary": {
            "eta_by_class_pct": report.eta_by_class(),
            "eta_overall_pct": report.eta_overall(),
            "latency_ms": latency_quantiles(report),
            "delivered_packets": len(report.packets),
            "dropped_packets": report.dropped_packets,
            "c_dl_run_bytes_per_slot": report.c_dl_run,
            "rho_measured": report.rho_measured,
            "max_eligible": report.max_eligible,
        },
    }


def write_metrics_csv(result: RunResult, path: Path) -> None:
    report = result.report
    slot_ms = report.slot_ms
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ue", "class", "arrival_ms", "latency_ms"])
        for ue, cid, arrival, delivered in report.packets:
            w.writerow([ue, cid, f"{arrival * slot_ms:.3f}",
                        f"{(delivered - arrival) * slot_ms:.3f}"])


def write_ue_stats_csv(result: RunResult, path: Path) -> None:
    report = result.report
    params = result.params
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ue", "class", "allowance_bytes_per_slot", "clamp_lo", "clamp_hi",
                    "eta_num_bytes", "eta_den_bytes", "eta_pct",
                    "served_bytes_per_slot"])
        etas = report.eta_per_ue()
        for uid, cid in enumerate(report.ue_class):
            eta = f"{etas[uid]:.4f}" if etas[uid] == etas[uid] else ""
            w.writerow([uid, cid, params.allowances[uid], params.lo[uid],
                        params.hi[uid], report.eta_num[uid], report.eta_den[uid],
                        eta, f"{report.served_rate_per_ue[uid]:.4f}"])


def write_trace_csv(result: RunResult, path: Path) -> None:
    trace = result.trace
    if trace is None:
        raise ValueError("run did not collect a trace")
    with gzip.open(path, "wt", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "credits", "eligible", "e_size", "grants"])
        for n in range(trace.credits.shape[0]):
            grants = ";".join(
                f"{g[1]}:{g[2]}:{g[3]}:{g[4]}:{g[5]}:{g[6]}:{g[7]}"
                for g in trace.grants[n])
            w.writerow([
                n,
                "|".join(str(c) for c in trace.credits[n]),
                "|".join(str(u) for u in trace.eligible[n]),
                int(trace.e_size[n]),
                grants,
            ])


def read_trace_csv(path: Path, num_ues: int) -> Trace:
    credits_rows = []
    eligible = []
    e_size = []
    grants = []
    with gzip.open(path, "rt", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["slot", "credits"]:
            raise ConfigError(f"{path}: not a cbsnr trace file")
        for row in reader:
            _slot, creds, elig, esz, gr = row
            credits_rows.append([int(c) for c in creds.split("|")] if creds else [])
            eligible.append(tuple(int(u) for u in elig.split("|")) if elig else ())
            e_size.append(int(esz))
            slot_grants = []
            if gr:
                for item in gr.split(";"):
                    ue, kind, rbs, mcs, tbs, served, pid = item.split(":")
                    slot_grants.append((len(e_size) - 1, int(ue), kind, int(rbs),
                                        int(mcs), int(tbs), int(served), int(pid)))
            grants.append(slot_grants)
    credits = np.asarray(credits_rows, dtype=np.int64).reshape(len(credits_rows), num_ues)
    return Trace(credits, eligible, np.asarray(e_size, dtype=np.int32), grants, None)


def write_run_outputs(result: RunResult, outdir: Path, write_trace: bool = False) -> dict:
    outdir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(result, outdir / "metrics.csv")
    write_ue_stats_csv(result, outdir / "ue_stats.csv")
    manifest = build_manifest(result)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if write_trace and result.trace is not None:
        write_trace_csv(result, outdir / "trace.csv.gz")
    return manifest


class StoredRun:
    """A run reloaded from disk: just enough surface for the trace audit."""

    def __init__(self, run_dir: Path):
        run_dir = Path(run_dir)
        manifest_path = run_dir / "manifest.json"
        if not manifest_path.exists():
            raise ConfigError(f"{run_dir}: no manifest.json")
        with open(manifest_path) as fh:
            self.manifest = json.load(fh)
        self.config: SimConfig = load_config_dict(self.manifest["resolved_config"])
        self.params = RunParams.from_dict(self.manifest["params"])
        trace_path = run_dir / "trace.csv.gz"
        if not trace_path.exists():
            raise ConfigError(f"{run_dir}: no trace.csv.gz (re-run with --trace)")
        self.trace = read_trace_csv(trace_path, self.config.num_ues)
