"""Readers for the simulator's file contracts.

Each reader validates the columns it needs before anything is plotted and
raises :class:`ContractError` naming the file and the offending column, so
a figure never renders silently from a malformed or foreign CSV.
"""

from __future__ import annotations

import csv
import gzip
import json
from pathlib import Path

import numpy as np


class ContractError(ValueError):
    """An input file does not match the documented data dictionary."""


METRICS_COLUMNS = ["ue", "class", "arrival_ms", "latency_ms"]
UE_STATS_COLUMNS = ["ue", "class", "allowance_bytes_per_slot", "clamp_lo", "clamp_hi",
                    "eta_num_bytes", "eta_den_bytes", "eta_pct", "served_bytes_per_slot"]
TRACE_COLUMNS = ["slot", "credits", "eligible", "e_size", "grants"]


def _check_columns(path: Path, have, need) -> None:
    missing = [c for c in need if c not in have]
    if missing:
        raise ContractError(f"{path}: missing column(s) {', '.join(missing)}")


def _open_rows(path: Path, need):
    if not path.exists():
        raise ContractError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_columns(path, reader.fieldnames or [], need)
        return list(reader)


def read_manifest(run_dir: Path) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise ContractError(f"{path}: file not found")
    with open(path) as fh:
        manifest = json.load(fh)
    for key in ("resolved_config", "summary", "params"):
        if key not in manifest:
            raise ContractError(f"{path}: missing key {key!r}")
    return manifest


def run_label(manifest: dict) -> str:
    cfg = manifest["resolved_config"]
    gate = cfg.get("gate", "none")
    sched = cfg.get("scheduler", "?")
    return sched if gate == "none" else f"{sched}+{gate}"


def read_latencies(run_dir: Path) -> dict[str, np.ndarray]:
    """Per-class latency samples (ms) from metrics.csv."""
    rows = _open_rows(Path(run_dir) / "metrics.csv", METRICS_COLUMNS)
    out: dict[str, list[float]] = {}
    for row in rows:
        out.setdefault(row["class"], []).append(float(row["latency_ms"]))
    return {cid: np.asarray(v) for cid, v in out.items()}


def read_ue_stats(run_dir: Path) -> list[dict]:
    rows = _open_rows(Path(run_dir) / "ue_stats.csv", UE_STATS_COLUMNS)
    for row in rows:
        row["ue"] = int(row["ue"])
        row["eta_pct"] = float(row["eta_pct"]) if row["eta_pct"] else float("nan")
    return rows


def read_audit(run_dir: Path) -> dict | None:
    path = Path(run_dir) / "audit.json"
    if not path.exists():
        return None
    with open(path) as fh:
        audit = json.load(fh)
    if "bounds" not in audit or "w_cycle_slots" not in audit["bounds"]:
        raise ContractError(f"{path}: missing bounds.w_cycle_slots")
    return audit


def read_credit_trace(run_dir: Path) -> np.ndarray:
    """Boundary credits [slots, ues] from trace.csv.gz."""
    path = Path(run_dir) / "trace.csv.gz"
    if not path.exists():
        raise ContractError(f"{path}: file not found (run with --trace)")
    rows = []
    with gzip.open(path, "rt", newline="") as fh:
        reader = csv.DictReader(fh)
        _check_columns(path, reader.fieldnames or [], TRACE_COLUMNS)
        for row in reader:
            rows.append([int(c) for c in row["credits"].split("|")])
    if not rows:
        raise ContractError(f"{path}: trace is empty")
    return np.asarray(rows, dtype=np.int64)


def read_cost_curves(out_dir: Path):
    """(u, naive, {column: event curve}) from cost_curves.csv."""
    path = Path(out_dir) / "cost_curves.csv"
    if not path.exists():
        raise ContractError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        _check_columns(path, cols, ["u", "naive_cost"])
        event_cols = [c for c in cols if c.startswith("event_cost_")]
        if not event_cols:
            raise ContractError(f"{path}: no event_cost_* columns")
        rows = list(reader)
    u = np.asarray([float(r["u"]) for r in rows])
    naive = np.asarray([float(r["naive_cost"]) for r in rows])
    events = {c: np.asarray([float(r[c]) for r in rows]) for c in event_cols}
    return u, naive, events


def read_cost_model(out_dir: Path) -> dict | None:
    path = Path(out_dir) / "cost_model.json"
    if not path.exists():
        return None
    with open(path) as fh:
        model = json.load(fh)
    if "measured_naive" not in model or "measured_event" not in model:
        raise ContractError(f"{path}: missing measured point lists")
    return model
