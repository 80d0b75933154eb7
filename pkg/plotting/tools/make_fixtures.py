#!/usr/bin/env python3
"""Regenerate the shipped test fixtures from the simulator package.

Needs the `cbsnr` package installed (development convenience only; the
plotting tests themselves consume the checked-in fixture files and do not
import the simulator).
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

from cbsnr import bounds as cbsnr_bounds
from cbsnr import io as cbsnr_io
from cbsnr.cli import main as cbsnr_main
from cbsnr.model import load_config_file
from cbsnr.runtime import run_config

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
SCENARIOS = Path(__file__).resolve().parent.parent.parent / "scenarios"


def run_to(dirname: str, scenario: str, trace: bool = False, audit: bool = False,
           **overrides):
    config = load_config_file(str(SCENARIOS / scenario))
    if overrides:
        config = config.with_overrides(**overrides)
    result = run_config(config)
    outdir = FIXTURES / dirname
    if outdir.exists():
        shutil.rmtree(outdir)
    cbsnr_io.write_run_outputs(result, outdir, write_trace=trace)
    if audit:
        report = cbsnr_bounds.audit_trace(result)
        with open(outdir / "audit.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"wrote {outdir}")


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    lat = {"num_slots": 12000, "seed": 3}
    run_to("lat_dt", "latency_overload.json", gate="DT", audit=True,
           **{"run.collect_trace": True, **lat})
    run_to("lat_pu", "latency_overload.json", gate="PU", **lat)
    run_to("lat_pf", "latency_overload.json", gate="none", scheduler="PF", **lat)
    run_to("lat_wpf", "latency_overload.json", gate="none", scheduler="WPF", **lat)

    trace = {"num_slots": 600, "seed": 7, "run.collect_trace": True,
             "warmup_slots": 0}
    run_to("trace_dt", "credit_trace.json", gate="DT", trace=True, **trace)
    run_to("trace_pu", "credit_trace.json", gate="PU", trace=True, **trace)

    util = {"num_slots": 8000, "seed": 1}
    run_to("util_rr", "utilization_low_load.json", gate="none", **util)
    run_to("util_dt", "utilization_low_load.json", gate="DT", **util)
    run_to("util_pu", "utilization_low_load.json", gate="PU", **util)

    # scalability: a small two-engine sweep, then the cost-model fit
    sweep = {
        "name": "scale_fixture",
        "base": json.loads((SCENARIOS / "scalability_point.json").read_text()),
        "axes": {"ue_template.num_ues": [8, 16, 32, 64, 128, 256],
                 "engine": ["naive", "event"]},
    }
    sweep["base"]["num_slots"] = 4000
    tmp = FIXTURES / "_sweep"
    tmp.mkdir(exist_ok=True)
    spath = tmp / "scale.json"
    spath.write_text(json.dumps(sweep))
    assert cbsnr_main(["sweep", str(spath), "--out", str(tmp)]) == 0
    scale_dir = FIXTURES / "scalability"
    if scale_dir.exists():
        shutil.rmtree(scale_dir)
    scale_dir.mkdir()
    assert cbsnr_main(["costmodel", str(tmp / "scale_fixture" / "summary.csv"),
                       "--out", str(scale_dir)]) == 0
    shutil.rmtree(tmp)
    print(f"wrote {scale_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
