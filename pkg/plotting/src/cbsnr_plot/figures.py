"""The four figure kinds rendered from simulator artifacts.

Figures are deterministic: fixed size, dpi, class colors, and axes
ordering, so golden-image comparison is meaningful. Every renderer
validates its inputs through :mod:`cbsnr_plot.contracts` and refuses to
draw an empty panel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import contracts
from .contracts import ContractError

CLASS_COLORS = {"p1": "#d62728", "p2": "#ff7f0e", "p3": "#1f77b4"}
FALLBACK_COLORS = ["#2ca02c", "#9467bd", "#8c564b", "#e377c2"]
LINE_STYLES = ["-", "--", "-.", ":"]
FIGSIZE = (7.0, 4.4)
DPI = 110

FIGURE_KINDS = ("latency_cdf", "credit_trace", "utilization_bars", "scalability")


@dataclass
class FigureSpec:
    """What to draw: a figure kind, its input run directories, and filters."""

    kind: str
    inputs: list[Path]
    output: Path
    classes: list[str] | None = None
    ues: list[int] | None = None
    slots: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ContractError(
                f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}")
        if not self.inputs:
            raise ContractError("figure needs at least one input directory")
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)


def class_color(cid: str, index: int = 0) -> str:
    return CLASS_COLORS.get(cid, FALLBACK_COLORS[index % len(FALLBACK_COLORS)])


def _ordered_classes(available, wanted):
    order = sorted(available)
    if wanted:
        missing = [c for c in wanted if c not in available]
        if missing:
            raise ContractError(f"class filter {missing} not present in the data")
        order = [c for c in order if c in wanted]
    return order


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3, linewidth=0.5)
    return fig, ax


def _save(fig, output: Path) -> Path:
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output)
    plt.close(fig)
    return output


def plot_latency_cdf(spec: FigureSpec) -> Path:
    """Per-class empirical latency CDFs, one line style per run.

    When a run directory carries an audit report, the per-class worst-case
    cycle bound is overlaid as a vertical marker in the class color.
    """
    fig, ax = _new_axes("Downlink packet latency", "latency (ms)", "empirical CDF")
    drew = False
    for run_idx, run_dir in enumerate(spec.inputs):
        manifest = contracts.read_manifest(run_dir)
        label = contracts.run_label(manifest)
        lat = contracts.read_latencies(run_dir)
        style = LINE_STYLES[run_idx % len(LINE_STYLES)]
        for cls_idx, cid in enumerate(_ordered_classes(lat, spec.classes)):
            samples = np.sort(lat[cid])
            if not len(samples):
                continue
            cdf = np.arange(1, len(samples) + 1) / len(samples)
            ax.plot(samples, cdf, style, color=class_color(cid, cls_idx),
                    linewidth=1.3, label=f"{cid} {label}")
            drew = True
        audit = contracts.read_audit(run_dir)
        if audit:
            slot_ms = manifest["resolved_config"].get("slot_ms", 1.0)
            ue_class = [u["class"] for u in contracts.read_ue_stats(run_dir)]
            cycles = audit["bounds"]["w_cycle_slots"]
            per_class: dict[str, int] = {}
            for cid, w in zip(ue_class, cycles):
                per_class[cid] = max(per_class.get(cid, 0), w)
            for cls_idx, cid in enumerate(_ordered_classes(per_class, spec.classes)):
                ax.axvline(per_class[cid] * slot_ms, color=class_color(cid, cls_idx),
                           linestyle=":", linewidth=1.0, alpha=0.9)
                ax.text(per_class[cid] * slot_ms, 0.02, f"{cid} cycle bound",
                        rotation=90, fontsize=7, color=class_color(cid, cls_idx),
                        va="bottom", ha="right")
    if not drew:
        raise ContractError("latency CDF would be empty: no delivered packets")
    ax.set_xscale("log")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7, loc="lower right")
    return _save(fig, spec.output)


def plot_credit_trace(spec: FigureSpec) -> Path:
    """Credit evolution of selected UEs, runs overlaid (e.g. DT vs PU)."""
    fig, ax = _new_axes("Credit evolution", "slot", "credit (bytes)")
    drew = False
    for run_idx, run_dir in enumerate(spec.inputs):
        manifest = contracts.read_manifest(run_dir)
        label = contracts.run_label(manifest)
        credits = contracts.read_credit_trace(run_dir)
        ue_class = [u["class"] for u in contracts.read_ue_stats(run_dir)]
        if spec.ues:
            ues = spec.ues
            bad = [u for u in ues if not 0 <= u < credits.shape[1]]
            if bad:
                raise ContractError(f"UE filter {bad} outside 0..{credits.shape[1] - 1}")
        else:
            ues = []
            seen = set()
            for uid, cid in enumerate(ue_class):  # first UE of each class
                if cid not in seen:
                    seen.add(cid)
                    ues.append(uid)
        lo_slot, hi_slot = spec.slots or (0, credits.shape[0])
        window = credits[lo_slot:hi_slot]
        if not window.size:
            raise ContractError("credit trace window is empty")
        style = LINE_STYLES[run_idx % len(LINE_STYLES)]
        for cls_idx, uid in enumerate(ues):
            cid = ue_class[uid] if uid < len(ue_class) else f"ue{uid}"
            ax.step(np.arange(lo_slot, hi_slot), window[:, uid], style,
                    where="post", color=class_color(cid, cls_idx), linewidth=1.1,
                    label=f"{cid} ue{uid} {label}")
            drew = True
    if not drew:
        raise ContractError("credit trace would be empty")
    ax.axhline(0, color="black", linewidth=0.8)
    ax.legend(fontsize=7, loc="lower right")
    return _save(fig, spec.output)


def plot_utilization_bars(spec: FigureSpec) -> Path:
    """Per-UE grant utilization, one bar group per UE, one bar per run."""
    fig, ax = _new_axes("Grant utilization", "UE", "utilization (%)")
    runs = []
    for run_dir in spec.inputs:
        manifest = contracts.read_manifest(run_dir)
        runs.append((contracts.run_label(manifest), contracts.read_ue_stats(run_dir)))
    if not runs:
        raise ContractError("utilization figure needs at least one run")
    num_ues = len(runs[0][1])
    if num_ues == 0:
        raise ContractError("ue_stats.csv holds no UEs")
    if any(len(stats) != num_ues for _lbl, stats in runs):
        raise ContractError("runs disagree on the UE population")
    width = 0.8 / len(runs)
    xs = np.arange(num_ues)
    hatches = [None, "//", "..", "xx"]
    for i, (label, stats) in enumerate(runs):
        values = [row["eta_pct"] for row in stats]
        offset = (i - (len(runs) - 1) / 2) * width
        colors = [class_color(row["class"], idx) for idx, row in enumerate(stats)]
        ax.bar(xs + offset, values, width=width * 0.92, color=colors,
               edgecolor="black", linewidth=0.4,
               hatch=hatches[i % len(hatches)], label=label)
    ax.set_xticks(xs)
    ax.set_xticklabels([f"ue{row['ue']}\n{row['class']}" for row in runs[0][1]],
                       fontsize=7)
    ax.set_ylim(0, 105)
    ax.legend(fontsize=7, loc="lower right")
    return _save(fig, spec.output)


def plot_scalability(spec: FigureSpec) -> Path:
    """Naive vs event per-slot cost over the UE count, with the model envelope."""
    out_dir = spec.inputs[0]
    u, naive, events = contracts.read_cost_curves(out_dir)
    fig, ax = _new_axes("Per-slot cost vs UE count", "UEs", "cost (ops/slot)")
    band = np.vstack(list(events.values()))
    ax.fill_between(u, band.min(axis=0), band.max(axis=0), alpha=0.25,
                    color="#1f77b4", label="event model envelope")
    ax.plot(u, naive, "-", color="#d62728", linewidth=1.4, label="scan model")
    model = contracts.read_cost_model(out_dir)
    if model:
        mu = [p[0] for p in model["measured_naive"]]
        mc = [p[1] for p in model["measured_naive"]]
        ax.plot(mu, mc, "s", color="#d62728", markersize=4, label="scan measured")
        eu = [p[0] for p in model["measured_event"]]
        ec = [p[3] for p in model["measured_event"]]
        ax.plot(eu, ec, "o", color="#1f77b4", markersize=4, label="event measured")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.legend(fontsize=7, loc="upper left")
    return _save(fig, spec.output)


_RENDERERS = {
    "latency_cdf": plot_latency_cdf,
    "credit_trace": plot_credit_trace,
    "utilization_bars": plot_utilization_bars,
    "scalability": plot_scalability,
}


def plot(spec: FigureSpec) -> Path:
    """Render one figure; returns the written image path."""
    return _RENDERERS[spec.kind](spec)
