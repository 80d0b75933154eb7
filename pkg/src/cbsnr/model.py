"""Domain types, configuration loading, and parameter derivations.

Everything the other modules share lives here: priority classes, per-UE
state, grants, the scenario configuration (read from JSON and validated
against the bundled schema), and the derivations that turn class shares
into per-slot byte allowances and credit clamps.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional

import jsonschema

from . import phy
from .errors import ConfigError

SCHEMA_VERSION = 1

GATE_DT = "DT"
GATE_PU = "PU"
GATE_NONE = "none"

ENGINE_NAIVE = "naive"
ENGINE_EVENT = "event"

SCHED_RR = "RR"
SCHED_PF = "PF"
SCHED_WPF = "WPF"


@dataclass(frozen=True)
class PriorityClass:
    """A reserved traffic class: its bandwidth share and fixed payload size."""

    id: str
    idle_slope_share: float
    payload_bytes: int

    def validate(self) -> None:
        if not 0 < self.idle_slope_share <= 1:
            raise ConfigError(f"class {self.id}: idle_slope_share must be in (0, 1]")
        if self.payload_bytes <= 0:
            raise ConfigError(f"class {self.id}: payload_bytes must be positive")


class Packet:
    """One downlink packet; ``remaining`` counts bytes not yet packed into a TB."""

    __slots__ = ("size", "arrival_slot", "remaining", "delivered_slot")

    def __init__(self, size: int, arrival_slot: int):
        self.size = size
        self.arrival_slot = arrival_slot
        self.remaining = size
        self.delivered_slot: Optional[int] = None


class Grant:
    """One slot's allocation to one UE, new transmission or HARQ retransmission."""

    __slots__ = ("ue", "slot", "kind", "rbs", "mcs", "tbs", "served", "harq_pid")
    NEW = "New"
    RETX = "Retx"

    def __init__(self, ue, slot, kind, rbs, mcs, tbs, served=0, harq_pid=-1):
        self.ue = ue
        self.slot = slot
        self.kind = kind
        self.rbs = rbs
        self.mcs = mcs
        self.tbs = tbs
        self.served = served
        self.harq_pid = harq_pid

    def as_tuple(self):
        return (self.slot, self.ue, self.kind, self.rbs, self.mcs, self.tbs,
                self.served, self.harq_pid)


class UeState:
    """Mutable per-UE simulation state shared by the gate engines.

    ``credit`` together with ``anchor_slot`` is the lazily-updated credit
    anchor of the event engine; the naive engine keeps ``anchor_slot`` equal
    to the current slot so ``credit`` is always materialized.
    """

    __slots__ = (
        "id", "cls", "cqi", "best_cqi",
        "allowance", "lo", "hi",
        "credit", "anchor_slot", "heap_gen",
        "backlog", "queue",
        "eta_num", "eta_den", "served_total",
    )

    def __init__(self, uid: int, cls: PriorityClass, cqi: int, allowance: int,
                 lo: int, hi: int, track_packets: bool):
        self.id = uid
        self.cls = cls
        self.cqi = cqi
        self.best_cqi = cqi
        self.allowance = allowance
        self.lo = lo
        self.hi = hi
        self.credit = 0
        self.anchor_slot = 0
        self.heap_gen = 0
        self.backlog = 0
        self.queue: Optional[deque] = deque() if track_packets else None
        self.eta_num = 0
        self.eta_den = 0
        self.served_total = 0


def derive_allowance(share: float, link_rate: float, slot_ms: float) -> int:
    """Per-slot credit allowance in whole bytes, floored at 1 byte/slot."""
    if share <= 0:
        raise ConfigError("idle_slope_share must be positive")
    if link_rate <= 0:
        raise ConfigError("link_rate must be positive")
    return max(1, int(share * link_rate * slot_ms / 1000.0 + 0.5))


def derive_clamps(payload_bytes: int, allowance: int, max_tbs: int,
                  burst_slots: Optional[int] = None) -> tuple[int, int]:
    """Credit clamp band: two max-payload bursts of accrual up, one max TBS down."""
    if allowance <= 0 or max_tbs <= 0:
        raise ConfigError("derive_clamps needs positive allowance and max_tbs")
    if burst_slots is None:
        burst_slots = 2 * math.ceil(payload_bytes / allowance)
    hi = burst_slots * allowance
    lo = -max_tbs
    if not lo < 0 < hi:
        raise ConfigError(f"derived clamps invalid: lo={lo}, hi={hi}")
    return lo, hi


# ---------------------------------------------------------------------------
# Configuration


_DEFAULTS = {
    "slot_ms": 1.0,
    "warmup_slots": 2000,
    "seed": 0,
    "engine": ENGINE_NAIVE,
    "harq": {"n_processes": 8, "max_retx": 3, "bler_new": 0.1,
             "bler_retx": 0.01, "rtt_slots": 4},
    "traffic": {"pkt_per_s": 450.0, "mean_on_slots": 20, "mean_off_slots": 20,
                "target_rho": None, "auto_payload_scale": False,
                "initial_backlog_bytes": 0},
    "credit": {"admission_headroom": 0.9, "burst_slots": None,
               "link_rate_override": None},
    "pf": {"beta": 0.01, "rbar_floor": 1e-6, "allow_gated": False},
    "run": {"track_packets": True, "check_invariants": None,
            "collect_trace": False, "e_max": None, "initial_credit": None},
}


def _schema():
    text = resources.files("cbsnr").joinpath("config_schema.json").read_text()
    return json.loads(text)


def _merge_defaults(raw: dict) -> dict:
    cfg = copy.deepcopy(raw)
    for key, val in _DEFAULTS.items():
        if isinstance(val, dict):
            section = dict(val)
            section.update(cfg.get(key) or {})
            cfg[key] = section
        else:
            cfg.setdefault(key, val)
    return cfg


@dataclass
class UeSpec:
    cls: PriorityClass
    cqi: int
    cqi_markov: Optional[dict] = None


@dataclass
class SimConfig:
    """Fully parsed scenario description; see config_schema.json for units."""

    name: str
    num_slots: int
    slot_ms: float
    rb_budget: int
    grant_cap: int
    gate: str
    engine: str
    scheduler: str
    warmup_slots: int
    seed: int
    classes: list[PriorityClass]
    ues: list[UeSpec]
    phy_table: list[int]
    harq: dict
    traffic: dict
    credit: dict
    pf: dict
    run: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def num_ues(self) -> int:
        return len(self.ues)

    def core_dict(self) -> dict:
        """Configuration identity without the run seed (calibration key)."""
        core = copy.deepcopy(self.raw)
        core.pop("seed", None)
        core.pop("name", None)
        return core

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def with_overrides(self, **kw) -> "SimConfig":
        raw = copy.deepcopy(self.raw)
        for key, val in kw.items():
            set_by_path(raw, key, val)
        return load_config_dict(raw)


def set_by_path(cfg: dict, dotted: str, value: Any) -> None:
    """Set ``a.b.c`` in a nested dict, creating intermediate tables."""
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {dotted}: {part} is not a table")
    node[parts[-1]] = value


def _expand_ues(cfg: dict, classes: dict[str, PriorityClass]) -> list[UeSpec]:
    if "ues" in cfg and cfg["ues"] is not None:
        out = []
        for i, entry in enumerate(cfg["ues"]):
            cid = entry["class"]
            if cid not in classes:
                raise ConfigError(f"ues[{i}].class: unknown class {cid!r}")
            out.append(UeSpec(classes[cid], entry["cqi"], entry.get("cqi_markov")))
        return out
    template = cfg.get("ue_template")
    if not template:
        raise ConfigError("config needs either 'ues' or 'ue_template'")
    groups = template["per_class"]
    total_weight = sum(g["count"] for g in groups)
    if total_weight <= 0:
        raise ConfigError("ue_template.per_class: total count must be positive")
    num = template.get("num_ues")
    if num is None:
        counts = [g["count"] for g in groups]
    else:
        counts = _proportional_counts([g["count"] for g in groups], num)
    out = []
    for g, count in zip(groups, counts):
        cid = g["class"]
        if cid not in classes:
            raise ConfigError(f"ue_template class: unknown class {cid!r}")
        for _ in range(count):
            out.append(UeSpec(classes[cid], g["cqi"], g.get("cqi_markov")))
    return out


def _proportional_counts(weights: list[int], total: int) -> list[int]:
    """Largest-remainder apportionment; at least one UE per non-zero weight."""
    wsum = sum(weights)
    shares = [total * w / wsum for w in weights]
    counts = [int(s) for s in shares]
    rema = sorted(range(len(weights)), key=lambda i: (counts[i] - shares[i], i))
    i = 0
    while sum(counts) < total:
        counts[rema[i % len(rema)]] += 1
        i += 1
    if any(c == 0 and w > 0 for c, w in zip(counts, weights)) and total >= len(weights):
        # steal from the largest group so every class is represented
        for j, (c, w) in enumerate(zip(counts, weights)):
            if c == 0 and w > 0:
                counts[max(range(len(counts)), key=counts.__getitem__)] -= 1
                counts[j] += 1
    return counts


def load_config_dict(raw: dict) -> SimConfig:
    cfg = _merge_defaults(raw)
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config key {path}: {exc.message}") from None

    classes = {}
    for entry in cfg["classes"]:
        pc = PriorityClass(entry["id"], entry["idle_slope_share"], entry["payload_bytes"])
        pc.validate()
        if pc.id in classes:
            raise ConfigError(f"duplicate class id {pc.id!r}")
        classes[pc.id] = pc
    share_sum = sum(c.idle_slope_share for c in classes.values())
    if share_sum > 1.0 + 1e-9:
        raise ConfigError(f"class idle_slope_shares sum to {share_sum:.4f} > 1")

    ues = _expand_ues(cfg, classes)
    if not ues:
        raise ConfigError("scenario has no UEs")

    if cfg.get("phy_table"):
        table = list(cfg["phy_table"])
        phy.validate_phy_table(table, "phy_table")
    elif cfg.get("phy_table_file"):
        try:
            with open(cfg["phy_table_file"]) as fh:
                table = phy.parse_phy_table(fh.read(), cfg["phy_table_file"])
        except FileNotFoundError:
            raise ConfigError(f"phy_table_file: {cfg['phy_table_file']} not found") from None
    else:
        table = phy.default_phy_table()

    config = SimConfig(
        name=cfg.get("name", "run"),
        num_slots=cfg["num_slots"],
        slot_ms=cfg["slot_ms"],
        rb_budget=cfg["rb_budget"],
        grant_cap=cfg["grant_cap"],
        gate=cfg["gate"],
        engine=cfg["engine"],
        scheduler=cfg["scheduler"],
        warmup_slots=cfg["warmup_slots"],
        seed=cfg["seed"],
        classes=list(classes.values()),
        ues=ues,
        phy_table=table,
        harq=cfg["harq"],
        traffic=cfg["traffic"],
        credit=cfg["credit"],
        pf=cfg["pf"],
        run=cfg["run"],
        raw=cfg,
    )
    _validate_combination(config)
    return config


def _validate_combination(config: SimConfig) -> None:
    if config.grant_cap < 1:
        raise ConfigError("grant_cap must be >= 1")
    if config.engine == ENGINE_EVENT:
        if config.gate not in (GATE_DT, GATE_PU):
            raise ConfigError("engine 'event' requires gate DT or PU")
        if config.scheduler != SCHED_RR:
            raise ConfigError("engine 'event' requires the RR scheduler")
    if config.scheduler in (SCHED_PF, SCHED_WPF) and config.gate != GATE_NONE:
        if not config.pf.get("allow_gated"):
            raise ConfigError(
                "gated PF/WPF is experimental; set pf.allow_gated=true to enable")
    for i, ue in enumerate(config.ues):
        if not 1 <= ue.cqi <= phy.NUM_MCS:
            raise ConfigError(f"ue[{i}].cqi out of range 1..{phy.NUM_MCS}")
        if ue.cqi_markov:
            mk = ue.cqi_markov
            for key in ("cqi_good", "cqi_bad"):
                if not 1 <= mk[key] <= phy.NUM_MCS:
                    raise ConfigError(f"ue[{i}].cqi_markov.{key} out of range")
            if mk["cqi_bad"] > mk["cqi_good"]:
                raise ConfigError(f"ue[{i}].cqi_markov: cqi_bad must be <= cqi_good")
    if config.traffic["mean_on_slots"] < 1:
        raise ConfigError("traffic.mean_on_slots must be >= 1")
    if config.traffic["mean_off_slots"] < 0:
        raise ConfigError("traffic.mean_off_slots must be >= 0")


def load_config_file(path: str) -> SimConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if "resolved_config" in raw:  # a manifest; replay the embedded config
        return load_config_dict(raw["resolved_config"])
    return load_config_dict(raw)
