"""Slot-by-slot simulation driver.

Every slot runs the same phase order in both engines: HARQ feedback, gate
wake-ups, retransmission allocation, eligible-set sync, new-grant selection,
RB allocation and queue service, credit updates, then arrivals (a packet
arriving in slot n is first servable in slot n+1). Metrics, traces, and the
run manifest are produced here.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import traffic as traffic_mod
from .engine import (
    EventCounters,
    EventGateBackend,
    NaiveGateBackend,
    reconstruct_credits,
)
from .errors import ConfigError, InvariantError
from .gate import DebitVariant
from .model import (
    ENGINE_EVENT,
    GATE_NONE,
    Grant,
    Packet,
    SCHED_PF,
    SCHED_RR,
    SCHED_WPF,
    SimConfig,
    UeState,
    derive_allowance,
    derive_clamps,
)
from .phy import HarqManager
from .schedulers import PfState, allocate_rbs, pf_select, rr_select, wpf_select

_RNG_SALT = 0x5EED_CB5


@dataclass
class RunParams:
    """Derived per-run quantities fixed before the slot loop starts."""

    link_rate: Optional[float]      # bytes/s reference behind the allowances
    c_dl: Optional[float]           # calibrated cell capacity, bytes/slot
    c_res: Optional[float]          # residual new-transmission capacity, bytes/slot
    q_scale: float
    payload_scale: int
    allowances: list[int]
    lo: list[int]
    hi: list[int]
    d_max: list[int]                # per-UE max debit (best CQI over the full budget)

    def as_dict(self) -> dict:
        return {
            "link_rate_bytes_per_s": self.link_rate,
            "c_dl_bytes_per_slot": self.c_dl,
            "c_res_bytes_per_slot": self.c_res,
            "q_scale": self.q_scale,
            "payload_scale": self.payload_scale,
            "allowances": self.allowances,
            "clamp_lo": self.lo,
            "clamp_hi": self.hi,
            "d_max": self.d_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunParams":
        return cls(d["link_rate_bytes_per_s"], d["c_dl_bytes_per_slot"],
                   d["c_res_bytes_per_slot"], d["q_scale"], d["payload_scale"],
                   list(d["allowances"]), list(d["clamp_lo"]), list(d["clamp_hi"]),
                   list(d["d_max"]))


@dataclass
class Trace:
    """Per-slot observables of one run (optional; sized [num_slots, ...])."""

    credits: np.ndarray                 # boundary credits entering slot n+1
    eligible: list[tuple[int, ...]]     # gated eligible set at the grant phase
    e_size: np.ndarray
    grants: list[list[tuple]]           # Grant.as_tuple() per slot
    arrivals: np.ndarray                # bool [num_slots, num_ues]


@dataclass
class MetricsReport:
    """Aggregate observables of one run; the CSV emitters read from here."""

    num_slots: int
    warmup_slots: int
    slot_ms: float
    class_ids: list[str]
    ue_class: list[str]
    packets: list[tuple[int, str, int, int]]        # (ue, class, arrival, delivered)
    dropped_packets: int
    dropped_bytes: int
    eta_num: list[int]
    eta_den: list[int]
    counters: dict
    served_rate_per_ue: list[float]                  # bytes/slot post warm-up
    c_dl_run: float
    rho_measured: Optional[float]
    max_eligible: int

    def eta_per_ue(self) -> list[float]:
        return [100.0 * n / d if d else float("nan")
                for n, d in zip(self.eta_num, self.eta_den)]

    def eta_by_class(self) -> dict[str, float]:
        out = {}
        for cid in self.class_ids:
            num = sum(n for n, c in zip(self.eta_num, self.ue_class) if c == cid)
            den = sum(d for d, c in zip(self.eta_den, self.ue_class) if c == cid)
            out[cid] = 100.0 * num / den if den else float("nan")
        return out

    def eta_overall(self) -> float:
        num, den = sum(self.eta_num), sum(self.eta_den)
        return 100.0 * num / den if den else float("nan")

    def latencies_ms_by_class(self) -> dict[str, np.ndarray]:
        out = {cid: [] for cid in self.class_ids}
        for _ue, cid, arrival, delivered in self.packets:
            out[cid].append((delivered - arrival) * self.slot_ms)
        return {cid: np.asarray(v, dtype=np.float64) for cid, v in out.items()}

    def core_identity(self) -> dict:
        """The engine-independent fields two equivalent runs must agree on."""
        return {
            "packets": self.packets,
            "dropped_packets": self.dropped_packets,
            "eta_num": self.eta_num,
            "eta_den": self.eta_den,
            "A": self.counters["activations"],
            "G": self.counters["new_grants"],
            "N": self.counters["slots"],
        }


@dataclass
class RunResult:
    config: SimConfig
    params: RunParams
    report: MetricsReport
    counters: EventCounters
    grant_log: list[tuple]
    trace: Optional[Trace] = None
    anchors: object = None

    def credit_matrix(self) -> np.ndarray:
        """Boundary credits [num_slots, num_ues], engine-independent."""
        if self.trace is not None and self.trace.credits is not None:
            return self.trace.credits
        if self.anchors is None:
            raise ValueError("run collected neither a trace nor anchors")
        return reconstruct_credits(self.anchors, self.config.num_slots,
                                   self.config.num_ues, self.params.allowances,
                                   self.params.hi)


# ---------------------------------------------------------------------------
# Calibration and parameter derivation

_capacity_cache: dict[str, float] = {}


def _capacity_key(config: SimConfig) -> str:
    ident = {
        "rb_budget": config.rb_budget,
        "grant_cap": config.grant_cap,
        "slot_ms": config.slot_ms,
        "scheduler": config.scheduler,
        "phy_table": config.phy_table,
        "harq": config.harq,
        "ues": [(ue.cls.id, ue.cqi, ue.cqi_markov) for ue in config.ues],
        "pf": {k: config.pf[k] for k in ("beta", "rbar_floor")},
    }
    return hashlib.sha256(json.dumps(ident, sort_keys=True).encode()).hexdigest()


def measure_capacity(config: SimConfig, slots: int = 3500, warmup: int = 500) -> float:
    """Saturated, gate-less pre-run measuring the served-rate capacity (bytes/slot)."""
    key = _capacity_key(config)
    if key in _capacity_cache:
        return _capacity_cache[key]
    seed = int(key[:12], 16)
    calib = config.with_overrides(**{
        "gate": GATE_NONE,
        "engine": "naive",
        "num_slots": slots,
        "warmup_slots": warmup,
        "seed": seed,
        "traffic.pkt_per_s": 0.0,
        "traffic.target_rho": None,
        "traffic.initial_backlog_bytes": 1 << 40,
        "run.track_packets": False,
        "run.check_invariants": False,
        "run.collect_trace": False,
    })
    params = RunParams(None, None, None, 1.0, 1,
                       [1] * calib.num_ues, [-1] * calib.num_ues,
                       [1] * calib.num_ues, [1] * calib.num_ues)
    result = Simulator(calib, params).run()
    c_dl = result.report.c_dl_run
    _capacity_cache[key] = c_dl
    return c_dl


def prepare_params(config: SimConfig) -> RunParams:
    """Calibrate capacity if needed and derive allowances, clamps, and load scaling."""
    override = config.credit["link_rate_override"]
    needs_capacity = (config.traffic["target_rho"] is not None
                      or (config.gate != GATE_NONE and override is None))
    c_dl = measure_capacity(config) if needs_capacity else None
    c_res = c_dl

    slot_ms = config.slot_ms
    if override is not None:
        link_rate = float(override)
    elif config.gate != GATE_NONE or c_dl is not None:
        share_sum = sum(ue.cls.idle_slope_share for ue in config.ues)
        c_res_rate = c_res * 1000.0 / slot_ms
        link_rate = config.credit["admission_headroom"] * c_res_rate / share_sum
    else:
        link_rate = None

    num = config.num_ues
    if link_rate is not None:
        allowances = [derive_allowance(ue.cls.idle_slope_share, link_rate, slot_ms)
                      for ue in config.ues]
    else:
        allowances = [1] * num

    if c_res is not None and config.gate != GATE_NONE:
        total = sum(allowances)
        if total > c_res + 1e-6:
            raise ConfigError(
                f"admission violated: sum of allowances {total} B/slot exceeds "
                f"calibrated residual capacity {c_res:.1f} B/slot")

    best_cqi = [ue.cqi_markov["cqi_good"] if ue.cqi_markov else ue.cqi
                for ue in config.ues]
    d_max = [config.phy_table[cqi - 1] * max(1, config.rb_budget) for cqi in best_cqi]
    burst = config.credit["burst_slots"]
    lo, hi = [], []
    for ue, allowance, dmax in zip(config.ues, allowances, d_max):
        lo_u, hi_u = derive_clamps(ue.cls.payload_bytes, allowance, dmax, burst)
        lo.append(lo_u)
        hi.append(hi_u)

    q_scale, payload_scale = traffic_mod.calibrate_load(config, c_dl) \
        if config.traffic["target_rho"] is not None else (1.0, 1)
    return RunParams(link_rate, c_dl, c_res, q_scale, payload_scale,
                     allowances, lo, hi, d_max)


# ---------------------------------------------------------------------------
# The simulator


def _spawn_rngs(seed: int, num_ues: int):
    root = np.random.SeedSequence([_RNG_SALT, seed])
    per_ue = root.spawn(num_ues)
    dwell, emit, bler, cqi = [], [], [], []
    for ss in per_ue:
        d, e, b, c = ss.spawn(4)
        dwell.append(np.random.Generator(np.random.PCG64(d)))
        emit.append(np.random.Generator(np.random.PCG64(e)))
        bler.append(np.random.Generator(np.random.PCG64(b)))
        cqi.append(np.random.Generator(np.random.PCG64(c)))
    return dwell, emit, bler, cqi


def _cqi_series(ue_spec, rng, n_slots: int) -> np.ndarray:
    """Two-state CQI chain pregenerated as geometric dwell segments."""
    mk = ue_spec.cqi_markov
    out = np.empty(n_slots, dtype=np.int8)
    p_gb, p_bg = mk["p_good_to_bad"], mk["p_bad_to_good"]
    denom = p_gb + p_bg
    p_good = 0.5 if denom == 0 else p_bg / denom
    good = bool(rng.random() < p_good)
    pos = 0
    while pos < n_slots:
        p_exit = p_gb if good else p_bg
        length = int(rng.geometric(p_exit)) if p_exit > 0 else n_slots - pos
        length = min(length, n_slots - pos)
        out[pos:pos + length] = mk["cqi_good"] if good else mk["cqi_bad"]
        pos += length
        good = not good
    return out


class Simulator:
    """One deterministic run of the cell; single-threaded, no shared state."""

    def __init__(self, config: SimConfig, params: RunParams):
        self.config = config
        self.params = params
        self.n_slots = config.num_slots
        self.warmup = min(config.warmup_slots, config.num_slots)
        self.track_packets = config.run["track_packets"]
        check = config.run["check_invariants"]
        self.check = (config.num_slots <= 20_000) if check is None else check
        self.collect_trace = config.run["collect_trace"]

        num = config.num_ues
        dwell, emit, bler, cqi_rngs = _spawn_rngs(config.seed, num)
        self.harq = HarqManager(num, config.harq["n_processes"], config.harq["max_retx"],
                                config.harq["rtt_slots"], config.harq["bler_new"],
                                config.harq["bler_retx"], bler)
        self.counters = EventCounters()

        self.ues = []
        init_credit = config.run["initial_credit"]
        for uid, spec in enumerate(config.ues):
            ue = UeState(uid, spec.cls, spec.cqi, params.allowances[uid],
                         params.lo[uid], params.hi[uid], self.track_packets)
            if init_credit is not None:
                ue.credit = init_credit
            self.ues.append(ue)

        self.cqi_series = None
        if any(spec.cqi_markov for spec in config.ues):
            self.cqi_series = [
                _cqi_series(spec, cqi_rngs[uid], self.n_slots) if spec.cqi_markov else None
                for uid, spec in enumerate(config.ues)]

        sources = traffic_mod.build_sources(config, params, dwell, emit)
        self.payloads = [src.payload for src in sources]
        masks = [src.arrivals(self.n_slots) for src in sources]
        self.arrival_mask = np.stack(masks, axis=1) if masks else np.zeros((self.n_slots, 0), bool)
        flat = np.flatnonzero(self.arrival_mask.ravel())
        self.arr_slots = (flat // max(1, num)).astype(np.int64)
        self.arr_ues = (flat % max(1, num)).astype(np.int64)

        self.gated = config.gate != GATE_NONE
        variant = DebitVariant(config.gate) if self.gated else None
        if config.engine == ENGINE_EVENT:
            self.backend = EventGateBackend(self.ues, self.harq, variant, self.counters,
                                            collect_anchors=True)
        else:
            self.backend = NaiveGateBackend(self.ues, self.harq, variant, self.counters)
        self.use_ring = config.scheduler == SCHED_RR

        self.pf = None
        if config.scheduler in (SCHED_PF, SCHED_WPF):
            self.pf = PfState(num, config.pf["beta"], config.pf["rbar_floor"])
            self.weights = np.asarray([ue.cls.idle_slope_share for ue in self.ues])

        self._preload_queues()

    def _preload_queues(self) -> None:
        self._preload_bytes = 0
        preload = self.config.traffic["initial_backlog_bytes"]
        if preload <= 0:
            return
        for ue in self.ues:
            size = self.payloads[ue.id]
            if self.track_packets:
                count = max(1, math.ceil(preload / size))
                for _ in range(count):
                    ue.queue.append(Packet(size, 0))
                ue.backlog = count * size
            else:
                ue.backlog = preload
            self._preload_bytes += ue.backlog
            self.backend.on_activation(ue, -1)

    # -- queue service

    def _serve(self, ue: UeState, tbs: int):
        backlog = ue.backlog
        take = tbs if tbs < backlog else backlog
        if not self.track_packets:
            ue.backlog = backlog - take
            return take, None
        final = None
        remaining = take
        q = ue.queue
        while remaining > 0:
            pkt = q[0]
            if pkt.remaining <= remaining:
                remaining -= pkt.remaining
                pkt.remaining = 0
                q.popleft()
                if final is None:
                    final = []
                final.append(pkt)
            else:
                pkt.remaining -= remaining
                remaining = 0
        ue.backlog = backlog - take
        return take, final

    # -- main loop

    def run(self) -> RunResult:
        cfg = self.config
        n_slots = self.n_slots
        num = cfg.num_ues
        warmup = self.warmup
        harq = self.harq
        backend = self.backend
        counters = self.counters
        ues = self.ues
        table = cfg.phy_table
        rb_budget = cfg.rb_budget
        k_cap = cfg.grant_cap
        track_packets = self.track_packets

        grant_log: list[tuple] = []
        packets_out: list[tuple[int, str, int, int]] = []
        dropped_packets = 0
        dropped_bytes = 0
        arrived_bytes = 0
        delivered_bytes = 0
        served_postwarmup = 0
        arrived_postwarmup = 0

        trace_credits = np.empty((n_slots, num), dtype=np.int64) if self.collect_trace else None
        trace_eligible: list[tuple[int, ...]] = [] if self.collect_trace else None
        trace_esize = np.zeros(n_slots, dtype=np.int32) if self.collect_trace else None
        trace_grants: list[list[tuple]] = [] if self.collect_trace else None

        arr_slots = self.arr_slots
        arr_ues = self.arr_ues
        aptr = 0
        n_arr = len(arr_slots)
        payloads = self.payloads
        cqi_series = self.cqi_series
        cqis = [ue.cqi for ue in ues]

        for n in range(n_slots):
            if cqi_series is not None:
                for ue in ues:
                    series = cqi_series[ue.id]
                    if series is not None:
                        ue.cqi = int(series[n])
                        cqis[ue.id] = ue.cqi

            # (i) HARQ feedback; the statistics window is delivery-time based
            # (under overload, packets arriving after warm-up may only
            # complete beyond the horizon, so arrival filtering would starve
            # the sample)
            in_window = n >= warmup
            for ev in harq.process_feedback(n):
                ue = ues[ev.ue]
                if ev.ack:
                    delivered_bytes += ev.delivered_payload
                    if track_packets and ev.final_packets:
                        for pkt in ev.final_packets:
                            pkt.delivered_slot = n
                            if in_window:
                                packets_out.append(
                                    (ue.id, ue.cls.id, pkt.arrival_slot, n))
                else:
                    if ev.freed:
                        dropped_bytes += ev.dropped_payload
                        if track_packets and ev.final_packets and in_window:
                            dropped_packets += len(ev.final_packets)
                if ev.freed:
                    backend.on_harq_freed(ue, n)

            # (ii) gate wake-ups
            backend.begin_slot(n)

            # (iii) HARQ retransmissions first
            retx_grants, residual, retx_ues = harq.schedule_retx(n, rb_budget)
            for uid, pid, rbs, mcs, tbs in retx_grants:
                grant_log.append((n, uid, Grant.RETX, rbs, mcs, tbs, 0, pid))

            # (iv) eligible-set sync and new-grant selection
            backend.pre_select(n)
            if self.check:
                self._check_membership(n)
            candidates = None
            elig_snapshot = None
            if self.use_ring:
                ring = backend.ring
                skipped = sum(1 for u in retx_ues if u in ring) if retx_ues else 0
                counters.retx_skips += skipped
                e_size = len(ring) - skipped
                if trace_credits is not None:  # before grants mutate the ring
                    elig_snapshot = tuple(sorted(
                        u for u in ring.members_set() if u not in retx_ues))
                selected = rr_select(ring, min(k_cap, residual), retx_ues) \
                    if residual > 0 else []
            else:
                candidates = self._mac_eligible(retx_ues)
                e_size = len(candidates)
                k = min(k_cap, residual, len(candidates))
                if k > 0:
                    rates = {u: residual * table[ues[u].cqi - 1] for u in candidates}
                    if cfg.scheduler == SCHED_PF:
                        selected = pf_select(candidates, self.pf, rates, k)
                    else:
                        selected = wpf_select(candidates, self.pf, rates, self.weights, k)
                else:
                    selected = []
            if e_size > counters.max_eligible:
                counters.max_eligible = e_size

            # (v) RB allocation, service, TB start
            allocated = allocate_rbs(selected, residual, cqis, table)
            grant_infos = []
            rbs_used = sum(g[2] for g in retx_grants)
            for uid, rbs, mcs, tbs in allocated:
                ue = ues[uid]
                backlog0 = ue.backlog
                served, final = self._serve(ue, tbs)
                pid = harq.start_new_tb(uid, n, served, tbs, rbs, mcs, final)
                counters.new_grants += 1
                rbs_used += rbs
                if n >= warmup:
                    ue.eta_num += served
                    ue.eta_den += tbs
                    served_postwarmup += served
                grant_log.append((n, uid, Grant.NEW, rbs, mcs, tbs, served, pid))
                grant_infos.append((ue, tbs, backlog0, served))

            if self.check:
                if rbs_used > rb_budget:
                    raise InvariantError(f"RB budget exceeded: {rbs_used} > {rb_budget}", n)
                if len(allocated) > k_cap:
                    raise InvariantError(f"grant cap exceeded: {len(allocated)}", n)

            # (vi) credit updates
            backend.after_grants(n, grant_infos)
            if self.pf is not None:
                served_vec = np.zeros(num)
                for ue, _tbs, _b0, served in grant_infos:
                    served_vec[ue.id] = served
                self.pf.end_slot(served_vec)

            # (vii) arrivals for slot n (first servable in n+1)
            while aptr < n_arr and arr_slots[aptr] == n:
                uid = arr_ues[aptr]
                aptr += 1
                ue = ues[uid]
                was_empty = ue.backlog == 0
                size = payloads[uid]
                ue.backlog += size
                if track_packets:
                    ue.queue.append(Packet(size, n))
                arrived_bytes += size
                if n >= warmup:
                    arrived_postwarmup += size
                if was_empty:
                    backend.on_activation(ue, n)

            # (viii) trace and invariants
            if trace_credits is not None:
                if not backend.event_driven:  # event credits come from anchors post-run
                    trace_credits[n] = [ue.credit for ue in ues]
                trace_eligible.append(elig_snapshot if elig_snapshot is not None
                                      else tuple(candidates))
                trace_esize[n] = e_size
                slot_grant_count = len(allocated) + len(retx_grants)
                trace_grants.append(grant_log[len(grant_log) - slot_grant_count:])
            if self.check:
                self._check_conservation(n, arrived_bytes, delivered_bytes, dropped_bytes)
                if not backend.event_driven and self.gated:
                    for ue in ues:
                        if not ue.lo <= ue.credit <= ue.hi:
                            raise InvariantError(
                                f"ue {ue.id} credit {ue.credit} outside "
                                f"[{ue.lo}, {ue.hi}]", n)

        counters.slots = n_slots
        if backend.event_driven:
            backend.finish(n_slots)
            if counters.heap_inserts > counters.activations + counters.new_grants:
                raise InvariantError(
                    f"heap insertions {counters.heap_inserts} exceed A+G "
                    f"{counters.activations + counters.new_grants}")
        else:
            counters.touched_sum = counters.slots * num  # the naive scan by definition

        measured_slots = max(1, n_slots - warmup)
        report = MetricsReport(
            num_slots=n_slots,
            warmup_slots=warmup,
            slot_ms=cfg.slot_ms,
            class_ids=[c.id for c in cfg.classes],
            ue_class=[ue.cls.id for ue in ues],
            packets=packets_out,
            dropped_packets=dropped_packets,
            dropped_bytes=dropped_bytes,
            eta_num=[ue.eta_num for ue in ues],
            eta_den=[ue.eta_den for ue in ues],
            counters={**counters.as_dict(),
                      "harq_new_tbs": harq.new_tbs,
                      "harq_nacks_first": harq.nacks_first,
                      "harq_nacks_retx": harq.nacks_retx},
            served_rate_per_ue=[ue.eta_num / measured_slots for ue in ues],
            c_dl_run=served_postwarmup / measured_slots,
            rho_measured=(arrived_postwarmup / measured_slots / self.params.c_dl
                          if self.params.c_dl else None),
            max_eligible=counters.max_eligible,
        )
        trace = None
        if self.collect_trace:
            if backend.event_driven:
                trace_credits = reconstruct_credits(
                    backend.anchors, n_slots, num,
                    self.params.allowances, self.params.hi)
            trace = Trace(trace_credits, trace_eligible, trace_esize,
                          trace_grants, self.arrival_mask)
        anchors = backend.anchors if backend.event_driven else None
        return RunResult(cfg, self.params, report, counters, grant_log, trace, anchors)

    # -- helpers

    def _mac_eligible(self, retx_ues) -> list[int]:
        free = self.harq.free_count
        gated = self.gated
        return [ue.id for ue in self.ues
                if ue.backlog > 0 and free[ue.id] > 0 and ue.id not in retx_ues
                and (not gated or ue.credit >= 0)]

    def _check_membership(self, n: int) -> None:
        if not self.use_ring:
            return
        backend = self.backend
        free = self.harq.free_count
        expected = set()
        for ue in self.ues:
            if ue.backlog <= 0 or free[ue.id] <= 0:
                continue
            if self.gated:
                if backend.event_driven:
                    credit = ue.credit
                    k = n - ue.anchor_slot
                    if k > 0:
                        if credit < 0:
                            credit = min(credit + k * ue.allowance, 0)
                        elif ue.backlog > 0:
                            credit = min(credit + k * ue.allowance, ue.hi)
                        else:
                            credit = 0
                else:
                    credit = ue.credit
                if credit < 0:
                    continue
            expected.add(ue.id)
        actual = backend.ring.members_set()
        if actual != expected:
            raise InvariantError(
                f"ring membership {sorted(actual)} != eligible {sorted(expected)}", n)

    def _check_conservation(self, n, arrived, delivered, dropped) -> None:
        queued = sum(ue.backlog for ue in self.ues)
        total = delivered + dropped + queued + self.harq.busy_bytes()
        if arrived + self._preload_bytes != total:
            raise InvariantError(
                f"byte conservation broken: arrived {arrived + self._preload_bytes} "
                f"!= accounted {total}", n)


def run_config(config: SimConfig, params: Optional[RunParams] = None) -> RunResult:
    if params is None:
        params = prepare_params(config)
    return Simulator(config, params).run()


def compare_runs(a: RunResult, b: RunResult) -> list[str]:
    """Differences between two runs that claim to be equivalent (empty = identical)."""
    problems = []
    if a.grant_log != b.grant_log:
        n_bad = next((i for i, (x, y) in enumerate(zip(a.grant_log, b.grant_log))
                      if x != y), min(len(a.grant_log), len(b.grant_log)))
        problems.append(f"grant logs differ (first divergence at entry {n_bad})")
    ca, cb = a.credit_matrix(), b.credit_matrix()
    if ca.shape != cb.shape:
        problems.append(f"credit matrix shapes differ: {ca.shape} vs {cb.shape}")
    elif not np.array_equal(ca, cb):
        bad = np.argwhere(ca != cb)[0]
        problems.append(
            f"credits diverge at slot {bad[0]} ue {bad[1]}: "
            f"{ca[bad[0], bad[1]]} vs {cb[bad[0], bad[1]]}")
    if a.report.core_identity() != b.report.core_identity():
        problems.append("metrics reports differ")
    return problems


def run_both_engines(config: SimConfig) -> tuple[RunResult, RunResult, list[str]]:
    """The equivalence oracle: same config through both gate engines."""
    params = prepare_params(config)
    naive_cfg = config.with_overrides(engine="naive", **{"run.collect_trace": True})
    event_cfg = config.with_overrides(engine="event")
    res_naive = Simulator(naive_cfg, params).run()
    res_event = Simulator(event_cfg, params).run()
    return res_naive, res_event, compare_runs(res_naive, res_event)
