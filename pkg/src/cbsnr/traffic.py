"""Per-UE on/off packet sources and load calibration.

Each source is a two-state Markov chain with geometric dwell times; while ON
it emits at most one fixed-size packet per slot with probability ``q``.
Dwell lengths and emissions come from two separate per-UE substreams so the
slot-by-slot API and the bulk pregeneration consume randomness identically
(both are backed by the same segment-wise generator).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import CalibrationError, ConfigError
from .model import Packet


class OnOffSource:
    """Bursty source: geometric ON/OFF dwells, Bernoulli emission while ON."""

    def __init__(self, payload_bytes: int, q: float, mean_on: float, mean_off: float,
                 rng_dwell: np.random.Generator, rng_emit: np.random.Generator):
        if not 0.0 <= q <= 1.0:
            raise ConfigError(f"emission probability q={q:.4f} out of [0, 1]")
        if mean_on < 1 and mean_off == 0:
            raise ConfigError("mean_on_slots must be >= 1 for an always-on source")
        self.payload = payload_bytes
        self.q = q
        self.mean_on = mean_on
        self.mean_off = mean_off
        self._rng_dwell = rng_dwell
        self._rng_emit = rng_emit
        self._buffer = np.zeros(0, dtype=bool)
        self._pos = 0
        self._always_on = mean_off == 0
        if self._always_on:
            self._state_on = True
        else:
            p_on = mean_on / (mean_on + mean_off)
            self._state_on = bool(rng_dwell.random() < p_on)

    @property
    def rate_bytes_per_slot(self) -> float:
        p_on = 1.0 if self._always_on else self.mean_on / (self.mean_on + self.mean_off)
        return self.q * p_on * self.payload

    def _next_segment(self, cap: int) -> np.ndarray:
        """Arrival mask for the next dwell segment (at most ``cap`` slots when always-on)."""
        if self._always_on:
            length = cap
        else:
            mean = self.mean_on if self._state_on else self.mean_off
            length = int(self._rng_dwell.geometric(1.0 / mean)) if mean > 0 else 1
        if self._state_on and self.q > 0.0:
            seg = self._rng_emit.random(length) < self.q
        else:
            seg = np.zeros(length, dtype=bool)
        if not self._always_on:
            self._state_on = not self._state_on
        return seg

    def _fill(self, upto: int) -> None:
        chunks = [self._buffer[self._pos:]]
        have = chunks[0].size
        while have < upto:
            seg = self._next_segment(upto - have)
            chunks.append(seg)
            have += seg.size
        self._buffer = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
        self._pos = 0

    def step(self, now: int) -> list[Packet]:
        """Advance one slot; emits zero or one packet."""
        if self._pos >= self._buffer.size:
            self._fill(1)
        arrived = self._buffer[self._pos]
        self._pos += 1
        return [Packet(self.payload, now)] if arrived else []

    def arrivals(self, n_slots: int) -> np.ndarray:
        """Boolean arrival mask for the next ``n_slots`` slots (bulk form of step)."""
        if self._buffer.size - self._pos < n_slots:
            self._fill(n_slots)
        out = self._buffer[self._pos:self._pos + n_slots].copy()
        self._pos += n_slots
        return out


def nominal_q(pkt_per_s: float, slot_ms: float, mean_on: float, mean_off: float) -> float:
    """Emission probability that yields the nominal packet rate at this duty cycle."""
    p_on = 1.0 if mean_off == 0 else mean_on / (mean_on + mean_off)
    if p_on <= 0:
        raise ConfigError("on/off dwell means give a zero ON fraction")
    return pkt_per_s * (slot_ms / 1000.0) / p_on


def offered_bytes_per_slot(config) -> float:
    """Aggregate nominal offered rate before any calibration scaling."""
    tr = config.traffic
    q = nominal_q(tr["pkt_per_s"], config.slot_ms, tr["mean_on_slots"], tr["mean_off_slots"])
    p_on = 1.0 if tr["mean_off_slots"] == 0 else (
        tr["mean_on_slots"] / (tr["mean_on_slots"] + tr["mean_off_slots"]))
    return sum(q * p_on * ue.cls.payload_bytes for ue in config.ues)


def calibrate_load(config, c_dl: float) -> tuple[float, int]:
    """Scale factors (q_scale, payload_scale) hitting traffic.target_rho.

    ``q_scale`` multiplies every UE's emission probability; ``payload_scale``
    is an integer factor applied to every payload when probabilities alone
    cannot reach the target (only with traffic.auto_payload_scale).
    """
    tr = config.traffic
    target = tr["target_rho"]
    if target is None:
        return 1.0, 1
    if c_dl <= 0:
        raise CalibrationError("calibration measured zero capacity; check rb_budget/CQIs")
    lam_nominal = offered_bytes_per_slot(config)
    if lam_nominal <= 0:
        raise CalibrationError("nominal offered load is zero; cannot scale to target_rho")
    scale = target * c_dl / lam_nominal
    q_nom = nominal_q(tr["pkt_per_s"], config.slot_ms, tr["mean_on_slots"], tr["mean_off_slots"])
    if q_nom * scale <= 1.0 + 1e-12:
        return scale, 1
    if not tr["auto_payload_scale"]:
        raise CalibrationError(
            f"target_rho={target} needs emission probability {q_nom * scale:.3f} > 1; "
            "scale payload sizes (traffic.auto_payload_scale) or lower the target")
    payload_scale = math.ceil(q_nom * scale - 1e-12)
    return scale / payload_scale, payload_scale


def build_sources(config, params, rngs_dwell, rngs_emit) -> list[OnOffSource]:
    tr = config.traffic
    q_nom = nominal_q(tr["pkt_per_s"], config.slot_ms, tr["mean_on_slots"], tr["mean_off_slots"])
    q = q_nom * params.q_scale
    if q > 1.0 + 1e-12:
        raise ConfigError(f"scaled emission probability {q:.4f} exceeds 1")
    q = min(q, 1.0)
    return [
        OnOffSource(ue.cls.payload_bytes * params.payload_scale, q,
                    tr["mean_on_slots"], tr["mean_off_slots"],
                    rngs_dwell[i], rngs_emit[i])
        for i, ue in enumerate(config.ues)
    ]
