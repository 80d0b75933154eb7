"""Abstract PHY (CQI -> MCS -> TBS quantization) and stop-and-wait HARQ.

The PHY is a 15-entry bytes-per-RB table indexed by MCS; CQI maps to MCS
one-to-one. HARQ runs a configurable number of stop-and-wait processes per
UE with Bernoulli block errors; retransmissions are allocated resource
blocks before any new grant, reuse their original allocation, and touch
neither the downlink queue nor the credit gate.
"""

from __future__ import annotations

from collections import deque
from importlib import resources

from .errors import ConfigError

NUM_MCS = 15

# HARQ process states
FREE = 0
IN_FLIGHT = 1
AWAIT_RETX = 2

_STATE_NAMES = {FREE: "Free", IN_FLIGHT: "InFlight", AWAIT_RETX: "AwaitRetx"}


def default_phy_table() -> list[int]:
    """Bytes/RB per MCS index 1..15, shipped as package data (~16x span)."""
    text = resources.files("cbsnr.data").joinpath("phy_table_default.txt").read_text()
    return parse_phy_table(text, "phy_table_default.txt")


def parse_phy_table(text: str, source: str) -> list[int]:
    values = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            values.append(int(line))
    validate_phy_table(values, source)
    return values


def validate_phy_table(values: list[int], source: str = "phy table") -> None:
    if len(values) != NUM_MCS:
        raise ConfigError(f"{source}: expected {NUM_MCS} entries, got {len(values)}")
    if any(v <= 0 for v in values):
        raise ConfigError(f"{source}: bytes/RB entries must be positive")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{source}: bytes/RB must be monotone non-decreasing in MCS")


def tbs_lookup(mcs: int, rbs: int, table: list[int]) -> int:
    """Transport block size in bytes for a grant of ``rbs`` resource blocks."""
    if not 1 <= mcs <= NUM_MCS:
        raise ConfigError(f"mcs {mcs} out of range 1..{NUM_MCS}")
    if rbs <= 0:
        return 0
    return rbs * table[mcs - 1]


def draw_block_error(rng, attempt: int, bler_new: float, bler_retx: float) -> bool:
    """One Bernoulli draw from the UE's channel stream; True means NACK."""
    p = bler_new if attempt == 1 else bler_retx
    return rng.random() < p


class HarqProcess:
    """One stop-and-wait process: a TB in flight or awaiting retransmission."""

    __slots__ = (
        "pid",
        "state",
        "payload",
        "tbs",
        "rbs",
        "mcs",
        "attempts",
        "nack_slot",
        "final_packets",
    )

    def __init__(self, pid: int):
        self.pid = pid
        self.state = FREE
        self.payload = 0
        self.tbs = 0
        self.rbs = 0
        self.mcs = 0
        self.attempts = 0
        self.nack_slot = -1
        self.final_packets = None

    @property
    def state_name(self) -> str:
        return _STATE_NAMES[self.state]


class FeedbackEvent:
    """Outcome of processing one TB's ACK/NACK at the gNB."""

    __slots__ = ("ue", "ack", "freed", "delivered_payload", "dropped_payload", "final_packets")

    def __init__(self, ue, ack, freed, delivered_payload, dropped_payload, final_packets):
        self.ue = ue
        self.ack = ack
        self.freed = freed
        self.delivered_payload = delivered_payload
        self.dropped_payload = dropped_payload
        self.final_packets = final_packets


class HarqManager:
    """All HARQ state of the cell: processes, pending retx FIFO, feedback timeline."""

    def __init__(self, num_ues: int, n_processes: int, max_retx: int, rtt_slots: int,
                 bler_new: float, bler_retx: float, channel_rngs):
        if n_processes < 1:
            raise ConfigError("harq.n_processes must be >= 1")
        if rtt_slots < 1:
            raise ConfigError("harq.rtt_slots must be >= 1")
        self.num_ues = num_ues
        self.n_processes = n_processes
        self.max_retx = max_retx
        self.rtt_slots = rtt_slots
        self.bler_new = bler_new
        self.bler_retx = bler_retx
        self.rngs = channel_rngs
        self.procs = [[HarqProcess(p) for p in range(n_processes)] for _ in range(num_ues)]
        self.free_count = [n_processes] * num_ues
        # jobs appended in NACK order; within a slot feedback is processed by
        # (ue, pid), so the deque is already FIFO by (nack_slot, ue, pid)
        self.pending_retx: deque[tuple[int, int]] = deque()
        self.feedback_due: dict[int, list[tuple[int, int]]] = {}
        self.in_harq_bytes = 0
        self.new_tbs = 0
        self.nacks_first = 0
        self.nacks_retx = 0

    def has_free(self, ue: int) -> bool:
        return self.free_count[ue] > 0

    def start_new_tb(self, ue: int, now: int, payload: int, tbs: int, rbs: int, mcs: int,
                     final_packets=None) -> int:
        """Occupy the lowest free process with a fresh TB; schedules its feedback."""
        plist = self.procs[ue]
        for proc in plist:
            if proc.state == FREE:
                break
        else:
            raise RuntimeError(f"ue {ue}: new TB with no free HARQ process")
        proc.state = IN_FLIGHT
        proc.payload = payload
        proc.tbs = tbs
        proc.rbs = rbs
        proc.mcs = mcs
        proc.attempts = 1
        proc.final_packets = final_packets
        self.free_count[ue] -= 1
        self.in_harq_bytes += payload
        self.new_tbs += 1
        self.feedback_due.setdefault(now + self.rtt_slots, []).append((ue, proc.pid))
        return proc.pid

    def schedule_retx(self, now: int, rb_budget: int):
        """Allocate RBs to pending retransmissions, oldest first.

        Strict FIFO: the first job that does not fit the remaining budget
        blocks the rest for this slot. Returns (retx grants, residual RBs,
        set of UEs scheduled for retransmission).
        """
        grants = []
        retx_ues = set()
        residual = rb_budget
        while self.pending_retx:
            ue, pid = self.pending_retx[0]
            proc = self.procs[ue][pid]
            if proc.rbs > residual:
                break
            self.pending_retx.popleft()
            residual -= proc.rbs
            proc.state = IN_FLIGHT
            proc.attempts += 1
            grants.append((ue, pid, proc.rbs, proc.mcs, proc.tbs))
            retx_ues.add(ue)
            self.feedback_due.setdefault(now + self.rtt_slots, []).append((ue, pid))
        return grants, residual, retx_ues

    def process_feedback(self, now: int) -> list[FeedbackEvent]:
        """ACK/NACK every TB whose feedback is due this slot.

        One RNG draw per TB from the owning UE's channel stream; processing
        order is (ue, pid) so per-slot results do not depend on insertion
        order.
        """
        due = self.feedback_due.pop(now, None)
        if not due:
            return []
        due.sort()
        events = []
        for ue, pid in due:
            proc = self.procs[ue][pid]
            if proc.state != IN_FLIGHT:
                raise RuntimeError(f"feedback for ue {ue} pid {pid} in state {proc.state_name}")
            nack = draw_block_error(self.rngs[ue], proc.attempts, self.bler_new, self.bler_retx)
            if nack:
                if proc.attempts == 1:
                    self.nacks_first += 1
                else:
                    self.nacks_retx += 1
            if not nack:
                ev = FeedbackEvent(ue, True, True, proc.payload, 0, proc.final_packets)
                self._release(ue, proc)
            elif proc.attempts > self.max_retx:
                ev = FeedbackEvent(ue, False, True, 0, proc.payload, proc.final_packets)
                self._release(ue, proc)
            else:
                proc.state = AWAIT_RETX
                proc.nack_slot = now
                self.pending_retx.append((ue, pid))
                ev = FeedbackEvent(ue, False, False, 0, 0, None)
            events.append(ev)
        return events

    def _release(self, ue: int, proc: HarqProcess) -> None:
        self.in_harq_bytes -= proc.payload
        proc.state = FREE
        proc.payload = 0
        proc.tbs = 0
        proc.rbs = 0
        proc.attempts = 0
        proc.final_packets = None
        self.free_count[ue] += 1

    def busy_bytes(self) -> int:
        return self.in_harq_bytes
