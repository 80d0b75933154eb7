"""Slot-quantized per-UE credit recursion.

The gate keeps one signed byte counter per UE. Each slot the counter is
updated in three steps: a pre-debit accumulation/recovery/reset step, a
debit for any new-transmission grant issued this slot, and a final clamp
to the configured [lo, hi] band. A UE may receive new grants only while
its credit is non-negative; HARQ retransmissions bypass the gate entirely
and never debit.

All arithmetic is integer (whole bytes) so the naive per-slot scan and the
event-driven realization stay bit-identical.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class DebitVariant(enum.Enum):
    """How a new grant debits credit: full grant size vs. bytes actually served."""

    DT = "DT"  # debit the full granted TBS
    PU = "PU"  # debit only min(TBS, backlog), i.e. bytes actually packed


@dataclass(frozen=True)
class CreditUpdateInput:
    """One slot's worth of inputs to the credit recursion for one UE.

    ``backlog`` is the queue depth in bytes at the start of the slot, before
    any service in that slot.
    """

    credit_in: int
    backlog: int
    allowance: int
    granted: bool
    tbs: int
    lo: int
    hi: int

    def validate(self) -> None:
        if self.allowance <= 0:
            raise ValueError("allowance must be positive")
        if self.backlog < 0:
            raise ValueError("backlog must be non-negative")
        if self.granted != (self.tbs > 0):
            raise ValueError("tbs must be positive iff granted")
        if not self.lo < 0 < self.hi:
            raise ValueError("clamps must satisfy lo < 0 < hi")


def pre_debit_update(credit: int, allowance: int, backlog: int) -> int:
    """Accumulation/recovery/reset step applied before any debit.

    In deficit the credit drifts toward zero and is capped there; with a
    non-negative credit and an empty queue it resets to zero (the reset is
    applied at credit == 0 as well, so an idle UE holds 0 instead of
    oscillating); otherwise it accumulates one allowance.
    """
    if credit < 0:
        return min(credit + allowance, 0)
    if backlog == 0:
        return 0
    return credit + allowance


def compute_debit(variant: DebitVariant, granted: bool, tbs: int, backlog: int) -> int:
    """Debit owed for this slot: 0 without a grant, TBS under DT, served bytes under PU."""
    if not granted:
        return 0
    if variant is DebitVariant.DT:
        return tbs
    return min(tbs, backlog)


def clamp(x: int, lo: int, hi: int) -> int:
    return min(max(x, lo), hi)


def slot_update(inp: CreditUpdateInput, variant: DebitVariant) -> int:
    """One full slot transition; pure function of its inputs.

    Single clamp after the debit: the pre-debit value may transiently exceed
    ``hi`` before the debit is subtracted.
    """
    pre = pre_debit_update(inp.credit_in, inp.allowance, inp.backlog)
    debit = compute_debit(variant, inp.granted, inp.tbs, inp.backlog)
    return clamp(pre - debit, inp.lo, inp.hi)


def slot_update_raw(
    credit: int,
    allowance: int,
    backlog: int,
    granted: bool,
    tbs: int,
    lo: int,
    hi: int,
    variant: DebitVariant,
) -> int:
    """Unboxed form of :func:`slot_update` for hot loops."""
    if credit < 0:
        pre = credit + allowance
        if pre > 0:
            pre = 0
    elif backlog == 0:
        pre = 0
    else:
        pre = credit + allowance
    if granted:
        if variant is DebitVariant.DT:
            pre -= tbs
        else:
            pre -= tbs if tbs < backlog else backlog
    if pre < lo:
        return lo
    if pre > hi:
        return hi
    return pre


def is_gate_eligible(
    credit: int, backlog: int, has_free_harq: bool, in_retx_set: bool = False
) -> bool:
    """Eligibility for a new grant: MAC-eligible and credit >= 0.

    MAC eligibility requires a non-empty queue, at least one free HARQ
    process, and no retransmission already scheduled for the UE this slot.
    """
    return backlog > 0 and has_free_harq and not in_retx_set and credit >= 0
