"""New-grant selection policies and resource-block allocation.

RR serves the eligible ring in FIFO order under the per-slot grant cap;
PF ranks MAC-eligible UEs by instantaneous-over-average rate and WPF scales
those scores by the class share. The RB split among the selected UEs is a
plain even split (the earlier-selected get the remainder).
"""

from __future__ import annotations

import numpy as np

from .engine import EligibleRing
from .phy import tbs_lookup


def rr_select(ring: EligibleRing, k: int, skip=frozenset()) -> list[int]:
    """Round-robin pick of up to ``k`` ring members, cursor advanced past the last."""
    return ring.select(k, skip)


class PfState:
    """Per-UE served-rate averages for proportional-fair scoring."""

    def __init__(self, num_ues: int, beta: float, rbar_floor: float, rbar_init: float = 1.0):
        self.beta = beta
        self.floor = rbar_floor
        self.rbar = np.full(num_ues, max(rbar_init, rbar_floor), dtype=np.float64)

    def scores(self, candidates, inst_rates, weights=None) -> list[tuple[float, int]]:
        out = []
        for u in candidates:
            s = inst_rates[u] / self.rbar[u]
            if weights is not None:
                s *= weights[u]
            out.append((s, u))
        return out

    def end_slot(self, served_bytes) -> None:
        """EWMA update for every UE; unserved UEs contribute zero bytes."""
        self.rbar *= 1.0 - self.beta
        self.rbar += self.beta * served_bytes
        np.maximum(self.rbar, self.floor, out=self.rbar)


def _top_k(scored: list[tuple[float, int]], k: int) -> list[int]:
    # highest score first, ties to the lowest UE id
    scored.sort(key=lambda su: (-su[0], su[1]))
    return [u for _, u in scored[:k]]


def pf_select(candidates, pf: PfState, inst_rates, k: int) -> list[int]:
    """Top-k MAC-eligible UEs by r_i / Rbar_i; deterministic given state."""
    if k <= 0 or not candidates:
        return []
    return _top_k(pf.scores(candidates, inst_rates), k)


def wpf_select(candidates, pf: PfState, inst_rates, weights, k: int) -> list[int]:
    """PF with class-share weights; any common rescaling of weights is a no-op."""
    if k <= 0 or not candidates:
        return []
    return _top_k(pf.scores(candidates, inst_rates, weights), k)


def split_rbs(residual_rbs: int, count: int) -> list[int]:
    """Even split; the first ``residual % count`` UEs get one extra RB."""
    if count <= 0 or residual_rbs <= 0:
        return []
    base, extra = divmod(residual_rbs, count)
    return [base + 1 if i < extra else base for i in range(count)]


def allocate_rbs(selected: list[int], residual_rbs: int, cqis, phy_table) -> list[tuple[int, int, int, int]]:
    """Turn a selection into (ue, rbs, mcs, tbs) grants.

    A UE whose share quantizes to a zero-byte TBS is dropped from the slot
    (it neither counts toward the grant cap nor appears in any log).
    """
    grants = []
    for uid, rbs in zip(selected, split_rbs(residual_rbs, len(selected))):
        mcs = cqis[uid]
        tbs = tbs_lookup(mcs, rbs, phy_table)
        if tbs <= 0:
            continue
        grants.append((uid, rbs, mcs, tbs))
    return grants
