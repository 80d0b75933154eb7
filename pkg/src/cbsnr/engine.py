"""Gate realizations: per-slot scan vs. wake-up driven bookkeeping.

Both backends produce identical grant sequences and slot-boundary credits
for the same inputs. The naive backend touches every UE every slot; the
event backend touches a UE only when something happens to it (wake-up,
activation, grant, HARQ completion) and keeps credits as lazy anchors
``(anchor_slot, credit)`` that a closed form extends across untouched slots.

The round-robin order is a FIFO circular list: a UE entering the eligible
set is inserted behind the cursor, so everyone already waiting is served
first. Same-slot entrants are appended in ascending UE id; both backends
follow the same rule, which keeps their ring orders identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantError
from .gate import DebitVariant, slot_update_raw

ANCHOR_EMPTY = 0
ANCHOR_BACKLOGGED = 1


class EligibleRing:
    """Circular FIFO of UE ids with a round-robin cursor.

    ``add`` inserts immediately behind the cursor (served last);
    ``select`` walks from the cursor and advances it past the last pick.
    """

    __slots__ = ("_next", "_prev", "cursor")

    def __init__(self):
        self._next: dict[int, int] = {}
        self._prev: dict[int, int] = {}
        self.cursor: int | None = None

    def __len__(self) -> int:
        return len(self._next)

    def __contains__(self, u: int) -> bool:
        return u in self._next

    def members_set(self) -> set[int]:
        return set(self._next)

    def members_in_order(self) -> list[int]:
        if self.cursor is None:
            return []
        out = [self.cursor]
        u = self._next[self.cursor]
        while u != self.cursor:
            out.append(u)
            u = self._next[u]
        return out

    def add(self, u: int) -> None:
        if u in self._next:
            return
        if self.cursor is None:
            self._next[u] = u
            self._prev[u] = u
            self.cursor = u
            return
        tail = self._prev[self.cursor]
        self._next[tail] = u
        self._prev[u] = tail
        self._next[u] = self.cursor
        self._prev[self.cursor] = u

    def remove(self, u: int) -> bool:
        if u not in self._next:
            return False
        nxt = self._next.pop(u)
        prv = self._prev.pop(u)
        if nxt == u:
            self.cursor = None
            return True
        self._next[prv] = nxt
        self._prev[nxt] = prv
        if self.cursor == u:
            self.cursor = nxt
        return True

    def select(self, k: int, skip=frozenset()) -> list[int]:
        """Up to ``k`` members in round-robin order, skipping ``skip`` in place."""
        if self.cursor is None or k <= 0:
            return []
        out = []
        u = self.cursor
        for _ in range(len(self._next)):
            if u not in skip:
                out.append(u)
                if len(out) == k:
                    break
            u = self._next[u]
        if out:
            self.cursor = self._next[out[-1]]
        return out


class WakeupHeap:
    """Binary min-heap of (wake_slot, ue, generation) with lazy deletion.

    Hand-rolled so sift comparisons can be counted; the measured cost of the
    event engine is built from these counters rather than assumed.
    """

    __slots__ = ("_h", "inserts", "pops", "stale_pops", "comparisons")

    def __init__(self):
        self._h: list[tuple[int, int, int]] = []
        self.inserts = 0
        self.pops = 0
        self.stale_pops = 0
        self.comparisons = 0

    def __len__(self) -> int:
        return len(self._h)

    def push(self, key: int, ue: int, gen: int, now: int) -> None:
        if key <= now:
            raise InvariantError(f"heap key {key} not beyond current slot", slot=now)
        h = self._h
        h.append((key, ue, gen))
        self.inserts += 1
        i = len(h) - 1
        item = h[i]
        while i > 0:
            parent = (i - 1) >> 1
            self.comparisons += 1
            if h[parent][:2] <= item[:2]:
                break
            h[i] = h[parent]
            i = parent
        h[i] = item

    def peek_key(self) -> int | None:
        return self._h[0][0] if self._h else None

    def pop(self) -> tuple[int, int, int]:
        h = self._h
        self.pops += 1
        top = h[0]
        last = h.pop()
        n = len(h)
        if n:
            i = 0
            while True:
                left = 2 * i + 1
                if left >= n:
                    break
                child = left
                right = left + 1
                if right < n:
                    self.comparisons += 1
                    if h[right][:2] < h[left][:2]:
                        child = right
                self.comparisons += 1
                if last[:2] <= h[child][:2]:
                    break
                h[i] = h[child]
                i = child
            h[i] = last
        return top


@dataclass
class EventCounters:
    """Work accounting shared by both backends; the event bounds are asserted on it."""

    slots: int = 0
    activations: int = 0
    new_grants: int = 0
    wakeups: int = 0
    heap_inserts: int = 0
    heap_pops: int = 0
    stale_pops: int = 0
    heap_comparisons: int = 0
    touched_sum: int = 0
    harq_touches: int = 0
    retx_skips: int = 0
    max_eligible: int = 0
    max_touch_excess: int = 0  # max over slots of touched - (wake+grant+act+1); <= 0 when bound holds

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class AnchorLog:
    """Sparse credit history of the event backend: one row per re-anchoring."""

    slots: list[int] = field(default_factory=list)
    ues: list[int] = field(default_factory=list)
    credits: list[int] = field(default_factory=list)
    modes: list[int] = field(default_factory=list)

    def append(self, slot: int, ue: int, credit: int, mode: int) -> None:
        self.slots.append(slot)
        self.ues.append(ue)
        self.credits.append(credit)
        self.modes.append(mode)


def wakeup_slot(now: int, credit: int, allowance: int) -> int:
    """First slot at which a deficit credit reaches zero under pure accrual."""
    if credit >= 0:
        raise ValueError("wakeup_slot requires a deficit credit")
    if allowance <= 0:
        raise ValueError("allowance must be positive")
    return now + (-credit + allowance - 1) // allowance


def lazy_accrue(ue, now: int, backlogged: bool) -> None:
    """Materialize a UE's credit at boundary ``now`` assuming no grants since its anchor.

    Closed form of the per-slot no-grant recursion: deficits drift up capped
    at zero, positive credit accrues capped at ``hi`` while backlogged, and
    resets to zero on the first update with an empty queue.
    """
    k = now - ue.anchor_slot
    if k < 0:
        raise InvariantError(f"ue {ue.id}: anchor {ue.anchor_slot} beyond slot {now}")
    if k == 0:
        return
    c = ue.credit
    if c < 0:
        c = min(c + k * ue.allowance, 0)
    elif backlogged:
        c = min(c + k * ue.allowance, ue.hi)
    else:
        c = 0
    ue.credit = c
    ue.anchor_slot = now


class NaiveGateBackend:
    """Per-slot scan: every UE's credit is updated and tested every slot."""

    def __init__(self, ues, harq, variant: DebitVariant | None, counters: EventCounters,
                 collect_anchors: bool = False):
        self.ues = ues
        self.harq = harq
        self.variant = variant  # None means no credit gate (plain MAC eligibility)
        self.counters = counters
        self.ring = EligibleRing()
        self._member_mask = [False] * len(ues)

    @property
    def event_driven(self) -> bool:
        return False

    def begin_slot(self, n: int) -> None:
        pass

    def pre_select(self, n: int) -> None:
        """Recompute eligibility for all UEs and diff it into the ring."""
        gated = self.variant is not None
        free = self.harq.free_count
        mask = self._member_mask
        ring = self.ring
        entries = []
        for ue in self.ues:
            uid = ue.id
            ok = ue.backlog > 0 and free[uid] > 0 and (not gated or ue.credit >= 0)
            if ok != mask[uid]:
                if ok:
                    entries.append(uid)
                else:
                    ring.remove(uid)
                    mask[uid] = False
        for uid in entries:  # ascending id: the scan order is already sorted
            ring.add(uid)
            self._member_mask[uid] = True

    def after_grants(self, n: int, grant_infos) -> None:
        """Phase (v): one credit update per UE, grants folded in where issued.

        A granted UE that lost eligibility inside the slot (queue drained,
        deficit, all HARQ busy) leaves the ring now and re-enters at the tail
        when it next qualifies, mirroring the event backend's bookkeeping.
        """
        if self.variant is not None:
            granted = {info[0].id: info for info in grant_infos}
            variant = self.variant
            for ue in self.ues:
                info = granted.get(ue.id)
                if info is None:
                    ue.credit = slot_update_raw(
                        ue.credit, ue.allowance, ue.backlog, False, 0, ue.lo, ue.hi, variant)
                else:
                    _, tbs, backlog0, _served = info
                    ue.credit = slot_update_raw(
                        ue.credit, ue.allowance, backlog0, True, tbs, ue.lo, ue.hi, variant)
                ue.anchor_slot = n + 1
        gated = self.variant is not None
        free = self.harq.free_count
        for ue, _tbs, _b0, _served in grant_infos:
            uid = ue.id
            if ue.backlog == 0 or (gated and ue.credit < 0) or free[uid] == 0:
                if self._member_mask[uid]:
                    self.ring.remove(uid)
                    self._member_mask[uid] = False

    def on_activation(self, ue, n: int) -> None:
        self.counters.activations += 1

    def on_harq_freed(self, ue, n: int) -> None:
        pass

    def boundary_credits(self) -> list[int]:
        return [ue.credit for ue in self.ues]


class EventGateBackend:
    """Wake-up heap + eligible ring + lazy accrual; touches only affected UEs."""

    def __init__(self, ues, harq, variant: DebitVariant, counters: EventCounters,
                 collect_anchors: bool = False):
        self.ues = ues
        self.harq = harq
        self.variant = variant
        self.counters = counters
        self.ring = EligibleRing()
        self.heap = WakeupHeap()
        self._pending_adds: list[int] = []
        self._in_heap = [False] * len(ues)
        self.anchors = AnchorLog() if collect_anchors else None
        self._slot_touches = 0
        self._slot_wakeups = 0
        self._slot_grants = 0
        self._slot_activations = 0
        if collect_anchors:
            for ue in ues:
                self.anchors.append(0, ue.id, ue.credit,
                                    ANCHOR_BACKLOGGED if ue.backlog > 0 else ANCHOR_EMPTY)

    @property
    def event_driven(self) -> bool:
        return True

    def _log_anchor(self, ue, mode: int) -> None:
        if self.anchors is not None:
            self.anchors.append(ue.anchor_slot, ue.id, ue.credit, mode)

    def begin_slot(self, n: int) -> None:
        c = self.counters
        c.max_touch_excess = max(
            c.max_touch_excess,
            self._slot_touches - (self._slot_wakeups + self._slot_grants
                                  + self._slot_activations + 1))
        self._slot_touches = 1  # the heap-min peek
        self._slot_wakeups = 0
        self._slot_grants = 0
        self._slot_activations = 0
        heap = self.heap
        while True:
            key = heap.peek_key()
            if key is None or key > n:
                break
            if key < n:
                raise InvariantError(f"missed wake-up at slot {key}", slot=n)
            key, uid, gen = heap.pop()
            ue = self.ues[uid]
            if gen != ue.heap_gen:
                heap.stale_pops += 1
                continue
            self._in_heap[uid] = False
            c.wakeups += 1
            self._slot_wakeups += 1
            self._slot_touches += 1
            # drift reaches zero exactly at the wake slot
            ue.credit = 0
            ue.anchor_slot = n
            backlogged = ue.backlog > 0
            self._log_anchor(ue, ANCHOR_BACKLOGGED if backlogged else ANCHOR_EMPTY)
            if backlogged and self.harq.free_count[uid] > 0:
                self._pending_adds.append(uid)

    def pre_select(self, n: int) -> None:
        if not self._pending_adds:
            return
        adds = sorted(set(self._pending_adds))
        self._pending_adds.clear()
        ring = self.ring
        for uid in adds:
            ue = self.ues[uid]
            if ue.backlog > 0 and ue.credit >= 0 and self.harq.free_count[uid] > 0:
                ring.add(uid)

    def after_grants(self, n: int, grant_infos) -> None:
        variant = self.variant
        heap = self.heap
        for ue, tbs, backlog0, _served in grant_infos:
            self._slot_grants += 1
            self._slot_touches += 1
            lazy_accrue(ue, n, backlogged=True)
            c_next = slot_update_raw(
                ue.credit, ue.allowance, backlog0, True, tbs, ue.lo, ue.hi, variant)
            ue.credit = c_next
            ue.anchor_slot = n + 1
            uid = ue.id
            if ue.backlog == 0:
                # positive residue resets lazily; a deficit with nothing queued
                # waits for the next activation to enter the heap
                self.ring.remove(uid)
                self._log_anchor(ue, ANCHOR_EMPTY)
            elif c_next < 0:
                self.ring.remove(uid)
                wake = wakeup_slot(n + 1, c_next, ue.allowance)
                ue.heap_gen += 1
                heap.push(wake, uid, ue.heap_gen, n)
                self._in_heap[uid] = True
                self._log_anchor(ue, ANCHOR_BACKLOGGED)
            else:
                self._log_anchor(ue, ANCHOR_BACKLOGGED)
                if self.harq.free_count[uid] == 0:
                    self.ring.remove(uid)

    def on_activation(self, ue, n: int) -> None:
        """Queue went empty -> non-empty during slot ``n``'s arrival phase."""
        self.counters.activations += 1
        self._slot_activations += 1
        self._slot_touches += 1
        lazy_accrue(ue, n + 1, backlogged=False)  # the queue was empty up to this slot
        ue.anchor_slot = n + 1
        uid = ue.id
        self._log_anchor(ue, ANCHOR_BACKLOGGED)
        if ue.credit >= 0:
            if self.harq.free_count[uid] > 0:
                self._pending_adds.append(uid)
        else:
            if self._in_heap[uid]:
                raise InvariantError(f"ue {uid} activated while already heap-resident", slot=n)
            wake = wakeup_slot(n + 1, ue.credit, ue.allowance)
            ue.heap_gen += 1
            self.heap.push(wake, uid, ue.heap_gen, n)
            self._in_heap[uid] = True

    def on_harq_freed(self, ue, n: int) -> None:
        """A HARQ process freed; re-admit a waiting UE (not an activation)."""
        uid = ue.id
        if ue.backlog <= 0 or uid in self.ring or self._in_heap[uid]:
            return
        self.counters.harq_touches += 1
        lazy_accrue(ue, n, backlogged=True)
        self._log_anchor(ue, ANCHOR_BACKLOGGED)
        if ue.credit >= 0:
            self._pending_adds.append(uid)

    def finish(self, n_slots: int) -> None:
        c = self.counters
        c.max_touch_excess = max(
            c.max_touch_excess,
            self._slot_touches - (self._slot_wakeups + self._slot_grants
                                  + self._slot_activations + 1))
        c.heap_inserts = self.heap.inserts
        c.heap_pops = self.heap.pops
        c.stale_pops = self.heap.stale_pops
        c.heap_comparisons = self.heap.comparisons
        c.touched_sum += c.wakeups + c.new_grants + c.activations + c.harq_touches

    def boundary_credits(self) -> list[int]:
        raise NotImplementedError("event backend credits are reconstructed from anchors")


def reconstruct_credits(anchors: AnchorLog, num_slots: int, num_ues: int,
                        allowances, his) -> np.ndarray:
    """Expand an anchor log into the [num_slots, num_ues] boundary-credit matrix.

    Row ``n`` holds the credit entering slot ``n + 1``, matching the naive
    backend's trace convention.
    """
    slots = np.asarray(anchors.slots, dtype=np.int64)
    ues = np.asarray(anchors.ues, dtype=np.int64)
    credits = np.asarray(anchors.credits, dtype=np.int64)
    modes = np.asarray(anchors.modes, dtype=np.int64)
    # group the log per UE, keeping log order (later same-slot anchors win)
    order = np.argsort(ues, kind="stable")
    slots, ues, credits, modes = slots[order], ues[order], credits[order], modes[order]
    starts = np.searchsorted(ues, np.arange(num_ues + 1))
    out = np.zeros((num_slots + 1, num_ues), dtype=np.int64)
    for u in range(num_ues):
        lo_i, hi_i = starts[u], starts[u + 1]
        s_u, c_u, m_u = slots[lo_i:hi_i], credits[lo_i:hi_i], modes[lo_i:hi_i]
        dc = int(allowances[u])
        hi = int(his[u])
        col = out[:, u]
        n_seg = len(s_u)
        for i in range(n_seg):
            start = int(s_u[i])
            end = int(s_u[i + 1]) if i + 1 < n_seg else num_slots + 1
            if end <= start:
                continue
            if start > num_slots:
                break
            end = min(end, num_slots + 1)
            c0 = int(c_u[i])
            length = end - start
            if c0 < 0:
                seg = np.minimum(c0 + dc * np.arange(length, dtype=np.int64), 0)
            elif m_u[i] == ANCHOR_BACKLOGGED:
                seg = np.minimum(c0 + dc * np.arange(length, dtype=np.int64), hi)
            else:
                seg = np.zeros(length, dtype=np.int64)
                seg[0] = c0
            col[start:end] = seg
    return out[1:, :]
