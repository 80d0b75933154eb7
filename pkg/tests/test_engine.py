"""Eligible ring, wake-up heap, and lazy accrual unit tests."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbsnr.engine import EligibleRing, WakeupHeap, lazy_accrue, wakeup_slot
from cbsnr.errors import InvariantError
from cbsnr.model import PriorityClass, UeState


def make_ue(credit=0, anchor=0, allowance=2, lo=-500, hi=240, backlog=0):
    ue = UeState(0, PriorityClass("p1", 0.75, 80), 5, allowance, lo, hi, False)
    ue.credit = credit
    ue.anchor_slot = anchor
    ue.backlog = backlog
    return ue


class TestWakeupSlot:
    @pytest.mark.parametrize("now,credit,allowance,expected", [
        (5, -7, 2, 9),
        (0, -500, 20, 25),
        (100, -1, 300, 101),
    ])
    def test_examples(self, now, credit, allowance, expected):
        assert wakeup_slot(now, credit, allowance) == expected

    def test_rejects_non_deficit(self):
        with pytest.raises(ValueError):
            wakeup_slot(5, 0, 2)

    @given(now=st.integers(0, 1000), credit=st.integers(-5000, -1),
           allowance=st.integers(1, 300))
    def test_invariant_along_trajectory(self, now, credit, allowance):
        """The predicted wake slot does not move as the deficit drains."""
        wake = wakeup_slot(now, credit, allowance)
        n, c = now, credit
        while c < 0:
            c = min(c + allowance, 0)
            n += 1
        assert n == wake


class TestLazyAccrue:
    def test_deficit_three_steps(self):
        ue = make_ue(credit=-7, allowance=2, backlog=10)
        lazy_accrue(ue, 3, backlogged=True)
        assert ue.credit == -1 and ue.anchor_slot == 3

    def test_deficit_capped_at_zero_when_idle(self):
        ue = make_ue(credit=-7, allowance=2)
        lazy_accrue(ue, 10, backlogged=False)
        assert ue.credit == 0

    def test_backlogged_accrual_hits_hi(self):
        ue = make_ue(credit=50, allowance=20, hi=240, backlog=999)
        lazy_accrue(ue, 100, backlogged=True)
        assert ue.credit == 240

    def test_idle_positive_resets(self):
        ue = make_ue(credit=37, allowance=20)
        lazy_accrue(ue, 1, backlogged=False)
        assert ue.credit == 0

    def test_zero_steps_is_noop(self):
        ue = make_ue(credit=37)
        lazy_accrue(ue, 0, backlogged=False)
        assert ue.credit == 37

    def test_past_anchor_rejected(self):
        ue = make_ue(anchor=5)
        with pytest.raises(InvariantError):
            lazy_accrue(ue, 3, backlogged=True)

    @given(credit=st.integers(-400, 400), k=st.integers(0, 60),
           allowance=st.integers(1, 50), backlogged=st.booleans())
    def test_matches_stepwise_recursion(self, credit, k, allowance, backlogged):
        """Closed form == k applications of the no-grant slot recursion."""
        lo, hi = -500, 240
        stepped = credit
        for _ in range(k):
            if stepped < 0:
                stepped = min(stepped + allowance, 0)
            elif not backlogged:
                stepped = 0
            else:
                stepped = min(stepped + allowance, hi)
        ue = make_ue(credit=credit, allowance=allowance, lo=lo, hi=hi)
        if credit < 0 and backlogged:
            # heap discipline: a backlogged deficit UE is touched at its wake
            k = min(k, wakeup_slot(0, credit, allowance))
            stepped = min(credit + k * allowance, 0)
        lazy_accrue(ue, k, backlogged=backlogged)
        assert ue.credit == stepped


class TestEligibleRing:
    def test_select_advances_cursor(self):
        ring = EligibleRing()
        for u in (1, 2, 3):
            ring.add(u)
        ring.select(1)  # serve u1, cursor -> u2
        assert ring.select(2) == [2, 3]
        assert ring.cursor == 1

    def test_select_fewer_than_k(self):
        ring = EligibleRing()
        ring.add(5)
        assert ring.select(3) == [5]

    def test_select_empty(self):
        assert EligibleRing().select(4) == []

    def test_new_members_join_behind_cursor(self):
        ring = EligibleRing()
        ring.add(3)
        ring.add(7)
        ring.select(1)          # serve 3; cursor at 7
        ring.add(1)             # newcomer waits behind every current member
        assert ring.select(2) == [7, 3]
        assert ring.select(1) == [1]

    def test_remove_moves_cursor_forward(self):
        ring = EligibleRing()
        for u in (1, 2, 3):
            ring.add(u)
        assert ring.cursor == 1
        ring.remove(1)
        assert ring.cursor == 2
        ring.remove(2)
        ring.remove(3)
        assert ring.cursor is None and len(ring) == 0

    def test_skip_preserves_position(self):
        ring = EligibleRing()
        for u in (1, 2, 3):
            ring.add(u)
        assert ring.select(1, skip={1}) == [2]
        # 1 was skipped in place, not consumed: it is next after the wrap
        assert ring.select(2) == [3, 1]

    @pytest.mark.parametrize("m,k", [(3, 1), (3, 2), (5, 2), (6, 3), (7, 4)])
    def test_static_ring_service_window(self, m, k):
        """Every member is served within ceil(m/k) consecutive calls."""
        ring = EligibleRing()
        for u in range(m):
            ring.add(u)
        window = math.ceil(m / k)
        history = [ring.select(k) for _ in range(window * 4)]
        for start in range(len(history) - window + 1):
            seen = {u for sel in history[start:start + window] for u in sel}
            assert seen == set(range(m))

    def test_exactly_once_when_k_divides_m(self):
        ring = EligibleRing()
        for u in range(6):
            ring.add(u)
        calls = [ring.select(3) for _ in range(2)]
        flat = [u for sel in calls for u in sel]
        assert sorted(flat) == list(range(6))


class TestWakeupHeap:
    def test_pops_by_key_then_ue(self):
        heap = WakeupHeap()
        heap.push(9, 3, 0, now=0)
        heap.push(7, 5, 0, now=0)
        heap.push(7, 2, 0, now=0)
        assert [heap.pop()[:2] for _ in range(3)] == [(7, 2), (7, 5), (9, 3)]

    def test_rejects_non_future_key(self):
        heap = WakeupHeap()
        with pytest.raises(InvariantError):
            heap.push(5, 1, 0, now=5)

    def test_counts_operations(self):
        heap = WakeupHeap()
        for i in range(64):
            heap.push(100 + (i * 37) % 64, i, 0, now=0)
        while len(heap):
            heap.pop()
        assert heap.inserts == 64 and heap.pops == 64
        assert heap.comparisons > 64  # sift work was measured, not assumed

    @given(st.lists(st.integers(1, 1000), min_size=1, max_size=200))
    def test_heap_sorts(self, keys):
        heap = WakeupHeap()
        for i, k in enumerate(keys):
            heap.push(k, i, 0, now=0)
        out = [heap.pop()[0] for _ in range(len(keys))]
        assert out == sorted(keys)
