import numpy as np
import pytest
from scipy import stats

from drowsyq.replay import BatchEntry, ReplayQueue, Transition


def _t(k):
    return Transition(state=("s", k), action=k % 3, reward=-float(k), next_state=("s", k + 1), done=False)


def test_fifo_eviction():
    q = ReplayQueue(capacity=3)
    items = [_t(k) for k in range(5)]
    for it in items:
        q.push(it)
    assert len(q) == 3
    assert q.sequences() == [2, 3, 4]
    stored = {id(q.frame(s)) for s in range(3)}
    assert stored == {id(it) for it in items[2:]}


def test_sequence_wrap_small_modulus():
    q = ReplayQueue(capacity=3, modulus=5)
    seqs = [q.push(_t(k)) for k in range(12)]
    assert seqs == [0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 1]
    assert q.sequences() == [4, 0, 1]
    assert q.next_seq == 2


def test_constructor_errors():
    with pytest.raises(ValueError):
        ReplayQueue(capacity=0)
    with pytest.raises(ValueError):
        ReplayQueue(capacity=4, modulus=4)


def test_batch_holds_references_not_copies():
    q = ReplayQueue(capacity=10)
    items = [_t(k) for k in range(10)]
    for it in items:
        q.push(it)
    batch = q.sample(4, np.random.default_rng(0))
    assert all(isinstance(e, BatchEntry) for e in batch.entries)
    got = batch.resolve()
    for e, t in zip(batch.entries, got):
        assert t is items[e.slot]
        assert t.state is items[e.slot].state


def test_stale_entries_are_redrawn():
    q = ReplayQueue(capacity=6, modulus=7)
    for k in range(6):
        q.push(_t(k))
    rng = np.random.default_rng(3)
    batch = q.sample(4, rng)
    before = list(batch.entries)
    # overwrite the two oldest slots
    q.push(_t(6))
    q.push(_t(7))
    stale = [e for e in before if e.slot in (0, 1)]
    assert all(not batch.is_valid(e) for e in stale)
    got = batch.resolve()
    assert all(batch.is_valid(e) for e in batch.entries)
    assert len({e.slot for e in batch.entries}) == 4
    for e in before:
        if e not in stale:
            assert e in batch.entries
    for e, t in zip(batch.entries, got):
        assert t is q.frame(e.slot)


def test_oversample_rejected():
    q = ReplayQueue(capacity=5)
    q.push(_t(0))
    with pytest.raises(ValueError):
        q.sample(2, np.random.default_rng(0))
    with pytest.raises(IndexError):
        q.frame(3)


def test_sampling_uniformity():
    q = ReplayQueue(capacity=50)
    for k in range(50):
        q.push(_t(k))
    rng = np.random.default_rng(2024)
    counts = np.zeros(50)
    for _ in range(10_000):
        for e in q.sample(10, rng).entries:
            counts[e.slot] += 1
    assert counts.sum() == 100_000
    assert stats.chisquare(counts).pvalue > 0.001


def test_batches_have_distinct_slots():
    q = ReplayQueue(capacity=8)
    for k in range(8):
        q.push(_t(k))
    rng = np.random.default_rng(1)
    for _ in range(50):
        slots = [e.slot for e in q.sample(8, rng).entries]
        assert sorted(slots) == list(range(8))
