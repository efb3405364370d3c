import numpy as np
import pytest

from src.constants import (
    KIB,
    KIND_DELTA,
    KIND_ORIGINAL,
    KIND_RAW,
    UNIT_EMPTY,
    UNIT_RECYCLABLE,
    UNIT_RECYCLED,
    UNIT_RECYCLING,
)
from src.errors import IllegalTransitionError, InvalidParamsError, PoolExhaustedError
from src.modules.log_pool import BlockKey, LogPool, LogRecord
from tests.conftest import random_bytes

BLOCK = 256 * KIB
KEY = BlockKey(0, 0, "data")


def make_pool(capacity=64 * KIB, min_units=2, max_units=4, merge=True, **kw):
    return LogPool("test", unit_capacity=capacity, block_size=BLOCK,
                   min_units=min_units, max_units=max_units, merge=merge, **kw)


def rec(offset, payload, key=KEY, kind=KIND_RAW):
    return LogRecord(key, offset, payload, kind)


def drain_all(pool, deliveries):
    pool.flush()
    unit = pool.next_recyclable()
    while unit is not None:
        pool.recycle_unit(unit.unit_id, lambda k, ext: deliveries.append((k, ext)))
        unit = pool.next_recyclable()


# --- append / merge ---

def test_append_single_record():
    pool = make_pool()
    seq = pool.append(rec(0, bytes(8 * KIB)))
    assert seq == 0
    assert pool.active.used == 8 * KIB
    assert [(o, len(p)) for o, p in pool.active.merged_extents(KEY)] == [(0, 8 * KIB)]


def test_adjacent_records_concatenate(rng):
    pool = make_pool()
    a, b = random_bytes(rng, 8 * KIB), random_bytes(rng, 8 * KIB)
    pool.append(rec(0, a))
    pool.append(rec(8 * KIB, b))
    assert pool.active.merged_extents(KEY) == [(0, a + b)]


def test_same_extent_keeps_newest(rng):
    pool = make_pool()
    payloads = [random_bytes(rng, 4 * KIB) for _ in range(10)]
    for p in payloads:
        pool.append(rec(4 * KIB, p))
    assert pool.active.merged_extents(KEY) == [(4 * KIB, payloads[-1])]


def test_partial_overlap_splices_newest(rng):
    pool = make_pool()
    older, newer = random_bytes(rng, 8 * KIB), random_bytes(rng, 8 * KIB)
    pool.append(rec(0, older))
    pool.append(rec(4 * KIB, newer))
    assert pool.active.merged_extents(KEY) == [(0, older[:4 * KIB] + newer)]


def test_delta_records_fold_by_xor(rng):
    key = BlockKey(0, 0, "delta")
    pool = make_pool()
    a, b = random_bytes(rng, 4 * KIB), random_bytes(rng, 4 * KIB)
    pool.append(rec(0, a, key, KIND_DELTA))
    pool.append(rec(0, b, key, KIND_DELTA))
    [(offset, payload)] = pool.active.merged_extents(key)
    assert offset == 0
    assert payload == bytes(x ^ y for x, y in zip(a, b))


def test_original_records_keep_first(rng):
    key = BlockKey(0, 0, "orig")
    pool = make_pool()
    first, second = random_bytes(rng, 4 * KIB), random_bytes(rng, 8 * KIB)
    pool.append(rec(0, first, key, KIND_ORIGINAL))
    pool.append(rec(0, second, key, KIND_ORIGINAL))
    assert pool.active.merged_extents(key) == [(0, first + second[4 * KIB:])]


def test_disjoint_records_stay_apart():
    pool = make_pool()
    pool.append(rec(0, bytes(4 * KIB)))
    pool.append(rec(64 * KIB, bytes(4 * KIB)))
    assert [o for o, _ in pool.active.merged_extents(KEY)] == [0, 64 * KIB]


def test_merge_disabled_returns_raw_records(rng):
    pool = make_pool(merge=False)
    a, b = random_bytes(rng, 4 * KIB), random_bytes(rng, 4 * KIB)
    pool.append(rec(0, a))
    pool.append(rec(0, b))
    assert pool.active.merged_extents(KEY) == [(0, a), (0, b)]


def test_append_rejects_bad_records():
    pool = make_pool()
    with pytest.raises(InvalidParamsError):
        pool.append(rec(0, b""))
    with pytest.raises(InvalidParamsError):
        pool.append(rec(BLOCK - 10, bytes(20)))
    with pytest.raises(InvalidParamsError):
        pool.append(rec(0, bytes(128 * KIB)))
    pool.append(rec(0, bytes(16), kind=KIND_RAW))
    with pytest.raises(InvalidParamsError):
        pool.append(rec(0, bytes(16), kind=KIND_DELTA))


# --- rotation / state machine ---

def test_full_unit_rotates():
    pool = make_pool(capacity=8 * KIB)
    first = pool.active
    pool.append(rec(0, bytes(8 * KIB)))
    assert first.state == UNIT_RECYCLABLE
    assert pool.active is not first and pool.active.state == UNIT_EMPTY


def test_rotate_reuses_recycled_unit_and_frees_its_index():
    pool = make_pool(capacity=8 * KIB, min_units=2, max_units=2)
    pool.append(rec(0, bytes(8 * KIB)))
    old = pool.next_recyclable()
    pool.recycle_unit(old.unit_id, lambda k, e: None)
    assert old.state == UNIT_RECYCLED
    pool.append(rec(0, bytes(8 * KIB)))
    assert pool.active is old
    assert old.state == UNIT_EMPTY and old.is_empty
    assert KEY not in old.index


def test_rotate_grows_then_exhausts():
    pool = make_pool(capacity=4 * KIB, min_units=1, max_units=2)
    pool.append(rec(0, bytes(4 * KIB)))
    assert len(pool.units) == 2
    pool.append(rec(0, bytes(4 * KIB)))
    assert pool.exhausted
    with pytest.raises(PoolExhaustedError):
        pool.append(rec(0, bytes(4 * KIB)))
    assert not pool.can_append(4 * KIB)


def test_illegal_transitions():
    pool = make_pool()
    unit = pool.active
    with pytest.raises(IllegalTransitionError):
        unit.transition(UNIT_RECYCLING)
    with pytest.raises(IllegalTransitionError):
        pool.recycle_unit(unit.unit_id, lambda k, e: None)


def test_recycle_in_seal_order():
    pool = make_pool(capacity=4 * KIB, min_units=3, max_units=3)
    pool.append(rec(0, bytes(4 * KIB)))
    pool.append(rec(0, bytes(4 * KIB)))
    older, newer = pool.sealed_units()
    with pytest.raises(IllegalTransitionError):
        pool.recycle_unit(newer.unit_id, lambda k, e: None)
    pool.recycle_unit(older.unit_id, lambda k, e: None)
    pool.recycle_unit(newer.unit_id, lambda k, e: None)
    assert older.state == newer.state == UNIT_RECYCLED


def test_recycle_delivers_each_block_once():
    pool = make_pool()
    keys = [BlockKey(s, 0, "data") for s in range(3)]
    for key in keys:
        pool.append(rec(0, bytes(512), key))
        pool.append(rec(512, bytes(512), key))
    calls = []
    drain_all(pool, calls)
    assert sorted(k for k, _ in calls) == keys
    assert all(len(ext) == 1 for _, ext in calls)


def test_empty_flush_is_a_no_op():
    pool = make_pool()
    assert pool.flush() is None
    assert pool.next_recyclable() is None


def test_sink_failure_leaves_unit_recycling_and_retry_is_idempotent():
    pool = make_pool()
    keys = [BlockKey(s, 0, "data") for s in range(3)]
    for key in keys:
        pool.append(rec(0, bytes(512), key))
    pool.flush()
    unit = pool.next_recyclable()
    seen = []
    failures = [RuntimeError("sink down")]

    def flaky(key, extents):
        if key == keys[1] and failures:
            raise failures.pop()
        seen.append(key)

    with pytest.raises(RuntimeError):
        pool.recycle_unit(unit.unit_id, flaky)
    assert unit.state == UNIT_RECYCLING
    pool.recycle_unit(unit.unit_id, flaky)
    assert unit.state == UNIT_RECYCLED
    assert sorted(seen) == keys


def test_recycle_records_residence():
    samples = []
    pool = make_pool(residence=samples)
    pool.append(LogRecord(KEY, 0, bytes(512), appended_at=100))
    pool.append(LogRecord(KEY, 512, bytes(512), appended_at=300))
    pool.flush()
    pool.recycle_unit(pool.next_recyclable().unit_id, lambda k, e: None, now_us=1000)
    assert samples == [900, 700]


# --- lookup ---

def test_lookup_hit_and_miss(rng):
    pool = make_pool()
    payload = random_bytes(rng, 8 * KIB)
    pool.append(rec(16 * KIB, payload))
    assert pool.lookup(KEY, 16 * KIB, 8 * KIB) == payload
    assert pool.lookup(KEY, 20 * KIB, 2 * KIB) == payload[4 * KIB:6 * KIB]
    assert pool.lookup(KEY, 20 * KIB, 8 * KIB) is None
    assert pool.lookup(KEY, 100 * KIB, 4 * KIB) is None
    assert pool.lookup(BlockKey(9, 9, "data"), 16 * KIB, 4 * KIB) is None


def test_lookup_prefers_newest_unit_including_recycled(rng):
    pool = make_pool(capacity=8 * KIB)
    old, new = random_bytes(rng, 8 * KIB), random_bytes(rng, 4 * KIB)
    pool.append(rec(0, old))
    pool.recycle_unit(pool.next_recyclable().unit_id, lambda k, e: None)
    pool.append(rec(4 * KIB, new))
    assert pool.lookup(KEY, 0, 8 * KIB) == old[:4 * KIB] + new


def test_overlay_lays_records_over_base(rng):
    pool = make_pool()
    base = random_bytes(rng, 8 * KIB)
    patch = random_bytes(rng, 1 * KIB)
    pool.append(rec(2 * KIB, patch))
    got = pool.overlay(KEY, 0, base)
    assert got == base[:2 * KIB] + patch + base[3 * KIB:]


# --- sizing ---

def test_resize_shrinks_idle_pool_to_min():
    pool = make_pool(capacity=4 * KIB, min_units=2, max_units=6)
    for _ in range(6):
        pool.append(rec(0, bytes(4 * KIB)))
    assert len(pool.units) == 6
    drain_all(pool, [])
    pool.resize(0)
    assert len(pool.units) == 2
    assert pool.active is not None


def test_resize_keeps_saturated_pool_at_quota():
    pool = make_pool(capacity=4 * KIB, min_units=2, max_units=4)
    for _ in range(4):
        pool.append(rec(0, bytes(4 * KIB)))
    pool.resize(10)
    assert len(pool.units) == 4


def test_resize_within_bounds_changes_nothing():
    pool = make_pool(min_units=2, max_units=4)
    pool.resize(2)
    assert len(pool.units) == 2


def test_expand_stops_at_hard_max():
    pool = make_pool(min_units=1, max_units=2, hard_max_units=3)
    assert pool.expand()
    assert not pool.expand()
    assert pool.max_units == 3


# --- randomized properties ---

def _replay(shadow, offset, payload, kind):
    data = np.frombuffer(payload, dtype=np.uint8)
    if kind == KIND_DELTA:
        shadow[offset:offset + len(data)] ^= data
    else:
        shadow[offset:offset + len(data)] = data


def check_merged_workload(seed, kind):
    rng = np.random.default_rng(seed)
    key = BlockKey(0, 0, "delta" if kind == KIND_DELTA else "data")
    pool = make_pool(capacity=BLOCK)
    expected = np.zeros(BLOCK // 8, dtype=np.uint8)
    for _ in range(60):
        offset = int(rng.integers(0, 60)) * 256
        payload = random_bytes(rng, int(rng.integers(1, 9)) * 256)
        pool.append(rec(offset, payload, key, kind))
        _replay(expected, offset, payload, kind)

    extents = pool.active.merged_extents(key)
    got = np.zeros_like(expected)
    for offset, payload in extents:
        _replay(got, offset, payload, kind)
    assert np.array_equal(got, expected)
    # minimal cover: no two extents overlap or touch
    for (o1, p1), (o2, _) in zip(extents, extents[1:]):
        assert o1 + len(p1) < o2


def check_random_interleaving(seed, n_ops):
    rng = np.random.default_rng(seed)
    keys = [BlockKey(0, i, "data") for i in range(3)]
    pool = make_pool(capacity=8 * KIB, min_units=2, max_units=4)
    expected = {k: np.zeros(32 * KIB, dtype=np.uint8) for k in keys}
    delivered = {k: np.zeros(32 * KIB, dtype=np.uint8) for k in keys}

    def sink(key, extents):
        for offset, payload in extents:
            _replay(delivered[key], offset, payload, KIND_RAW)

    for _ in range(n_ops):
        op = rng.random()
        if op < 0.6:
            key = keys[int(rng.integers(3))]
            offset = int(rng.integers(0, 28)) * 1024
            payload = random_bytes(rng, int(rng.integers(1, 5)) * 1024)
            try:
                pool.append(rec(offset, payload, key))
            except PoolExhaustedError:
                unit = pool.next_recyclable()
                pool.recycle_unit(unit.unit_id, sink)
                pool.append(rec(offset, payload, key))
            _replay(expected[key], offset, payload, KIND_RAW)
        elif op < 0.75:
            pool.flush()
        elif op < 0.95:
            unit = pool.next_recyclable()
            if unit is not None:
                pool.recycle_unit(unit.unit_id, sink)
        else:
            pool.resize(int(rng.integers(0, 6)))

        active = [u for u in pool.units if u is pool.active]
        assert len(active) <= 1
        assert pool.min_units <= len(pool.units) <= pool.max_units
        for unit in pool.units:
            assert unit.state in (UNIT_EMPTY, UNIT_RECYCLABLE, UNIT_RECYCLING, UNIT_RECYCLED)
        if pool.active is not None:
            assert pool.active.state == UNIT_EMPTY

    drain_all_units = []
    drain_all(pool, drain_all_units)
    for key, extents in drain_all_units:
        sink(key, extents)
    for key in keys:
        assert np.array_equal(delivered[key], expected[key])


@pytest.mark.parametrize("kind", [KIND_RAW, KIND_DELTA])
@pytest.mark.parametrize("seed", range(10))
def test_merged_extents_match_byte_replay(seed, kind):
    check_merged_workload(seed, kind)


@pytest.mark.parametrize("seed", range(20))
def test_random_interleavings_keep_invariants(seed):
    check_random_interleaving(seed, 400)


@pytest.mark.slow
@pytest.mark.parametrize("kind", [KIND_RAW, KIND_DELTA])
def test_merged_extents_on_ten_thousand_workloads(kind):
    for seed in range(10_000):
        check_merged_workload(seed, kind)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100))
def test_long_random_interleavings_keep_invariants(seed):
    check_random_interleaving(seed, 100_000)


def test_lookup_never_stale_under_random_appends():
    rng = np.random.default_rng(7)
    pool = make_pool(capacity=16 * KIB, min_units=2, max_units=3)
    shadow = np.zeros(64 * KIB, dtype=np.uint8)
    for _ in range(300):
        offset = int(rng.integers(0, 60)) * 1024
        payload = random_bytes(rng, int(rng.integers(1, 5)) * 1024)
        if not pool.can_append(len(payload)):
            pool.recycle_unit(pool.next_recyclable().unit_id, lambda k, e: None)
        pool.append(rec(offset, payload))
        _replay(shadow, offset, payload, KIND_RAW)

        lo = int(rng.integers(0, 60)) * 1024
        n = int(rng.integers(1, 5)) * 1024
        got = pool.lookup(KEY, lo, n)
        if got is not None:
            assert got == shadow[lo:lo + n].tobytes()
