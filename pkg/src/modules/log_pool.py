"""
FIFO log pools.

A pool is a queue of fixed-capacity units. Exactly one unit is active
and takes appends; a full (or flushed) unit is sealed RECYCLABLE, drained
block by block into a sink while RECYCLING, then kept as RECYCLED so its
records still serve reads until the unit is reused.

Each unit indexes its records per block key with an offset-sorted list
of non-overlapping, non-adjacent extents plus a page bitmap.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Hashable, List, NamedTuple, Optional, Tuple

import numpy as np
from bitarray import bitarray
from sortedcontainers import SortedKeyList

from src.constants import (
    KIND_DELTA,
    KIND_ORIGINAL,
    KIND_PARITY_DELTA,
    KIND_RAW,
    PAGE_SIZE,
    RECORD_KINDS,
    UNIT_EMPTY,
    UNIT_RECYCLABLE,
    UNIT_RECYCLED,
    UNIT_RECYCLING,
    UNIT_TRANSITIONS,
)
from src.errors import IllegalTransitionError, InvalidParamsError, PoolExhaustedError
from src.logger import get_logger

logger = get_logger(__name__)

XOR_KINDS = (KIND_DELTA, KIND_PARITY_DELTA)


class BlockKey(NamedTuple):
    stripe_id: int
    index: int
    layer: str


@dataclass(frozen=True)
class LogRecord:
    block_key: Hashable
    offset: int
    payload: bytes
    kind: str = KIND_RAW
    seq: int = -1
    appended_at: int = 0

    @property
    def end(self) -> int:
        return self.offset + len(self.payload)


class Extent:
    __slots__ = ("offset", "data")

    def __init__(self, offset: int, data: np.ndarray):
        self.offset = offset
        self.data = data

    @property
    def end(self) -> int:
        return self.offset + len(self.data)


def _merge_into(extents: SortedKeyList, offset: int, payload: bytes, kind: str) -> None:
    """Insert one record, splicing overlapping or adjacent extents."""
    new = np.frombuffer(payload, dtype=np.uint8)
    end = offset + len(new)

    # extents are disjoint and sorted, so one predecessor may still reach offset
    touching = []
    start = extents.bisect_key_left(offset)
    if start > 0 and extents[start - 1].end >= offset:
        start -= 1
    for i in range(start, len(extents)):
        ext = extents[i]
        if ext.offset > end:
            break
        touching.append(ext)

    if not touching:
        extents.add(Extent(offset, new.copy()))
        return

    lo = min(offset, touching[0].offset)
    hi = max(end, touching[-1].end)
    buf = np.zeros(hi - lo, dtype=np.uint8)

    if kind == KIND_ORIGINAL:
        # first writer wins: older bytes go on top
        buf[offset - lo:end - lo] = new
        for ext in touching:
            buf[ext.offset - lo:ext.end - lo] = ext.data
    else:
        for ext in touching:
            buf[ext.offset - lo:ext.end - lo] = ext.data
        if kind in XOR_KINDS:
            buf[offset - lo:end - lo] ^= new
        else:
            buf[offset - lo:end - lo] = new

    for ext in touching:
        extents.remove(ext)
    extents.add(Extent(lo, buf))


class BlockIndex:
    """Two-level index: block key -> offset-sorted extents, plus page bitmap."""

    def __init__(self, block_size: int):
        self.block_size = block_size
        self.pages = block_size // PAGE_SIZE
        self._extents: Dict[Hashable, SortedKeyList] = {}
        self._bitmaps: Dict[Hashable, bitarray] = {}
        self._kinds: Dict[Hashable, str] = {}

    def __contains__(self, key) -> bool:
        return key in self._extents

    def keys(self):
        return list(self._extents)

    def insert(self, rec: LogRecord) -> None:
        kind = self._kinds.setdefault(rec.block_key, rec.kind)
        if kind != rec.kind:
            raise InvalidParamsError(
                f"block {rec.block_key} already holds {kind} records, got {rec.kind}"
            )
        extents = self._extents.get(rec.block_key)
        if extents is None:
            extents = SortedKeyList(key=lambda e: e.offset)
            self._extents[rec.block_key] = extents
            bits = bitarray(self.pages)
            bits.setall(0)
            self._bitmaps[rec.block_key] = bits
        _merge_into(extents, rec.offset, rec.payload, kind)
        self._bitmaps[rec.block_key][rec.offset // PAGE_SIZE:(rec.end - 1) // PAGE_SIZE + 1] = 1

    def extents(self, key) -> List[Extent]:
        return list(self._extents.get(key, ()))

    def kind(self, key) -> Optional[str]:
        return self._kinds.get(key)

    def may_cover(self, key, offset: int, length: int) -> bool:
        """Bitmap shortcut: False means no extent touches the range."""
        bits = self._bitmaps.get(key)
        if bits is None:
            return False
        return bits[offset // PAGE_SIZE:(offset + length - 1) // PAGE_SIZE + 1].any()

    def bitmap(self, key) -> Optional[bitarray]:
        return self._bitmaps.get(key)

    def overlay(self, key, offset: int, buf: np.ndarray, covered: np.ndarray, fill_covered: bool) -> None:
        """Copy this index's bytes for ``key`` into ``buf``."""
        extents = self._extents.get(key)
        if not extents:
            return
        end = offset + len(buf)
        i = extents.bisect_key_left(offset)
        if i > 0 and extents[i - 1].end > offset:
            i -= 1
        for ext in extents.islice(i):
            if ext.offset >= end:
                break
            lo = max(offset, ext.offset)
            hi = min(end, ext.end)
            if lo >= hi:
                continue
            src = ext.data[lo - ext.offset:hi - ext.offset]
            if fill_covered:
                buf[lo - offset:hi - offset] = src
            else:
                window = ~covered[lo - offset:hi - offset]
                buf[lo - offset:hi - offset][window] = src[window]
            covered[lo - offset:hi - offset] = True

    def clear(self) -> None:
        self._extents.clear()
        self._bitmaps.clear()
        self._kinds.clear()


@dataclass
class LogUnit:
    unit_id: int
    capacity: int
    block_size: int
    merge: bool = True
    state: str = UNIT_EMPTY
    used: int = 0
    generation: int = 0
    seal_order: int = -1
    opened_at: Optional[int] = None
    records: List[LogRecord] = field(default_factory=list)
    index: BlockIndex = None
    delivered: set = field(default_factory=set)

    def __post_init__(self):
        if self.index is None:
            self.index = BlockIndex(self.block_size)

    def transition(self, new_state: str) -> None:
        if UNIT_TRANSITIONS.get(self.state) != new_state:
            raise IllegalTransitionError(
                f"unit {self.unit_id}: {self.state} -> {new_state} is not allowed"
            )
        self.state = new_state

    @property
    def is_empty(self) -> bool:
        return not self.records

    def fits(self, nbytes: int) -> bool:
        return self.used + nbytes <= self.capacity

    def age_us(self, now_us: int) -> int:
        return 0 if self.opened_at is None else now_us - self.opened_at

    def block_keys(self) -> List[Hashable]:
        return sorted(self.index.keys())

    def max_seq(self) -> int:
        return self.records[-1].seq if self.records else -1

    def merged_extents(self, block_key) -> List[Tuple[int, bytes]]:
        """
        Minimal extent cover for one block, in offset order.

        With merging disabled the raw records come back one by one in
        sequence order.
        """
        if not self.merge:
            return [(r.offset, r.payload) for r in self.records if r.block_key == block_key]
        return [(e.offset, e.data.tobytes()) for e in self.index.extents(block_key)]

    def reset(self) -> None:
        self.records = []
        self.index.clear()
        self.delivered = set()
        self.used = 0
        self.opened_at = None
        self.seal_order = -1


Sink = Callable[[Hashable, List[Tuple[int, bytes]]], None]


class LogPool:
    def __init__(
        self,
        pool_id,
        unit_capacity: int,
        block_size: int,
        min_units: int = 2,
        max_units: int = 4,
        hard_max_units: Optional[int] = None,
        merge: bool = True,
        residence: Optional[List[int]] = None,
    ):
        if min_units < 1 or max_units < min_units:
            raise InvalidParamsError(f"pool {pool_id}: need 1 <= min_units <= max_units")
        self.pool_id = pool_id
        self.unit_capacity = unit_capacity
        self.block_size = block_size
        self.min_units = min_units
        self.quota = max_units
        self.max_units = max_units
        self.hard_max_units = max(hard_max_units or max_units, max_units)
        self.merge = merge
        self.residence = residence if residence is not None else []

        self.units: List[LogUnit] = []
        self.active: Optional[LogUnit] = None
        self._next_unit_id = 0
        self._next_seq = 0
        self._generation = 0
        self._seal_counter = 0

        for _ in range(min_units):
            self._new_unit()
        self._activate(self.units[0])

    # --- unit bookkeeping ---

    def _new_unit(self) -> LogUnit:
        unit = LogUnit(self._next_unit_id, self.unit_capacity, self.block_size, merge=self.merge)
        self._next_unit_id += 1
        self.units.append(unit)
        return unit

    def _activate(self, unit: LogUnit) -> None:
        self._generation += 1
        unit.generation = self._generation
        # active unit sits at the tail of the queue
        self.units.remove(unit)
        self.units.append(unit)
        self.active = unit

    def _spare(self) -> Optional[LogUnit]:
        for unit in self.units:
            if unit.state == UNIT_EMPTY and unit is not self.active:
                return unit
        recycled = [u for u in self.units if u.state == UNIT_RECYCLED]
        if recycled:
            return min(recycled, key=lambda u: u.seal_order)
        return None

    def has_room(self) -> bool:
        return self._spare() is not None or len(self.units) < self.max_units

    def can_append(self, nbytes: int) -> bool:
        if nbytes > self.unit_capacity:
            return False
        if self.active is not None and self.active.fits(nbytes):
            return True
        return self.has_room()

    def unit(self, unit_id: int) -> LogUnit:
        for u in self.units:
            if u.unit_id == unit_id:
                return u
        raise KeyError(f"pool {self.pool_id} has no unit {unit_id}")

    def units_in_state(self, state: str) -> List[LogUnit]:
        return sorted((u for u in self.units if u.state == state), key=lambda u: u.seal_order)

    def sealed_units(self) -> List[LogUnit]:
        return sorted(
            (u for u in self.units if u.state in (UNIT_RECYCLABLE, UNIT_RECYCLING)),
            key=lambda u: u.seal_order,
        )

    def next_recyclable(self) -> Optional[LogUnit]:
        """Oldest sealed unit, which is the only one allowed to recycle."""
        sealed = self.sealed_units()
        return sealed[0] if sealed else None

    @property
    def exhausted(self) -> bool:
        return self.active is None

    def pending_bytes(self) -> int:
        return sum(u.used for u in self.units if u.state in (UNIT_EMPTY, UNIT_RECYCLABLE, UNIT_RECYCLING))

    def has_pending(self) -> bool:
        if self.sealed_units():
            return True
        return self.active is not None and not self.active.is_empty

    # --- operations ---

    def append(self, rec: LogRecord) -> int:
        size = len(rec.payload)
        if size == 0:
            raise InvalidParamsError("empty log record")
        if rec.offset < 0 or rec.end > self.block_size:
            raise InvalidParamsError(
                f"record [{rec.offset}, {rec.end}) outside block of {self.block_size} bytes"
            )
        if rec.kind not in RECORD_KINDS:
            raise InvalidParamsError(f"unknown record kind {rec.kind}")
        if size > self.unit_capacity:
            raise InvalidParamsError(f"record of {size} bytes exceeds unit capacity")

        if self.active is None:
            self.rotate()
        if self.active is not None and not self.active.fits(size):
            self.rotate()
        if self.active is None:
            raise PoolExhaustedError(f"pool {self.pool_id} has no free unit")

        unit = self.active
        seq = self._next_seq
        self._next_seq += 1
        stored = replace(rec, seq=seq)
        if unit.opened_at is None:
            unit.opened_at = rec.appended_at
        unit.index.insert(stored)
        unit.records.append(stored)
        unit.used += size

        if unit.used >= unit.capacity:
            self.rotate()
        return seq

    def rotate(self) -> Optional[int]:
        """
        Seal the active unit and activate the next one.

        Returns the new active unit id, or None when the pool is exhausted
        (the next append then raises PoolExhaustedError).
        """
        if self.active is not None:
            sealed = self.active
            sealed.transition(UNIT_RECYCLABLE)
            self._seal_counter += 1
            sealed.seal_order = self._seal_counter
            self.active = None
            logger.debug(f"pool {self.pool_id}: sealed unit {sealed.unit_id} ({sealed.used} bytes)")

        nxt = self._spare()
        if nxt is not None and nxt.state == UNIT_RECYCLED:
            nxt.transition(UNIT_EMPTY)
            nxt.reset()
        elif nxt is None and len(self.units) < self.max_units:
            nxt = self._new_unit()
        if nxt is None:
            return None
        self._activate(nxt)
        return nxt.unit_id

    def flush(self) -> Optional[int]:
        """Seal the active unit if it holds anything."""
        if self.active is None or self.active.is_empty:
            return None
        sealed_id = self.active.unit_id
        self.rotate()
        return sealed_id

    def recycle_unit(self, unit_id: int, sink: Sink, now_us: Optional[int] = None) -> None:
        unit = self.unit(unit_id)
        if unit.state == UNIT_RECYCLABLE:
            older = [u for u in self.sealed_units() if u.seal_order < unit.seal_order]
            if older:
                raise IllegalTransitionError(
                    f"unit {unit_id} cannot recycle before older unit {older[0].unit_id}"
                )
            unit.transition(UNIT_RECYCLING)
        elif unit.state != UNIT_RECYCLING:
            raise IllegalTransitionError(f"unit {unit_id} is {unit.state}, not sealed")

        for key in unit.block_keys():
            if key in unit.delivered:
                continue
            sink(key, unit.merged_extents(key))
            unit.delivered.add(key)

        if now_us is not None:
            self.residence.extend(now_us - r.appended_at for r in unit.records)
        unit.transition(UNIT_RECYCLED)
        logger.debug(f"pool {self.pool_id}: recycled unit {unit_id} ({len(unit.records)} records)")

    def lookup(self, block_key, offset: int, length: int) -> Optional[bytes]:
        """Newest bytes for the whole range, or None on any uncovered byte."""
        buf = np.zeros(length, dtype=np.uint8)
        covered = np.zeros(length, dtype=bool)
        for unit in sorted(self.units, key=lambda u: u.generation, reverse=True):
            if unit.is_empty or not unit.index.may_cover(block_key, offset, length):
                continue
            unit.index.overlay(block_key, offset, buf, covered, fill_covered=False)
            if covered.all():
                return buf.tobytes()
        return None

    def overlay(self, block_key, offset: int, base: bytes) -> bytes:
        """Lay every retained record for the range over ``base``, oldest first."""
        buf = np.array(np.frombuffer(base, dtype=np.uint8), copy=True)
        covered = np.zeros(len(buf), dtype=bool)
        for unit in sorted(self.units, key=lambda u: u.generation):
            if unit.is_empty or not unit.index.may_cover(block_key, offset, len(buf)):
                continue
            unit.index.overlay(block_key, offset, buf, covered, fill_covered=True)
        return buf.tobytes()

    def expand(self) -> bool:
        """Raise the unit quota by one, up to the hard maximum."""
        if self.max_units >= self.hard_max_units:
            return False
        self.max_units += 1
        logger.debug(f"pool {self.pool_id}: quota raised to {self.max_units}")
        return True

    def resize(self, demand_hint: int) -> None:
        target = max(self.min_units, min(demand_hint, self.max_units))
        while len(self.units) > target:
            victim = None
            recycled = self.units_in_state(UNIT_RECYCLED)
            if recycled:
                victim = recycled[0]
            else:
                idle = [u for u in self.units if u.state == UNIT_EMPTY and u is not self.active]
                if idle:
                    victim = idle[0]
            if victim is None:
                break
            self.units.remove(victim)
        while len(self.units) < target:
            self._new_unit()
        if self.active is None:
            self.rotate()
        self.max_units = max(self.quota, len(self.units))

    def pending_records(self) -> List[LogRecord]:
        """Records not yet recycled, in sequence order."""
        out = []
        for unit in self.units:
            if unit.state in (UNIT_EMPTY, UNIT_RECYCLABLE, UNIT_RECYCLING):
                out.extend(unit.records)
        return sorted(out, key=lambda r: r.seq)
