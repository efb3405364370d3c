"""
Block-level traces: parsing, writing, synthetic generation, and mapping
trace records onto stripe requests.

Trace lines are ``timestamp_us,volume_id,offset_bytes,size_bytes,op``
with op R or W; files ending in ``.gz`` are read and written through gzip.
"""
import gzip
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
from bitarray import bitarray

from src.constants import (
    DEFAULT_INTERARRIVAL_US,
    DEFAULT_VOLUME_BYTES,
    KIB,
    SECTOR_SIZE,
    TRACE_FIELDS,
    TRACE_OP_READ,
    TRACE_OP_WRITE,
)
from src.errors import AddressRangeError, InvalidParamsError, TraceFormatError
from src.logger import get_logger
from src.modules.io_request import FillRequest, ReadRequest, UpdateRequest

logger = get_logger(__name__)

Request = Union[FillRequest, UpdateRequest, ReadRequest]


@dataclass(frozen=True)
class TraceRecord:
    timestamp_us: int
    volume_id: str
    offset: int
    size: int
    op: str

    @property
    def end(self) -> int:
        return self.offset + self.size

    @property
    def is_write(self) -> bool:
        return self.op == TRACE_OP_WRITE


# --- text format ---

def _int_field(name: str, raw: str, line_no: Optional[int]) -> int:
    try:
        return int(raw)
    except ValueError:
        raise TraceFormatError(name, f"not an integer: {raw!r}", line_no) from None


def parse_line(text: str, line_no: Optional[int] = None) -> TraceRecord:
    """
    Parse one trace line. Fields are checked left to right; the first bad
    one is named in the raised TraceFormatError.
    """
    parts = [p.strip() for p in text.strip().split(",")]
    if len(parts) != len(TRACE_FIELDS):
        raise TraceFormatError(
            "line", f"expected {len(TRACE_FIELDS)} fields, got {len(parts)}", line_no
        )
    ts_raw, volume_id, off_raw, size_raw, op = parts

    timestamp_us = _int_field("timestamp_us", ts_raw, line_no)
    if timestamp_us < 0:
        raise TraceFormatError("timestamp_us", "negative timestamp", line_no)
    if not volume_id:
        raise TraceFormatError("volume_id", "empty volume id", line_no)
    offset = _int_field("offset", off_raw, line_no)
    if offset < 0 or offset % SECTOR_SIZE:
        raise TraceFormatError("offset", f"{offset} is not a non-negative multiple of {SECTOR_SIZE}", line_no)
    size = _int_field("size", size_raw, line_no)
    if size <= 0:
        raise TraceFormatError("size", f"size must be positive, got {size}", line_no)
    op = op.upper()
    if op not in (TRACE_OP_READ, TRACE_OP_WRITE):
        raise TraceFormatError("op", f"unknown op {parts[4]!r}", line_no)
    return TraceRecord(timestamp_us, volume_id, offset, size, op)


def format_line(rec: TraceRecord) -> str:
    return f"{rec.timestamp_us},{rec.volume_id},{rec.offset},{rec.size},{rec.op}"


def _open(path: str, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _skippable(line: str) -> bool:
    stripped = line.strip()
    return not stripped or stripped.startswith("#") or stripped.startswith(TRACE_FIELDS[0])


def read_trace(path: str) -> Iterator[TraceRecord]:
    with _open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            if _skippable(line):
                continue
            yield parse_line(line, line_no)


def write_trace(path: str, records: Iterable[TraceRecord]) -> int:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    count = 0
    with _open(path, "w") as f:
        for rec in records:
            f.write(format_line(rec) + "\n")
            count += 1
    logger.info(f"wrote {count} trace records to {path}")
    return count


# --- volume mapping ---

class VolumeMapping:
    """
    Linear volume layout: each volume owns a contiguous range of stripes,
    and volumes take slots in order of first appearance.
    """

    def __init__(self, cfg):
        self.ec = cfg.ec
        self.volume_bytes = cfg.volume_bytes
        self.slots = cfg.volume_slots
        self.stripe_bytes = cfg.ec.stripe_bytes
        self.stripes_per_volume = math.ceil(self.volume_bytes / self.stripe_bytes)
        self._slots: Dict[str, int] = {}

    def slot_of(self, volume_id: str) -> int:
        slot = self._slots.get(volume_id)
        if slot is None:
            if len(self._slots) >= self.slots:
                raise AddressRangeError(
                    f"volume {volume_id!r} needs slot {len(self._slots)} but only {self.slots} are configured"
                )
            slot = len(self._slots)
            self._slots[volume_id] = slot
        return slot

    def locate(self, volume_id: str, offset: int) -> Tuple[int, int, int]:
        """(stripe_id, block_index, block_offset) of one volume byte."""
        if offset >= self.volume_bytes:
            raise AddressRangeError(f"offset {offset} beyond volume of {self.volume_bytes} bytes")
        stripe = self.slot_of(volume_id) * self.stripes_per_volume + offset // self.stripe_bytes
        within = offset % self.stripe_bytes
        return stripe, within // self.ec.block_size, within % self.ec.block_size

    def pieces(self, rec: TraceRecord) -> Iterator[Tuple[int, int, int, int]]:
        """Split a record at block boundaries: (stripe, block, offset, length)."""
        if rec.end > self.volume_bytes:
            raise AddressRangeError(
                f"{rec.volume_id}: [{rec.offset}, {rec.end}) beyond volume of {self.volume_bytes} bytes"
            )
        pos = rec.offset
        while pos < rec.end:
            stripe, block, block_offset = self.locate(rec.volume_id, pos)
            n = min(rec.end - pos, self.ec.block_size - block_offset)
            yield stripe, block, block_offset, n
            pos += n


def _runs(bits: bitarray, lo: int, hi: int) -> Iterator[Tuple[bool, int, int]]:
    """Maximal runs of equal bits in [lo, hi)."""
    start = lo
    while start < hi:
        value = bits[start]
        end = start + 1
        while end < hi and bits[end] == value:
            end += 1
        yield bool(value), start, end
        start = end


def map_to_updates(records: Iterable[TraceRecord], cfg, mapping: Optional[VolumeMapping] = None,
                   payload_seed: int = 0) -> Iterator[Request]:
    """
    Turn trace records into requests.

    Writes on never-written sectors become FillRequests, writes on written
    sectors become UpdateRequests, reads become ReadRequests. Every request
    stays inside one block. Payload bytes come from a seeded generator.
    """
    mapping = mapping or VolumeMapping(cfg)
    rng = np.random.default_rng(payload_seed)
    sectors = cfg.ec.block_size // SECTOR_SIZE
    seen: Dict[Tuple[int, int], bitarray] = {}

    for rec in records:
        for stripe, block, offset, length in mapping.pieces(rec):
            if not rec.is_write:
                yield ReadRequest(stripe, block, offset, length, rec.timestamp_us)
                continue
            bits = seen.get((stripe, block))
            if bits is None:
                bits = bitarray(sectors)
                bits.setall(0)
                seen[(stripe, block)] = bits
            end = offset + length
            lo = offset // SECTOR_SIZE
            hi = (end - 1) // SECTOR_SIZE + 1
            for was_seen, a, b in list(_runs(bits, lo, hi)):
                run_lo = max(offset, a * SECTOR_SIZE)
                run_hi = min(end, b * SECTOR_SIZE)
                payload = rng.integers(0, 256, size=run_hi - run_lo, dtype=np.uint8).tobytes()
                cls = UpdateRequest if was_seen else FillRequest
                yield cls(stripe, block, run_lo, payload, rec.timestamp_us)
            bits[lo:hi] = 1


# --- synthetic workloads ---

SMALL_SIZES = (4 * KIB,)
MEDIUM_SIZES = (8 * KIB, 12 * KIB, 16 * KIB)
LARGE_SIZES = (32 * KIB, 64 * KIB, 128 * KIB)
SIZE_CLASSES = (SMALL_SIZES, MEDIUM_SIZES, LARGE_SIZES)
ALIGN = 4 * KIB


@dataclass
class SynthParams:
    """
    Synthetic workload shape.

    frac_4k / frac_16k are cumulative: the share of writes of at most
    4 KiB and at most 16 KiB. repeat_ratio is the share of writes that hit
    an earlier extent of the same size class, drawn from the oldest
    working_set_fraction of those extents. adjacency_ratio is the share of
    the remaining writes placed right after the previous write.
    """

    total_ops: int
    frac_4k: float = 0.46
    frac_16k: float = 0.60
    repeat_ratio: float = 0.75
    adjacency_ratio: float = 0.3
    working_set_fraction: float = 0.05
    seed: int = 0
    read_ratio: float = 0.0
    volume_id: str = "vol0"
    volume_bytes: int = DEFAULT_VOLUME_BYTES
    mean_interarrival_us: float = DEFAULT_INTERARRIVAL_US

    def validate(self) -> None:
        if self.total_ops < 0:
            raise InvalidParamsError(f"total_ops must be >= 0, got {self.total_ops}")
        for name in ("frac_4k", "frac_16k", "repeat_ratio", "adjacency_ratio", "read_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParamsError(f"{name} must be in [0, 1], got {value}")
        if self.frac_4k > self.frac_16k:
            raise InvalidParamsError("frac_4k cannot exceed frac_16k")
        if not 0.0 < self.working_set_fraction <= 1.0:
            raise InvalidParamsError("working_set_fraction must be in (0, 1]")
        if self.volume_bytes < max(LARGE_SIZES):
            raise InvalidParamsError(f"volume of {self.volume_bytes} bytes is too small")
        if self.mean_interarrival_us < 0:
            raise InvalidParamsError("mean_interarrival_us must be >= 0")


PROFILES: Dict[str, dict] = {
    "ali": dict(frac_4k=0.46, frac_16k=0.60, repeat_ratio=0.75, adjacency_ratio=0.3,
                working_set_fraction=0.05),
    "ten": dict(frac_4k=0.69, frac_16k=0.88, repeat_ratio=0.69, adjacency_ratio=0.3,
                working_set_fraction=0.02),
    "msr": dict(frac_4k=0.60, frac_16k=0.90, repeat_ratio=0.90, adjacency_ratio=0.2,
                working_set_fraction=0.05, read_ratio=0.3),
}


def profile_params(name: str, total_ops: int, seed: int = 0, **overrides) -> SynthParams:
    if name not in PROFILES:
        raise InvalidParamsError(f"unknown profile {name!r} (choose from {', '.join(PROFILES)})")
    values = dict(PROFILES[name])
    values.update(overrides)
    return SynthParams(total_ops=total_ops, seed=seed, **values)


@dataclass
class _History:
    extents: List[List[Tuple[int, int]]] = field(default_factory=lambda: [[] for _ in SIZE_CLASSES])
    last_end: Optional[int] = None


def generate(params: SynthParams) -> Iterator[TraceRecord]:
    """Seeded synthetic trace; identical params give an identical stream."""
    params.validate()
    rng = np.random.default_rng(params.seed)
    hist = _History()
    now = 0
    written: List[Tuple[int, int]] = []

    for _ in range(params.total_ops):
        now += int(rng.exponential(params.mean_interarrival_us)) if params.mean_interarrival_us else 0

        if params.read_ratio and rng.random() < params.read_ratio:
            if written:
                offset, size = written[int(rng.integers(len(written)))]
            else:
                size = ALIGN
                offset = _random_offset(rng, params.volume_bytes, size)
            yield TraceRecord(now, params.volume_id, offset, size, TRACE_OP_READ)
            continue

        u = rng.random()
        cls = 0 if u < params.frac_4k else (1 if u < params.frac_16k else 2)
        pool = hist.extents[cls]

        if pool and rng.random() < params.repeat_ratio:
            hot = max(1, math.ceil(len(pool) * params.working_set_fraction))
            offset, size = pool[int(rng.integers(hot))]
        else:
            sizes = SIZE_CLASSES[cls]
            size = sizes[int(rng.integers(len(sizes)))]
            adjacent = hist.last_end is not None and rng.random() < params.adjacency_ratio
            if adjacent and hist.last_end + size <= params.volume_bytes:
                offset = hist.last_end
            else:
                offset = _random_offset(rng, params.volume_bytes, size)
            pool.append((offset, size))
            written.append((offset, size))

        hist.last_end = offset + size
        yield TraceRecord(now, params.volume_id, offset, size, TRACE_OP_WRITE)


def _random_offset(rng, volume_bytes: int, size: int) -> int:
    return int(rng.integers((volume_bytes - size) // ALIGN + 1)) * ALIGN
