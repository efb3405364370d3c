"""
Speculative parity logging.

The data node overwrites in place and forwards the raw new bytes to every
parity host. The first time an address is touched since the parity logs
last drained, the node also reads and forwards the original bytes, so the
parity host can compute the delta when it recycles.
"""
from typing import Dict, List, Tuple

import numpy as np
from bitarray import bitarray

from src.constants import (
    KIND_ORIGINAL,
    KIND_RAW,
    LAYER_PARITY,
    MSG_FORWARD,
    MSG_ORIGINAL,
    SECTOR_SIZE,
    STRATEGY_PARIX,
)
from src.errors import BackPressureError, StallError
from src.logger import get_logger
from src.modules.gf_codec import gf_mul_bytes, xor_bytes
from src.modules.log_pool import BlockKey, LogPool, LogRecord
from src.strategies.base import UpdateStrategy, WorkReport

logger = get_logger(__name__)

LAYER_NEW = "new"
LAYER_ORIG = "orig"


class Parix(UpdateStrategy):
    name = STRATEGY_PARIX

    def __init__(self, sim):
        super().__init__(sim)
        self.pools: Dict[int, LogPool] = {}
        self.touched: Dict[Tuple[int, int], bitarray] = {}

    def _pool(self, node: int) -> LogPool:
        pool = self.pools.get(node)
        if pool is None:
            pool = LogPool(
                (self.name, node),
                unit_capacity=self.cfg.pl_log_budget,
                block_size=self.ec.block_size,
                min_units=1,
                max_units=1,
                merge=True,
                residence=self.residence_list(LAYER_PARITY),
            )
            self.pools[node] = pool
        return pool

    def _sectors(self, offset: int, length: int) -> slice:
        return slice(offset // SECTOR_SIZE, (offset + length - 1) // SECTOR_SIZE + 1)

    def _first_touch(self, req) -> bool:
        bits = self.touched.get((req.stripe_id, req.block_index))
        if bits is None:
            return True
        return not bits[self._sectors(req.offset, req.length)].all()

    def _mark(self, req) -> None:
        # only whole sectors count: a marked sector has all its original bytes logged
        lo = -(-req.offset // SECTOR_SIZE)
        hi = (req.offset + req.length) // SECTOR_SIZE
        if lo >= hi:
            return
        key = (req.stripe_id, req.block_index)
        bits = self.touched.get(key)
        if bits is None:
            bits = bitarray(self.ec.block_size // SECTOR_SIZE)
            bits.setall(0)
            self.touched[key] = bits
        bits[lo:hi] = 1

    def handle_update(self, req):
        self._check(req)
        degraded = self._settle_degraded(req.stripe_id, req.block_index)
        p = self.sim.placement(req.stripe_id)
        first = self._first_touch(req)
        need = req.length * (2 if first else 1)
        hosts = [node for node in p.parity_nodes if self.sim.is_alive(node)]
        for node in hosts:
            if not self._pool(node).can_append(need):
                raise BackPressureError(f"parix log on node {node} is full")

        src = self._ingress(req)
        original = None
        if degraded:
            # the data node is down: rebuild the original, parity alone takes the write
            if first:
                original = self.sim.degraded_read(req.stripe_id, req.block_index, req.offset, req.length)
        else:
            if first:
                original = self.sim.read_block(req.stripe_id, req.block_index, req.offset, req.length)
            self.sim.write_block(req.stripe_id, req.block_index, req.offset, req.payload)

        now = self.sim.now_us
        for node in hosts:
            pool = self._pool(node)
            self.sim.send(src, node, req.length, MSG_FORWARD)
            pool.append(LogRecord(
                BlockKey(req.stripe_id, req.block_index, LAYER_NEW),
                req.offset, req.payload, KIND_RAW, appended_at=now,
            ))
            self.sim.log_write(node, req.length)
            if first:
                self.sim.send(src, node, req.length, MSG_ORIGINAL)
                pool.append(LogRecord(
                    BlockKey(req.stripe_id, req.block_index, LAYER_ORIG),
                    req.offset, original, KIND_ORIGINAL, appended_at=now,
                ))
                self.sim.log_write(node, req.length)
        self._mark(req)
        return self._ack(req)

    def _run_stages(self, report: WorkReport, force: bool) -> None:
        for node, pool in self.pools.items():
            over = pool.pending_bytes() >= self.cfg.recycle_threshold * pool.unit_capacity
            if pool.has_pending() and (force or over):
                self.scheduler.add_job(
                    "parix-log", f"parix recycle node {node}", self._recycle_pool,
                    node=node, report=report,
                )
        self.scheduler.run_pending()

    def _recycle_pool(self, node: int, report: WorkReport) -> None:
        pool = self.pools[node]
        if pool.flush() is not None:
            report.units_sealed += 1

        unit = pool.next_recyclable()
        while unit is not None:
            batch: Dict[Tuple[int, int], Dict[str, List[Tuple[int, bytes]]]] = {}

            def sink(block_key, extents):
                for _, payload in extents:
                    self.sim.log_read(node, len(payload))
                batch.setdefault((block_key.stripe_id, block_key.index), {})[block_key.layer] = extents

            pool.recycle_unit(unit.unit_id, sink, self.sim.now_us)
            report.units_recycled += 1
            for (stripe_id, block_index), layers in sorted(batch.items()):
                self._fold(node, stripe_id, block_index, layers, report)
            unit = pool.next_recyclable()

    def _fold(self, node, stripe_id, block_index, layers, report) -> None:
        role = self.sim.placement(stripe_id).role_of(node)
        parity_index = role - self.ec.k
        coef = self.matrix.coef(parity_index, block_index)
        originals = layers.get(LAYER_ORIG, [])
        for offset, new in layers.get(LAYER_NEW, []):
            old = _assemble(originals, offset, len(new))
            if old is None:
                raise StallError(
                    f"parix: no original bytes for stripe {stripe_id} block {block_index} at {offset}"
                )
            pd = gf_mul_bytes(coef, xor_bytes(old, new))
            self.sim.apply_parity_delta(stripe_id, parity_index, offset, pd)
            report.extents_applied += 1
        # any host draining the block restarts first-touch tracking for it
        self.touched.pop((stripe_id, block_index), None)

    def has_pending(self) -> bool:
        return any(pool.has_pending() for pool in self.pools.values())

    def on_fail(self, node: int) -> None:
        self.pools.pop(node, None)
        self.touched.clear()


def _assemble(extents, offset: int, length: int):
    buf = np.zeros(length, dtype=np.uint8)
    covered = np.zeros(length, dtype=bool)
    end = offset + length
    for off, payload in extents:
        lo = max(offset, off)
        hi = min(end, off + len(payload))
        if lo >= hi:
            continue
        buf[lo - offset:hi - offset] = np.frombuffer(payload, dtype=np.uint8)[lo - off:hi - off]
        covered[lo - offset:hi - offset] = True
    return buf.tobytes() if covered.all() else None
