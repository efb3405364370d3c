"""
Parity logging.

Data blocks update in place; each parity host logs the coefficient-scaled
delta and folds its log into the parity block later. PL keeps one log per
node and recycles above a space threshold. PLR reserves log space next to
every parity block and merges it in place when it fills.
"""
from typing import Dict, Tuple

from src.constants import (
    KIND_PARITY_DELTA,
    LAYER_PARITY,
    MSG_DELTA,
    OP_OVERWRITE,
    STRATEGY_PL,
    STRATEGY_PLR,
)
from src.errors import BackPressureError
from src.logger import get_logger
from src.modules.gf_codec import gf_mul_bytes
from src.modules.log_pool import BlockKey, LogPool, LogRecord
from src.strategies.base import UpdateStrategy, WorkReport

logger = get_logger(__name__)


class ParityLogging(UpdateStrategy):
    name = STRATEGY_PL

    def __init__(self, sim):
        super().__init__(sim)
        self.pools: Dict[object, Tuple[int, LogPool]] = {}

    # which log takes parity j of a stripe, and on which node it lives
    def _pool_key(self, stripe_id: int, parity_index: int, node: int):
        return node

    def _capacity(self) -> int:
        return self.cfg.pl_log_budget

    def _pool(self, stripe_id: int, parity_index: int) -> Tuple[int, LogPool]:
        node = self.sim.placement(stripe_id).parity_node(parity_index)
        key = self._pool_key(stripe_id, parity_index, node)
        entry = self.pools.get(key)
        if entry is None:
            pool = LogPool(
                (self.name, key),
                unit_capacity=self._capacity(),
                block_size=self.ec.block_size,
                min_units=1,
                max_units=1,
                merge=False,
                residence=self.residence_list(LAYER_PARITY),
            )
            entry = (node, pool)
            self.pools[key] = entry
        return entry

    def _charge_append(self, node: int, nbytes: int) -> None:
        self.sim.log_write(node, nbytes)

    def _make_room(self, key, pool: LogPool, nbytes: int) -> None:
        if not pool.can_append(nbytes):
            raise BackPressureError(f"{self.name} log {key} is full")

    def handle_update(self, req):
        self._check(req)
        targets = []
        for j in range(self.ec.m):
            node, pool = self._pool(req.stripe_id, j)
            if self.sim.is_alive(node):
                self._make_room(self._pool_key(req.stripe_id, j, node), pool, req.length)
                targets.append((j, node, pool))

        src = self._ingress(req)
        delta = self._update_data_in_place(req)
        for j, node, pool in targets:
            self.sim.send(src, node, req.length, MSG_DELTA)
            pd = gf_mul_bytes(self.matrix.coef(j, req.block_index), delta).tobytes()
            pool.append(LogRecord(
                BlockKey(req.stripe_id, j, LAYER_PARITY),
                req.offset,
                pd,
                KIND_PARITY_DELTA,
                appended_at=self.sim.now_us,
            ))
            self._charge_append(node, req.length)
        return self._ack(req)

    def _over_threshold(self, pool: LogPool) -> bool:
        return pool.pending_bytes() >= self.cfg.recycle_threshold * pool.unit_capacity

    def _run_stages(self, report: WorkReport, force: bool) -> None:
        for key, (node, pool) in self.pools.items():
            if pool.has_pending() and (force or self._over_threshold(pool)):
                self.scheduler.add_job(
                    "parity-log", f"{self.name} recycle {key}", self._recycle_pool,
                    key=key, report=report,
                )
        self.scheduler.run_pending()

    def _recycle_pool(self, key, report: WorkReport) -> None:
        node, pool = self.pools[key]
        if pool.flush() is not None:
            report.units_sealed += 1

        def sink(block_key, extents):
            for offset, payload in extents:
                self.sim.log_read(node, len(payload))
                self.sim.apply_parity_delta(block_key.stripe_id, block_key.index, offset, payload)
                report.extents_applied += 1

        unit = pool.next_recyclable()
        while unit is not None:
            pool.recycle_unit(unit.unit_id, sink, self.sim.now_us)
            report.units_recycled += 1
            unit = pool.next_recyclable()

    def has_pending(self) -> bool:
        return any(pool.has_pending() for _, pool in self.pools.values())

    def on_fail(self, node: int) -> None:
        lost = [key for key, (host, _) in self.pools.items() if host == node]
        for key in lost:
            del self.pools[key]
        if lost:
            logger.info(f"{self.name}: dropped {len(lost)} parity log(s) on node {node}")


class ParityLoggingReserved(ParityLogging):
    name = STRATEGY_PLR

    def _pool_key(self, stripe_id: int, parity_index: int, node: int):
        return (stripe_id, parity_index)

    def _capacity(self) -> int:
        return self.cfg.plr_reserved_bytes

    def _charge_append(self, node: int, nbytes: int) -> None:
        # the reserved region is rewritten in place on every cycle
        self.sim.log_write(node, nbytes, op=OP_OVERWRITE, sequential=False)

    def _make_room(self, key, pool: LogPool, nbytes: int) -> None:
        if not pool.can_append(nbytes):
            self._recycle_pool(key, WorkReport())
        if not pool.can_append(nbytes):
            raise BackPressureError(f"{self.name} reserved space {key} cannot take {nbytes} bytes")
