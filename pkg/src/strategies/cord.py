"""
Collector-based delta aggregation.

Data nodes update in place and ship the data delta to a collector (the
stripe's parity-1 host). The collector buffers deltas in a single log
unit; draining it folds same-extent deltas, combines deltas of different
blocks at the same offsets, and sends one parity delta per parity block.
"""
from typing import Dict, List, Tuple

from src.constants import KIND_DELTA, LAYER_DELTA, MSG_DELTA, MSG_PARITY_DELTA, STRATEGY_CORD
from src.errors import BackPressureError
from src.logger import get_logger
from src.modules.gf_codec import combine_cross_block_deltas
from src.modules.log_pool import BlockKey, LogPool, LogRecord
from src.strategies.base import UpdateStrategy, WorkReport, union_intervals, xor_window

logger = get_logger(__name__)


class Cord(UpdateStrategy):
    name = STRATEGY_CORD

    def __init__(self, sim):
        super().__init__(sim)
        self.buffers: Dict[int, LogPool] = {}

    def _buffer(self, node: int) -> LogPool:
        pool = self.buffers.get(node)
        if pool is None:
            # one unit: appends wait while the buffer drains
            pool = LogPool(
                (self.name, node),
                unit_capacity=self.cfg.cord_buffer_bytes,
                block_size=self.ec.block_size,
                min_units=1,
                max_units=1,
                merge=True,
                residence=self.residence_list(LAYER_DELTA),
            )
            self.buffers[node] = pool
        return pool

    def _collector(self, stripe_id: int):
        """First live parity host of the stripe, None when every one is down."""
        for node in self.sim.placement(stripe_id).parity_nodes:
            if self.sim.is_alive(node):
                return node
        return None

    def handle_update(self, req):
        self._check(req)
        collector = self._collector(req.stripe_id)
        if collector is None:
            # parity is re-encoded from the data blocks on recovery
            self._ingress(req)
            self._update_data_in_place(req)
            return self._ack(req)
        pool = self._buffer(collector)
        if not pool.can_append(req.length):
            raise BackPressureError(f"cord buffer on node {collector} is full")

        src = self._ingress(req)
        delta = self._update_data_in_place(req)
        self.sim.send(src, collector, req.length, MSG_DELTA)
        pool.append(LogRecord(
            BlockKey(req.stripe_id, req.block_index, LAYER_DELTA),
            req.offset, delta, KIND_DELTA, appended_at=self.sim.now_us,
        ))
        self.sim.log_write(collector, req.length)
        return self._ack(req)

    def _run_stages(self, report: WorkReport, force: bool) -> None:
        for node, pool in self.buffers.items():
            over = pool.pending_bytes() >= self.cfg.recycle_threshold * pool.unit_capacity
            if pool.has_pending() and (force or over):
                self.scheduler.add_job(
                    "cord-buffer", f"cord drain node {node}", self._drain,
                    node=node, report=report,
                )
        self.scheduler.run_pending()

    def _drain(self, node: int, report: WorkReport) -> None:
        pool = self.buffers[node]
        if pool.flush() is not None:
            report.units_sealed += 1

        unit = pool.next_recyclable()
        while unit is not None:
            batch: Dict[int, Dict[int, List[Tuple[int, bytes]]]] = {}

            def sink(block_key, extents):
                for _, payload in extents:
                    self.sim.log_read(node, len(payload))
                batch.setdefault(block_key.stripe_id, {})[block_key.index] = extents

            pool.recycle_unit(unit.unit_id, sink, self.sim.now_us)
            report.units_recycled += 1
            for stripe_id in sorted(batch):
                report.extents_applied += self._scatter(node, stripe_id, batch[stripe_id])
            unit = pool.next_recyclable()

    def _scatter(self, node: int, stripe_id: int, per_block) -> int:
        p = self.sim.placement(stripe_id)
        applied = 0
        for lo, hi in union_intervals(per_block):
            deltas = []
            for block_index in sorted(per_block):
                window, touched = xor_window(per_block[block_index], lo, hi)
                if touched:
                    deltas.append((block_index, window))
            for pd in combine_cross_block_deltas(self.matrix, deltas, stripe_id, lo):
                dst = p.parity_node(pd.parity_index)
                if not self.sim.is_alive(dst):
                    continue
                self.sim.send(node, dst, pd.length, MSG_PARITY_DELTA)
                self.sim.apply_parity_delta(stripe_id, pd.parity_index, pd.offset, pd.payload)
                applied += 1
        return applied

    def has_pending(self) -> bool:
        return any(pool.has_pending() for pool in self.buffers.values())

    def on_fail(self, node: int) -> None:
        pool = self.buffers.pop(node, None)
        if pool is None:
            return
        # data nodes resend unacknowledged deltas to the next live collector
        moved = 0
        for rec in pool.pending_records():
            stripe_id = rec.block_key.stripe_id
            collector = self._collector(stripe_id)
            if collector is None:
                continue
            target = self._buffer(collector)
            if not target.can_append(len(rec.payload)):
                self._drain(collector, WorkReport())
            src = self.sim.placement(stripe_id).data_node(rec.block_key.index)
            self.sim.send(src, collector, len(rec.payload), MSG_DELTA)
            target.append(LogRecord(rec.block_key, rec.offset, rec.payload, rec.kind, appended_at=rec.appended_at))
            self.sim.log_write(collector, len(rec.payload))
            moved += 1
        logger.info(f"cord: collector buffer on node {node} lost, {moved} delta(s) resent")
