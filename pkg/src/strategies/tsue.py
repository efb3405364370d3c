"""
Two-stage update.

Front end: the data node appends the request to one of its DataLog pools,
replicates it to r-1 peers and acks. Nothing touches a block on the
synchronous path.

Back end, one cascade per background tick:
  DataLog   -> read the original bytes, overwrite the data block, ship the
               data delta to the stripe's DeltaLog hosts (or, with the
               DeltaLog layer off, per-parity deltas straight to the
               ParityLogs)
  DeltaLog  -> fold deltas of one stripe, combine blocks at equal offsets,
               append one parity delta per parity block
  ParityLog -> XOR the folded parity deltas into the parity blocks

All three logs live in memory and are persisted by their append-time
sequential writes, so recycling reads nothing back from the log device.
"""
from dataclasses import replace
from typing import Dict, List, Tuple

import numpy as np

from src.constants import (
    FLAG_DATALOG_MERGE,
    FLAG_DELTALOG,
    FLAG_ELASTIC_POOLS,
    FLAG_MULTI_POOL,
    FLAG_PARITYLOG_MERGE,
    KIND_DELTA,
    KIND_PARITY_DELTA,
    KIND_RAW,
    LAYER_DATA,
    LAYER_DELTA,
    LAYER_PARITY,
    MSG_DELTA,
    MSG_PARITY_DELTA,
    MSG_RECOVERY,
    MSG_REPLICA,
    STRATEGY_TSUE,
)
from src.errors import BackPressureError, StallError
from src.logger import get_logger
from src.modules.cluster_sim import delta_hosts, replica_nodes
from src.modules.gf_codec import combine_cross_block_deltas, compute_data_delta, gf_mul_bytes
from src.modules.log_pool import BlockKey, LogPool, LogRecord
from src.strategies.base import UpdateStrategy, WorkReport, union_intervals, xor_window

logger = get_logger(__name__)

PoolKey = Tuple[int, int]  # (node, pool index)

# fixed pool size when elastic pools are off
FIXED_UNITS = 2


class Tsue(UpdateStrategy):
    name = STRATEGY_TSUE

    def __init__(self, sim):
        super().__init__(sim)
        cfg = self.cfg
        self.pools_per = cfg.pools_per_device if cfg.flag(FLAG_MULTI_POOL) else 1
        self.elastic = cfg.flag(FLAG_ELASTIC_POOLS)
        self.use_deltalog = cfg.flag(FLAG_DELTALOG)
        self.copies = cfg.replication
        n = cfg.cluster_size

        if self.copies > n:
            raise StallError(f"replication {self.copies} exceeds cluster of {n} nodes")

        self.datalogs: Dict[PoolKey, LogPool] = {}
        self.deltalogs: Dict[PoolKey, LogPool] = {}
        self.paritylogs: Dict[PoolKey, LogPool] = {}
        self._merge = {
            LAYER_DATA: cfg.flag(FLAG_DATALOG_MERGE),
            LAYER_DELTA: True,
            LAYER_PARITY: cfg.flag(FLAG_PARITYLOG_MERGE),
        }
        self._layers = {
            LAYER_DATA: self.datalogs,
            LAYER_DELTA: self.deltalogs,
            LAYER_PARITY: self.paritylogs,
        }
        # DataLog records whose copies sit on replica nodes, trimmed on recycle
        self.replicas: Dict[PoolKey, List[LogRecord]] = {}
        # records held for a failed data node until it comes back
        self.held: Dict[int, List[LogRecord]] = {}

    # --- pools ---

    def _pool(self, layer: str, node: int, pidx: int) -> LogPool:
        pools = self._layers[layer]
        key = (node, pidx)
        pool = pools.get(key)
        if pool is None:
            if self.elastic:
                min_units, max_units = self.cfg.min_units, self.cfg.max_units
                hard_max = self.cfg.hard_max_units
            else:
                min_units = max_units = hard_max = FIXED_UNITS
            pool = LogPool(
                (self.name, layer, node, pidx),
                unit_capacity=self.cfg.unit_capacity,
                block_size=self.ec.block_size,
                min_units=min_units,
                max_units=max_units,
                hard_max_units=hard_max,
                merge=self._merge[layer],
                residence=self.residence_list(layer),
            )
            pools[key] = pool
        return pool

    def _data_pidx(self, stripe_id: int, block_index: int) -> int:
        return (stripe_id * self.ec.k + block_index) % self.pools_per

    def _stripe_pidx(self, stripe_id: int) -> int:
        return stripe_id % self.pools_per

    def _sink_for(self, layer: str, node: int, report: WorkReport):
        if layer == LAYER_DATA:
            return lambda key, extents: self._recycle_data(node, key, extents, report)
        if layer == LAYER_PARITY:
            return lambda key, extents: self._recycle_parity(key, extents, report)
        return None

    def _make_room(self, layer: str, key: PoolKey, pool: LogPool, nbytes: int) -> None:
        """Give ``pool`` room for ``nbytes`` from inside the back end."""
        if pool.can_append(nbytes):
            return
        if self.elastic and pool.expand() and pool.can_append(nbytes):
            return
        self._drain_pool(layer, key, WorkReport(), force=False)
        if not pool.can_append(nbytes):
            raise StallError(f"tsue {layer} log {key} has no room for {nbytes} bytes")

    # --- front end ---

    def handle_update(self, req):
        self._check(req)
        x = self.sim.placement(req.stripe_id).data_node(req.block_index)
        pidx = self._data_pidx(req.stripe_id, req.block_index)

        if self.sim.is_alive(x):
            pool = self._pool(LAYER_DATA, x, pidx)
            while not pool.can_append(req.length):
                if not (self.elastic and pool.expand()):
                    raise BackPressureError(f"tsue datalog {(x, pidx)} is full")

        self._ingress(req)
        rec = LogRecord(
            BlockKey(req.stripe_id, req.block_index, LAYER_DATA),
            req.offset, req.payload, KIND_RAW, appended_at=self.sim.now_us,
        )
        peers = replica_nodes(x, pidx, self.copies - 1, self.cfg.cluster_size)
        if self.sim.is_alive(x):
            seq = self._pool(LAYER_DATA, x, pidx).append(rec)
            self.sim.log_write(x, req.length)
            for peer in peers:
                self.sim.send(x, peer, req.length, MSG_REPLICA)
                self.sim.log_write(peer, req.length)
            self.replicas.setdefault((x, pidx), []).append(replace(rec, seq=seq))
        else:
            # degraded: the replica nodes take the write and hold it for x
            for peer in peers:
                self.sim.log_write(peer, req.length)
            self.held.setdefault(x, []).append(rec)
        return self._ack(req)

    def read(self, stripe_id: int, block_index: int, offset: int, length: int) -> bytes:
        x = self.sim.placement(stripe_id).data_node(block_index)
        if self._settle_degraded(stripe_id, block_index):
            base = self.sim.degraded_read(stripe_id, block_index, offset, length)
            return self._overlay_held(x, stripe_id, block_index, offset, base)
        pool = self.datalogs.get((x, self._data_pidx(stripe_id, block_index)))
        key = BlockKey(stripe_id, block_index, LAYER_DATA)
        if pool is not None:
            hit = pool.lookup(key, offset, length)
            if hit is not None:
                return hit
        base = self.sim.read_block(stripe_id, block_index, offset, length)
        if pool is None:
            return base
        return pool.overlay(key, offset, base)

    def _overlay_held(self, node: int, stripe_id: int, block_index: int, offset: int, base: bytes) -> bytes:
        """Apply records held for a failed node over decoded bytes, oldest first."""
        buf = np.frombuffer(base, dtype=np.uint8).copy()
        end = offset + len(buf)
        for rec in self.held.get(node, []):
            key = rec.block_key
            if (key.stripe_id, key.index) != (stripe_id, block_index):
                continue
            lo, hi = max(offset, rec.offset), min(end, rec.offset + len(rec.payload))
            if lo < hi:
                payload = np.frombuffer(rec.payload, dtype=np.uint8)
                buf[lo - offset:hi - offset] = payload[lo - rec.offset:hi - rec.offset]
        return buf.tobytes()

    # --- back end ---

    def _run_stages(self, report: WorkReport, force: bool) -> None:
        for layer in (LAYER_DATA, LAYER_DELTA, LAYER_PARITY):
            for key in sorted(self._layers[layer]):
                self.scheduler.add_job(
                    f"{layer}log", f"tsue {layer} recycle {key}", self._drain_pool,
                    layer=layer, key=key, report=report, force=force,
                )
            self.scheduler.run_pending()
            report.stages += 1

    def _drain_pool(self, layer: str, key: PoolKey, report: WorkReport, force: bool) -> None:
        pool = self._layers[layer].get(key)
        if pool is None:
            return
        active = pool.active
        aged = active is not None and active.age_us(self.sim.now_us) >= self.cfg.flush_age_us
        if (force or aged) and pool.flush() is not None:
            report.units_sealed += 1

        node = key[0]
        unit = pool.next_recyclable()
        while unit is not None:
            if layer == LAYER_DELTA:
                batch: Dict[int, Dict[int, List[Tuple[int, bytes]]]] = {}

                def sink(block_key, extents):
                    batch.setdefault(block_key.stripe_id, {})[block_key.index] = extents

                pool.recycle_unit(unit.unit_id, sink, self.sim.now_us)
                for stripe_id in sorted(batch):
                    self._scatter_deltas(node, stripe_id, batch[stripe_id], report)
            else:
                pool.recycle_unit(unit.unit_id, self._sink_for(layer, node, report), self.sim.now_us)
            report.units_recycled += 1
            if layer == LAYER_DATA:
                self._trim_replicas(key, unit.max_seq())
            unit = pool.next_recyclable()

        if self.elastic:
            pool.resize(len(pool.sealed_units()) + 1)

    def _trim_replicas(self, key: PoolKey, upto_seq: int) -> None:
        kept = [r for r in self.replicas.get(key, []) if r.seq > upto_seq]
        if kept:
            self.replicas[key] = kept
        else:
            self.replicas.pop(key, None)

    def _recycle_data(self, node: int, block_key: BlockKey, extents, report: WorkReport) -> None:
        s, b = block_key.stripe_id, block_key.index
        for offset, new in extents:
            old = self.sim.read_block(s, b, offset, len(new))
            self.sim.write_block(s, b, offset, new)
            delta = compute_data_delta(old, new)
            if not (self.use_deltalog and self._send_delta(node, s, b, offset, delta)):
                self._send_parity_deltas(node, s, b, offset, delta)
            report.extents_applied += 1

    def _send_parity_deltas(self, src: int, stripe_id: int, block_index: int, offset: int, delta) -> None:
        """One coefficient-scaled delta per parity block, straight to the ParityLogs."""
        p = self.sim.placement(stripe_id)
        for j in range(self.ec.m):
            self.sim.send(src, p.parity_node(j), len(delta), MSG_PARITY_DELTA)
            pd = gf_mul_bytes(self.matrix.coef(j, block_index), delta).tobytes()
            self._append_parity(p.parity_node(j), stripe_id, j, offset, pd)

    def _send_delta(self, src: int, stripe_id: int, block_index: int, offset: int, delta: bytes) -> bool:
        """
        Ship a data delta to the stripe's live DeltaLog hosts. The first
        one logs it for folding, the rest hold copies. False when no host
        is alive.
        """
        hosts = [
            h for h in delta_hosts(self.sim.placement(stripe_id), self.copies, self.cfg.cluster_size)
            if self.sim.is_alive(h)
        ]
        if not hosts:
            logger.debug(f"tsue: no live DeltaLog host for stripe {stripe_id}, sending parity deltas")
            return False
        for i, host in enumerate(hosts):
            self.sim.send(src, host, len(delta), MSG_DELTA if i == 0 else MSG_REPLICA)
            self.sim.log_write(host, len(delta))
        primary = hosts[0]
        pidx = self._stripe_pidx(stripe_id)
        pool = self._pool(LAYER_DELTA, primary, pidx)
        self._make_room(LAYER_DELTA, (primary, pidx), pool, len(delta))
        pool.append(LogRecord(
            BlockKey(stripe_id, block_index, LAYER_DELTA),
            offset, delta, KIND_DELTA, appended_at=self.sim.now_us,
        ))
        return True

    def _scatter_deltas(self, node: int, stripe_id: int, per_block, report: WorkReport) -> None:
        p = self.sim.placement(stripe_id)
        for lo, hi in union_intervals(per_block):
            deltas = []
            for block_index in sorted(per_block):
                window, touched = xor_window(per_block[block_index], lo, hi)
                if touched:
                    deltas.append((block_index, window))
            for pd in combine_cross_block_deltas(self.matrix, deltas, stripe_id, lo):
                dst = p.parity_node(pd.parity_index)
                self.sim.send(node, dst, pd.length, MSG_PARITY_DELTA)
                self._append_parity(dst, stripe_id, pd.parity_index, pd.offset, pd.payload)
            report.extents_applied += 1

    def _append_parity(self, node: int, stripe_id: int, parity_index: int, offset: int, payload) -> None:
        if not self.sim.is_alive(node):
            return
        payload = bytes(payload)
        pidx = self._stripe_pidx(stripe_id)
        pool = self._pool(LAYER_PARITY, node, pidx)
        self._make_room(LAYER_PARITY, (node, pidx), pool, len(payload))
        pool.append(LogRecord(
            BlockKey(stripe_id, parity_index, LAYER_PARITY),
            offset, payload, KIND_PARITY_DELTA, appended_at=self.sim.now_us,
        ))
        self.sim.log_write(node, len(payload))

    def _recycle_parity(self, block_key: BlockKey, extents, report: WorkReport) -> None:
        for offset, payload in extents:
            self.sim.apply_parity_delta(block_key.stripe_id, block_key.index, offset, payload)
            report.extents_applied += 1

    def has_pending(self) -> bool:
        return any(
            pool.has_pending() for pools in self._layers.values() for pool in pools.values()
        )

    # --- failure ---

    def on_fail(self, node: int) -> None:
        held = self.held.setdefault(node, [])
        for key in sorted(k for k in self.datalogs if k[0] == node):
            del self.datalogs[key]
            held.extend(self.replicas.pop(key, []))

        moved = 0
        for key in sorted(k for k in self.deltalogs if k[0] == node):
            pool = self.deltalogs.pop(key)
            for rec in pool.pending_records():
                moved += self._adopt_delta(node, rec)

        for key in [k for k in self.paritylogs if k[0] == node]:
            del self.paritylogs[key]
        logger.info(
            f"tsue: node {node} lost, holding {len(held)} DataLog record(s), "
            f"{moved} DeltaLog record(s) taken over by copy holders"
        )

    def _adopt_delta(self, failed: int, rec: LogRecord) -> int:
        """The next live copy holder takes over one DeltaLog record."""
        stripe_id = rec.block_key.stripe_id
        hosts = delta_hosts(self.sim.placement(stripe_id), self.copies, self.cfg.cluster_size)
        alive = [h for h in hosts if h != failed and self.sim.is_alive(h)]
        if not alive:
            # the data node still has the delta and resends it per parity
            src = self.sim.placement(stripe_id).data_node(rec.block_key.index)
            self._send_parity_deltas(src, stripe_id, rec.block_key.index, rec.offset, rec.payload)
            return 1
        pidx = self._stripe_pidx(stripe_id)
        pool = self._pool(LAYER_DELTA, alive[0], pidx)
        self._make_room(LAYER_DELTA, (alive[0], pidx), pool, len(rec.payload))
        pool.append(LogRecord(rec.block_key, rec.offset, rec.payload, rec.kind, appended_at=rec.appended_at))
        return 1

    def on_recover(self, node: int) -> int:
        held = self.held.pop(node, [])
        for rec in held:
            s, b = rec.block_key.stripe_id, rec.block_key.index
            pidx = self._data_pidx(s, b)
            peers = [p for p in replica_nodes(node, pidx, self.copies - 1, self.cfg.cluster_size)
                     if self.sim.is_alive(p)]
            if peers:
                self.sim.send(peers[0], node, len(rec.payload), MSG_RECOVERY)
            pool = self._pool(LAYER_DATA, node, pidx)
            self._make_room(LAYER_DATA, (node, pidx), pool, len(rec.payload))
            replayed = replace(rec, seq=-1, appended_at=self.sim.now_us)
            seq = pool.append(replayed)
            self.sim.log_write(node, len(rec.payload))
            self.replicas.setdefault((node, pidx), []).append(replace(replayed, seq=seq))
        return len(held)
