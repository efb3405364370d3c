"""
Update strategy interface.

Every strategy drives the same ClusterSim: ``handle_update`` runs the
synchronous path and returns an ack, ``background_tick`` advances the
deferred recycle path, and ``quiesce`` drains everything so each stripe
satisfies its encoding identity again.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple

import numpy as np

from src.constants import CLIENT_NODE
from src.errors import BackPressureError, InvalidParamsError, StallError
from src.logger import get_logger
from src.modules.cluster_sim import ClusterSim
from src.modules.gf_codec import compute_data_delta
from src.modules.io_request import FillRequest, UpdateRequest
from src.scheduler import StageScheduler

logger = get_logger(__name__)

QUIESCE_ROUNDS = 64


class Ack(NamedTuple):
    stripe_id: int
    block_index: int
    acked_at: int


@dataclass
class WorkReport:
    units_sealed: int = 0
    units_recycled: int = 0
    extents_applied: int = 0
    stages: int = 0

    def merge(self, other: "WorkReport") -> None:
        self.units_sealed += other.units_sealed
        self.units_recycled += other.units_recycled
        self.extents_applied += other.extents_applied
        self.stages += other.stages

    @property
    def idle(self) -> bool:
        return not (self.units_sealed or self.units_recycled or self.extents_applied)


def union_intervals(per_block: Dict[int, Sequence[Tuple[int, bytes]]]) -> List[Tuple[int, int]]:
    """Merge extents of several blocks into disjoint covering intervals."""
    spans = sorted(
        (off, off + len(payload)) for extents in per_block.values() for off, payload in extents
    )
    out: List[List[int]] = []
    for lo, hi in spans:
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(lo, hi) for lo, hi in out]


def xor_window(extents: Iterable[Tuple[int, bytes]], lo: int, hi: int) -> Tuple[bytes, bool]:
    """XOR every extent's bytes inside [lo, hi) into a zero buffer."""
    buf = np.zeros(hi - lo, dtype=np.uint8)
    touched = False
    for off, payload in extents:
        a = max(lo, off)
        b = min(hi, off + len(payload))
        if a >= b:
            continue
        data = np.frombuffer(payload, dtype=np.uint8)
        buf[a - lo:b - lo] ^= data[a - off:b - off]
        touched = True
    return buf.tobytes(), touched


class UpdateStrategy(ABC):
    name = "base"

    def __init__(self, sim: ClusterSim):
        self.sim = sim
        self.cfg = sim.cfg
        self.ec = sim.ec
        self.matrix = sim.matrix
        self.scheduler = StageScheduler(sim.cfg.seed)
        self._residence: Dict[str, List[int]] = {}
        sim.attach(self)

    # --- helpers ---

    def residence_list(self, layer: str) -> List[int]:
        return self._residence.setdefault(layer, [])

    def residence(self) -> Dict[str, List[int]]:
        return self._residence

    def _check(self, req) -> None:
        if not 0 <= req.block_index < self.ec.k:
            raise InvalidParamsError(f"block index {req.block_index} outside RS({self.ec.k},{self.ec.m})")
        if req.offset + req.length > self.ec.block_size:
            raise InvalidParamsError(
                f"extent [{req.offset}, {req.offset + req.length}) beyond block of {self.ec.block_size} bytes"
            )

    def _ingress(self, req) -> int:
        self.sim.advance_to(req.arrival_time)
        node = self.sim.placement(req.stripe_id).data_node(req.block_index)
        self.sim.send(CLIENT_NODE, node, req.length)
        return node

    def _data_node_down(self, stripe_id: int, block_index: int) -> bool:
        return not self.sim.is_alive(self.sim.placement(stripe_id).data_node(block_index))

    def _settle_degraded(self, stripe_id: int, block_index: int) -> bool:
        """
        When the block's node is down, drain deferred parity work so the
        survivors decode to its current bytes. True in that case.
        """
        if not self._data_node_down(stripe_id, block_index):
            return False
        if self.has_pending():
            logger.debug(f"{self.name}: degraded access to stripe {stripe_id} block {block_index}, draining")
            self.quiesce()
        return True

    def _update_data_in_place(self, req: UpdateRequest) -> bytes:
        """
        Read old bytes, overwrite in place, return the data delta. A block
        on a failed node is rebuilt from survivors instead and only the
        parity takes the update; recovery decodes the new bytes.
        """
        if self._settle_degraded(req.stripe_id, req.block_index):
            old = self.sim.degraded_read(req.stripe_id, req.block_index, req.offset, req.length)
            return compute_data_delta(old, req.payload)
        old = self.sim.read_block(req.stripe_id, req.block_index, req.offset, req.length)
        self.sim.write_block(req.stripe_id, req.block_index, req.offset, req.payload)
        return compute_data_delta(old, req.payload)

    def _ack(self, req) -> Ack:
        return Ack(req.stripe_id, req.block_index, self.sim.now_us)

    # --- interface ---

    def handle_write(self, req: FillRequest) -> Ack:
        """Initial write of fresh bytes; identical for every strategy."""
        self._check(req)
        self.sim.advance_to(req.arrival_time)
        self.sim.fill(req.stripe_id, req.block_index, req.offset, req.payload)
        return self._ack(req)

    @abstractmethod
    def handle_update(self, req: UpdateRequest) -> Ack:
        ...

    def submit(self, req: UpdateRequest) -> Ack:
        """handle_update with one forced drain on back-pressure."""
        try:
            return self.handle_update(req)
        except BackPressureError as e:
            logger.debug(f"{self.name}: back-pressure ({e}), draining")
        self.background_tick(self.sim.now_us, force=True)
        try:
            return self.handle_update(req)
        except BackPressureError as e:
            raise StallError(f"{self.name}: update still blocked after drain: {e}") from e

    def background_tick(self, now_us: int, force: bool = False) -> WorkReport:
        self.sim.advance_to(now_us)
        report = WorkReport()
        self._run_stages(report, force)
        self.scheduler.clear_completed()
        return report

    @abstractmethod
    def _run_stages(self, report: WorkReport, force: bool) -> None:
        ...

    @abstractmethod
    def has_pending(self) -> bool:
        ...

    def read(self, stripe_id: int, block_index: int, offset: int, length: int) -> bytes:
        if self._settle_degraded(stripe_id, block_index):
            return self.sim.degraded_read(stripe_id, block_index, offset, length)
        return self.sim.read_block(stripe_id, block_index, offset, length)

    def quiesce(self) -> None:
        for _ in range(QUIESCE_ROUNDS):
            if not self.has_pending():
                return
            self.background_tick(self.sim.now_us, force=True)
        if self.has_pending():
            raise StallError(f"{self.name}: logs still pending after {QUIESCE_ROUNDS} drain rounds")

    def drain_for_recovery(self) -> None:
        """Process every surviving piece of deferred state."""
        self.quiesce()

    def on_fail(self, node: int) -> None:
        """Drop volatile state hosted on ``node``."""

    def on_recover(self, node: int) -> int:
        """Replay held records onto a rebuilt node; returns how many."""
        return 0
