"""
Shadow oracle: a plain byte array per data block, replayed alongside the
simulator, and a re-encode check of the quiesced stripes against it.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.constants import PAGE_SIZE
from src.logger import get_logger
from src.modules.cluster_sim import BlockStore, ClusterSim
from src.modules.gf_codec import encode_columns

logger = get_logger(__name__)


@dataclass
class VerificationResult:
    passed: bool
    detail: Optional[str] = None

    def to_dict(self) -> dict:
        return {"passed": self.passed, "detail": self.detail}


def _first_diff(expected: np.ndarray, actual: np.ndarray) -> Optional[Tuple[int, int]]:
    diff = np.flatnonzero(expected != actual)
    if diff.size == 0:
        return None
    return int(diff[0]), int(diff[-1]) + 1


class ShadowOracle:
    def __init__(self, sim: ClusterSim):
        self.ec = sim.ec
        self.matrix = sim.matrix
        self.blocks: Dict[Tuple[int, int], BlockStore] = {}

    def _store(self, stripe_id: int, block_index: int) -> BlockStore:
        key = (stripe_id, block_index)
        store = self.blocks.get(key)
        if store is None:
            store = BlockStore(self.ec.block_size)
            self.blocks[key] = store
        return store

    def apply(self, req) -> None:
        """Record a fill or update."""
        self._store(req.stripe_id, req.block_index).write(req.offset, req.payload)

    def read(self, stripe_id: int, block_index: int, offset: int, length: int) -> bytes:
        store = self.blocks.get((stripe_id, block_index))
        if store is None:
            return bytes(length)
        return store.read(offset, length)

    def check_read(self, req, got: bytes) -> VerificationResult:
        want = self.read(req.stripe_id, req.block_index, req.offset, req.length)
        span = _first_diff(np.frombuffer(want, dtype=np.uint8), np.frombuffer(got, dtype=np.uint8))
        if span is None:
            return VerificationResult(True)
        lo, hi = span
        return VerificationResult(
            False,
            f"stale read: stripe {req.stripe_id} block {req.block_index} "
            f"bytes [{req.offset + lo}, {req.offset + hi}) differ",
        )

    def stripes(self):
        return sorted({s for s, _ in self.blocks})

    def verify(self, sim: ClusterSim) -> VerificationResult:
        """
        Compare every data page with the shadow and every parity page with
        the re-encoded shadow data. Stops at the first divergent block.
        """
        k, m = self.ec.k, self.ec.m
        for stripe_id in sorted(set(self.stripes()) | sim.stripes):
            pages = set()
            for i in range(k):
                store = self.blocks.get((stripe_id, i))
                if store is not None:
                    pages |= store.page_ids()
            for role in range(k + m):
                pages |= sim.block_pages(stripe_id, role)

            for idx in sorted(pages):
                offset = idx * PAGE_SIZE
                data = [
                    np.frombuffer(self.read(stripe_id, i, offset, PAGE_SIZE), dtype=np.uint8)
                    for i in range(k)
                ]
                for i in range(k):
                    got = np.frombuffer(sim.peek_block(stripe_id, i, offset, PAGE_SIZE), dtype=np.uint8)
                    span = _first_diff(data[i], got)
                    if span is not None:
                        return self._fail(stripe_id, f"data block {i}", offset, span)
                for j, parity in enumerate(encode_columns(self.matrix, data)):
                    got = np.frombuffer(sim.peek_block(stripe_id, k + j, offset, PAGE_SIZE), dtype=np.uint8)
                    span = _first_diff(parity, got)
                    if span is not None:
                        return self._fail(stripe_id, f"parity block {j}", offset, span)
        return VerificationResult(True)

    def _fail(self, stripe_id: int, what: str, offset: int, span: Tuple[int, int]) -> VerificationResult:
        lo, hi = span
        detail = f"stripe {stripe_id} {what}: bytes [{offset + lo}, {offset + hi}) differ from oracle"
        logger.error(f"verification failed: {detail}")
        return VerificationResult(False, detail)
