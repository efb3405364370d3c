"""
Deterministic cluster simulator.

Nodes hold sparse block stores and a device cost model; a network model
counts inter-node messages. Strategies drive all I/O through the
ClusterSim helpers so every byte moved is charged exactly once.
"""
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from src.constants import (
    ALL_FLAGS,
    CLIENT_NODE,
    DEFAULT_BYTE_NS,
    DEFAULT_CLUSTER_SIZE,
    DEFAULT_CORD_BUFFER_BYTES,
    DEFAULT_FLUSH_AGE_US,
    DEFAULT_HARD_MAX_UNITS,
    DEFAULT_HDD_RANDOM_MULTIPLIER,
    DEFAULT_MAX_UNITS,
    DEFAULT_MESSAGE_US,
    DEFAULT_MIN_UNITS,
    DEFAULT_PL_LOG_BUDGET,
    DEFAULT_PLR_RESERVED_BYTES,
    DEFAULT_POOLS_PER_DEVICE,
    DEFAULT_RAND_READ_US,
    DEFAULT_RAND_WRITE_US,
    DEFAULT_RECYCLE_THRESHOLD,
    DEFAULT_SEQ_READ_US,
    DEFAULT_SEQ_WRITE_US,
    DEFAULT_TICK_PERIOD_US,
    DEFAULT_UNIT_CAPACITY,
    DEFAULT_VOLUME_BYTES,
    DEFAULT_VOLUME_SLOTS,
    DEVICE_OPS,
    DEVICE_PROFILES,
    MSG_CLIENT,
    MSG_PARITY_DELTA,
    MSG_RECOVERY,
    OP_CLASSES,
    OP_OVERWRITE,
    OP_READ,
    OP_WRITE,
    PAGE_SIZE,
    PATTERN_RAND,
    PATTERN_SEQ,
    PROFILE_HDD,
    PROFILE_SSD,
    REPLICATION,
)
from src.errors import InvalidParamsError, UnrecoverableError
from src.logger import get_logger
from src.modules.gf_codec import (
    CodingMatrix,
    ECConfig,
    Stripe,
    as_array,
    cauchy_matrix,
    decode_recover,
    encode_columns,
    gf_mul_bytes,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class DeviceCosts:
    """Simulated microseconds per 4 KiB page."""

    seq_write_us: float = DEFAULT_SEQ_WRITE_US
    rand_write_us: float = DEFAULT_RAND_WRITE_US
    seq_read_us: float = DEFAULT_SEQ_READ_US
    rand_read_us: float = DEFAULT_RAND_READ_US

    def for_profile(self, profile: str, hdd_multiplier: float = DEFAULT_HDD_RANDOM_MULTIPLIER):
        if profile == PROFILE_HDD:
            return replace(
                self,
                rand_write_us=self.rand_write_us * hdd_multiplier,
                rand_read_us=self.rand_read_us * hdd_multiplier,
            )
        return self

    def page_cost(self, op: str, sequential: bool) -> float:
        if op == OP_READ:
            return self.seq_read_us if sequential else self.rand_read_us
        return self.seq_write_us if sequential else self.rand_write_us


@dataclass(frozen=True)
class SimConfig:
    ec: ECConfig
    cluster_size: int = DEFAULT_CLUSTER_SIZE
    profile: str = PROFILE_SSD
    costs: DeviceCosts = DeviceCosts()
    hdd_random_multiplier: float = DEFAULT_HDD_RANDOM_MULTIPLIER
    message_us: float = DEFAULT_MESSAGE_US
    byte_ns: float = DEFAULT_BYTE_NS
    unit_capacity: int = DEFAULT_UNIT_CAPACITY
    min_units: int = DEFAULT_MIN_UNITS
    max_units: int = DEFAULT_MAX_UNITS
    hard_max_units: int = DEFAULT_HARD_MAX_UNITS
    pools_per_device: int = DEFAULT_POOLS_PER_DEVICE
    flush_age_us: int = DEFAULT_FLUSH_AGE_US
    replication_override: Optional[int] = None
    tick_period_us: int = DEFAULT_TICK_PERIOD_US
    recycle_threshold: float = DEFAULT_RECYCLE_THRESHOLD
    pl_log_budget: int = DEFAULT_PL_LOG_BUDGET
    plr_reserved_bytes: int = DEFAULT_PLR_RESERVED_BYTES
    cord_buffer_bytes: int = DEFAULT_CORD_BUFFER_BYTES
    flags: FrozenSet[str] = ALL_FLAGS
    seed: int = 0
    volume_bytes: int = DEFAULT_VOLUME_BYTES
    volume_slots: int = DEFAULT_VOLUME_SLOTS

    def __post_init__(self):
        if self.profile not in DEVICE_PROFILES:
            raise InvalidParamsError(f"unknown device profile {self.profile!r}")
        if self.cluster_size < self.ec.width:
            raise InvalidParamsError(
                f"cluster of {self.cluster_size} nodes cannot host RS({self.ec.k},{self.ec.m})"
            )
        unknown = set(self.flags) - ALL_FLAGS
        if unknown:
            raise InvalidParamsError(f"unknown flags {sorted(unknown)}")

    @property
    def replication(self) -> int:
        if self.replication_override is not None:
            return self.replication_override
        return REPLICATION[self.profile]

    @property
    def device_costs(self) -> DeviceCosts:
        return self.costs.for_profile(self.profile, self.hdd_random_multiplier)

    def flag(self, name: str) -> bool:
        return name in self.flags

    def with_flags(self, flags) -> "SimConfig":
        return replace(self, flags=frozenset(flags))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["flags"] = sorted(self.flags)
        return out

    def fingerprint(self) -> str:
        """Hash of everything except TSUE flags and the seed."""
        body = self.to_dict()
        body.pop("flags")
        body.pop("seed")
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


# --- storage ---

class BlockStore:
    """Sparse block contents in 4 KiB pages; absent pages read as zeros."""

    def __init__(self, block_size: int):
        self.block_size = block_size
        self.pages: Dict[int, np.ndarray] = {}

    def _page(self, idx: int) -> np.ndarray:
        page = self.pages.get(idx)
        if page is None:
            page = np.zeros(PAGE_SIZE, dtype=np.uint8)
            self.pages[idx] = page
        return page

    def _spans(self, offset: int, length: int):
        pos = offset
        end = offset + length
        while pos < end:
            idx = pos // PAGE_SIZE
            lo = pos - idx * PAGE_SIZE
            hi = min(PAGE_SIZE, end - idx * PAGE_SIZE)
            yield idx, lo, hi, pos - offset
            pos = idx * PAGE_SIZE + hi

    def read(self, offset: int, length: int) -> bytes:
        out = np.zeros(length, dtype=np.uint8)
        for idx, lo, hi, at in self._spans(offset, length):
            page = self.pages.get(idx)
            if page is not None:
                out[at:at + hi - lo] = page[lo:hi]
        return out.tobytes()

    def write(self, offset: int, payload) -> None:
        data = as_array(payload)
        for idx, lo, hi, at in self._spans(offset, len(data)):
            self._page(idx)[lo:hi] = data[at:at + hi - lo]

    def xor(self, offset: int, payload) -> None:
        data = as_array(payload)
        for idx, lo, hi, at in self._spans(offset, len(data)):
            self._page(idx)[lo:hi] ^= data[at:at + hi - lo]

    def page_ids(self):
        return set(self.pages)

    def page(self, idx: int) -> np.ndarray:
        page = self.pages.get(idx)
        return page if page is not None else np.zeros(PAGE_SIZE, dtype=np.uint8)


# --- cost models ---

class DeviceModel:
    def __init__(self, costs: DeviceCosts):
        self.costs = costs
        self.counters: Dict[Tuple[str, str], List[int]] = {
            (op, pattern): [0, 0] for op in DEVICE_OPS for pattern in (PATTERN_SEQ, PATTERN_RAND)
        }
        self.cursors: Dict[object, int] = {}
        self.busy_us = 0.0

    def charge(self, op: str, nbytes: int, sequential: bool) -> None:
        if nbytes <= 0:
            raise InvalidParamsError("charge of zero bytes")
        pattern = PATTERN_SEQ if sequential else PATTERN_RAND
        entry = self.counters[(op, pattern)]
        entry[0] += 1
        entry[1] += nbytes
        pages = -(-nbytes // PAGE_SIZE)
        self.busy_us += pages * self.costs.page_cost(op, sequential)

    def access(self, op: str, region, offset: int, nbytes: int, sequential: Optional[bool] = None) -> None:
        """Charge an access; sequential iff it extends the region's cursor."""
        if sequential is None:
            sequential = self.cursors.get(region) == offset
        self.cursors[region] = offset + nbytes
        self.charge(op, nbytes, sequential)

    def totals(self) -> Dict[str, int]:
        out = {}
        for op in DEVICE_OPS:
            for pattern in (PATTERN_SEQ, PATTERN_RAND):
                ops, nbytes = self.counters[(op, pattern)]
                out[f"{pattern}_{op}_ops"] = ops
                out[f"{pattern}_{op}_bytes"] = nbytes
            out[f"{op}_ops"] = out[f"seq_{op}_ops"] + out[f"rand_{op}_ops"]
            out[f"{op}_bytes"] = out[f"seq_{op}_bytes"] + out[f"rand_{op}_bytes"]
        out["read_write_ops"] = sum(out[f"{op}_ops"] for op in DEVICE_OPS)
        out["read_write_bytes"] = sum(out[f"{op}_bytes"] for op in DEVICE_OPS)
        return out


class NetworkModel:
    def __init__(self, message_us: float, byte_ns: float):
        self.message_us = message_us
        self.byte_ns = byte_ns
        self.messages = 0
        self.bytes = 0
        self.client_messages = 0
        self.client_bytes = 0
        self.by_kind: Dict[str, List[int]] = {}
        self.cost_us = 0.0

    def record(self, nbytes: int, kind: str, client: bool) -> None:
        if client:
            self.client_messages += 1
            self.client_bytes += nbytes
            return
        self.messages += 1
        self.bytes += nbytes
        entry = self.by_kind.setdefault(kind, [0, 0])
        entry[0] += 1
        entry[1] += nbytes
        self.cost_us += self.message_us + nbytes * self.byte_ns / 1000.0

    def totals(self) -> Dict[str, int]:
        return {
            "network_messages": self.messages,
            "network_bytes": self.bytes,
            "client_messages": self.client_messages,
            "client_bytes": self.client_bytes,
        }


# --- placement ---

@dataclass(frozen=True)
class Placement:
    stripe_id: int
    k: int
    nodes: Tuple[int, ...]

    def data_node(self, block_index: int) -> int:
        return self.nodes[block_index]

    def parity_node(self, parity_index: int) -> int:
        return self.nodes[self.k + parity_index]

    @property
    def parity_nodes(self) -> Tuple[int, ...]:
        return self.nodes[self.k:]

    def role_of(self, node: int) -> Optional[int]:
        try:
            return self.nodes.index(node)
        except ValueError:
            return None


def place_stripe(stripe_id: int, cfg: ECConfig, cluster_size: int) -> Placement:
    if cluster_size < cfg.width:
        raise InvalidParamsError(
            f"cluster of {cluster_size} nodes cannot host RS({cfg.k},{cfg.m})"
        )
    nodes = tuple((stripe_id + r) % cluster_size for r in range(cfg.width))
    return Placement(stripe_id, cfg.k, nodes)


def replica_nodes(node: int, pool_index: int, copies: int, cluster_size: int) -> List[int]:
    """Successive replica hosts for one DataLog pool, never the primary."""
    out = []
    step = 1 + pool_index % (cluster_size - 1)
    candidate = (node + step) % cluster_size
    while len(out) < copies:
        if candidate != node and candidate not in out:
            out.append(candidate)
        candidate = (candidate + 1) % cluster_size
    return out


def delta_hosts(placement: Placement, copies: int, cluster_size: int) -> List[int]:
    """DeltaLog hosts: parity-1, parity-2, ... then the nodes after the last parity host."""
    hosts = list(placement.parity_nodes[:copies])
    candidate = placement.nodes[-1]
    while len(hosts) < copies:
        candidate = (candidate + 1) % cluster_size
        if candidate not in hosts:
            hosts.append(candidate)
    return hosts


class Node:
    def __init__(self, node_id: int, costs: DeviceCosts, block_size: int):
        self.node_id = node_id
        self.device = DeviceModel(costs)
        self.block_size = block_size
        self.blocks: Dict[Tuple[int, int], BlockStore] = {}
        self.alive = True

    def store(self, stripe_id: int, role: int) -> BlockStore:
        key = (stripe_id, role)
        store = self.blocks.get(key)
        if store is None:
            store = BlockStore(self.block_size)
            self.blocks[key] = store
        return store


# --- reports ---

def summarize_residence(samples: List[int]) -> Dict[str, float]:
    if not samples:
        return {"count": 0, "mean": 0.0, "p50": 0.0, "p90": 0.0, "p99": 0.0, "max": 0.0}
    arr = np.asarray(samples, dtype=np.float64)
    p50, p90, p99 = np.percentile(arr, [50, 90, 99])
    return {
        "count": int(arr.size),
        "mean": float(arr.mean()),
        "p50": float(p50),
        "p90": float(p90),
        "p99": float(p99),
        "max": float(arr.max()),
    }


@dataclass
class MetricsSnapshot:
    strategy: Optional[str]
    aggregate: Dict[str, int]
    per_node: Dict[int, Dict[str, int]]
    network_by_kind: Dict[str, Dict[str, int]]
    residence_us: Dict[str, Dict[str, float]]
    sim_time_us: Dict[str, float]

    def __getitem__(self, counter: str) -> int:
        return self.aggregate[counter]

    def diff(self, earlier: "MetricsSnapshot") -> Dict[str, int]:
        return {k: v - earlier.aggregate.get(k, 0) for k, v in self.aggregate.items()}

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "counters": dict(self.aggregate),
            "per_node": {str(n): dict(c) for n, c in self.per_node.items()},
            "network_by_kind": self.network_by_kind,
            "residence_us": self.residence_us,
            "sim_time_us": self.sim_time_us,
        }


@dataclass
class RecoveryReport:
    node: int
    rebuilt: List[Tuple[int, int]] = field(default_factory=list)
    reencoded_stripes: List[int] = field(default_factory=list)
    decoded_stripes: List[int] = field(default_factory=list)
    # stripes still missing another member, left unverified
    degraded_stripes: List[int] = field(default_factory=list)
    replayed_records: int = 0
    verified: bool = True


class ClusterSim:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.ec = cfg.ec
        self.matrix: CodingMatrix = cauchy_matrix(cfg.ec.k, cfg.ec.m)
        self.nodes = [Node(i, cfg.device_costs, cfg.ec.block_size) for i in range(cfg.cluster_size)]
        self.network = NetworkModel(cfg.message_us, cfg.byte_ns)
        self.now_us = 0
        self.stripes = set()
        self.strategy = None
        self._placements: Dict[int, Placement] = {}

    # --- wiring ---

    def attach(self, strategy) -> None:
        self.strategy = strategy

    def placement(self, stripe_id: int) -> Placement:
        p = self._placements.get(stripe_id)
        if p is None:
            p = place_stripe(stripe_id, self.ec, self.cfg.cluster_size)
            self._placements[stripe_id] = p
        return p

    def node_of(self, stripe_id: int, role: int) -> int:
        return self.placement(stripe_id).nodes[role]

    def is_alive(self, node: int) -> bool:
        return node == CLIENT_NODE or self.nodes[node].alive

    @property
    def failed_nodes(self) -> List[int]:
        return [n.node_id for n in self.nodes if not n.alive]

    def advance_to(self, now_us: int) -> None:
        if now_us > self.now_us:
            self.now_us = now_us

    # --- accounting ---

    def charge(self, node: int, op_class: str, nbytes: int) -> None:
        """Charge one device op of class e.g. ``"rand-overwrite"``."""
        if op_class not in OP_CLASSES:
            raise InvalidParamsError(f"unknown op class {op_class!r}")
        pattern, op = op_class.split("-", 1)
        self.nodes[node].device.charge(op, nbytes, pattern == PATTERN_SEQ)

    def send(self, src: int, dst: int, nbytes: int, kind: str = MSG_PARITY_DELTA) -> bool:
        """Count one message; local sends are free. False when dropped."""
        if src == dst:
            return True
        if not (self.is_alive(src) and self.is_alive(dst)):
            return False
        client = CLIENT_NODE in (src, dst)
        self.network.record(nbytes, MSG_CLIENT if client else kind, client)
        return True

    # --- block I/O ---

    def _block(self, stripe_id: int, role: int) -> Tuple[Node, BlockStore]:
        node = self.nodes[self.node_of(stripe_id, role)]
        return node, node.store(stripe_id, role)

    def read_block(self, stripe_id: int, role: int, offset: int, length: int,
                   sequential: Optional[bool] = None) -> bytes:
        node, store = self._block(stripe_id, role)
        if not node.alive:
            return bytes(length)
        node.device.access(OP_READ, ("block", stripe_id, role), offset, length, sequential)
        return store.read(offset, length)

    def write_block(self, stripe_id: int, role: int, offset: int, payload,
                    op: str = OP_OVERWRITE, sequential: Optional[bool] = None) -> None:
        node, store = self._block(stripe_id, role)
        if not node.alive:
            return
        self.stripes.add(stripe_id)
        node.device.access(op, ("block", stripe_id, role), offset, len(payload), sequential)
        store.write(offset, payload)

    def xor_block(self, stripe_id: int, role: int, offset: int, payload,
                  op: str = OP_OVERWRITE, sequential: Optional[bool] = None) -> None:
        """Charge one write and XOR ``payload`` in; the caller charged any read."""
        node, store = self._block(stripe_id, role)
        if not node.alive:
            return
        self.stripes.add(stripe_id)
        node.device.access(op, ("block", stripe_id, role), offset, len(payload), sequential)
        store.xor(offset, payload)

    def apply_parity_delta(self, stripe_id: int, parity_index: int, offset: int, payload) -> None:
        """Read-modify-write of one parity extent."""
        role = self.ec.k + parity_index
        node, _ = self._block(stripe_id, role)
        if not node.alive:
            return
        self.read_block(stripe_id, role, offset, len(payload))
        self.xor_block(stripe_id, role, offset, payload)

    def log_write(self, node: int, nbytes: int, op: str = OP_WRITE,
                  sequential: bool = True) -> None:
        if not self.nodes[node].alive:
            return
        self.nodes[node].device.charge(op, nbytes, sequential)

    def log_read(self, node: int, nbytes: int) -> None:
        if not self.nodes[node].alive:
            return
        self.nodes[node].device.charge(OP_READ, nbytes, True)

    def peek_block(self, stripe_id: int, role: int, offset: int, length: int) -> bytes:
        """Uncharged read, for verification only."""
        return self._block(stripe_id, role)[1].read(offset, length)

    def stripe_view(self, stripe_id: int) -> Stripe:
        """Uncharged copy of every block of a stripe, for verification only."""
        k, size = self.ec.k, self.ec.block_size
        blocks = [self.peek_block(stripe_id, role, 0, size) for role in range(self.ec.width)]
        return Stripe(stripe_id, blocks[:k], blocks[k:])

    def fill(self, stripe_id: int, block_index: int, offset: int, payload: bytes) -> None:
        """
        First write of fresh bytes. The data block held zeros there, so
        every parity takes the coefficient-scaled payload directly.
        """
        p = self.placement(stripe_id)
        src = p.data_node(block_index)
        self.stripes.add(stripe_id)
        self.send(CLIENT_NODE, src, len(payload))
        self.write_block(stripe_id, block_index, offset, payload, op=OP_WRITE, sequential=True)
        for j in range(self.ec.m):
            pd = gf_mul_bytes(self.matrix.coef(j, block_index), payload)
            self.send(src, p.parity_node(j), len(payload), MSG_PARITY_DELTA)
            self.xor_block(stripe_id, self.ec.k + j, offset, pd, op=OP_WRITE, sequential=True)

    # --- failure and recovery ---

    def fail_node(self, node: int) -> None:
        n = self.nodes[node]
        if not n.alive:
            return
        logger.info(f"node {node} failed")
        n.alive = False
        n.blocks = {}
        if self.strategy is not None:
            self.strategy.on_fail(node)

    def _check_recoverable(self, node: int) -> List[int]:
        affected = []
        failed = set(self.failed_nodes)
        for stripe_id in sorted(self.stripes):
            p = self.placement(stripe_id)
            if node not in p.nodes:
                continue
            lost = [r for r, n in enumerate(p.nodes) if n in failed]
            if len(lost) > self.ec.m:
                raise UnrecoverableError(stripe_id, lost)
            affected.append(stripe_id)
        return affected

    def recover_node(self, node: int) -> RecoveryReport:
        """
        Bring a failed node back: drain surviving state, rebuild every
        block the node hosted, then let the strategy replay held log
        records onto it.
        """
        if self.nodes[node].alive:
            return RecoveryReport(node)
        affected = self._check_recoverable(node)
        report = RecoveryReport(node)

        if self.strategy is not None:
            self.strategy.drain_for_recovery()

        self.nodes[node].alive = True
        for stripe_id in affected:
            role = self.placement(stripe_id).role_of(node)
            if role >= self.ec.k and self.data_alive(stripe_id):
                self._reencode_parity(stripe_id)
                report.reencoded_stripes.append(stripe_id)
            else:
                self._decode_block(stripe_id, role)
                report.decoded_stripes.append(stripe_id)
            report.rebuilt.append((stripe_id, role))

        report.degraded_stripes = [s for s in affected if not self.stripe_alive(s)]
        report.verified = all(
            self.stripe_consistent(s) for s in affected if s not in report.degraded_stripes
        )

        if self.strategy is not None:
            report.replayed_records = self.strategy.on_recover(node)
        logger.info(
            f"node {node} recovered: {len(report.rebuilt)} blocks rebuilt, "
            f"{report.replayed_records} log records replayed, verified={report.verified}"
        )
        return report

    def block_pages(self, stripe_id: int, role: int) -> set:
        """Ids of the pages ever written in one block; empty on a dead node."""
        node, store = self._block(stripe_id, role)
        return store.page_ids() if node.alive else set()

    def _stripe_pages(self, stripe_id: int, roles) -> List[int]:
        pages = set()
        for role in roles:
            pages |= self.block_pages(stripe_id, role)
        return sorted(pages)

    def _reencode_parity(self, stripe_id: int) -> None:
        """Recompute all parity of a stripe whose data blocks are all alive."""
        k, m = self.ec.k, self.ec.m
        p = self.placement(stripe_id)
        pages = self._stripe_pages(stripe_id, range(k + m))
        for j in range(m):
            self._block(stripe_id, k + j)[1].pages.clear()
        # parity-1 host gathers the data pages and fans the parity out
        coordinator = p.parity_node(0)
        for idx in pages:
            offset = idx * PAGE_SIZE
            data = []
            for i in range(k):
                data.append(self.read_block(stripe_id, i, offset, PAGE_SIZE, sequential=True))
                self.send(p.data_node(i), coordinator, PAGE_SIZE, MSG_RECOVERY)
            for j, parity in enumerate(encode_columns(self.matrix, data)):
                self.send(coordinator, p.parity_node(j), PAGE_SIZE, MSG_RECOVERY)
                self.write_block(stripe_id, k + j, offset, parity, op=OP_WRITE, sequential=True)

    def data_alive(self, stripe_id: int) -> bool:
        p = self.placement(stripe_id)
        return all(self.nodes[p.data_node(i)].alive for i in range(self.ec.k))

    def stripe_alive(self, stripe_id: int) -> bool:
        return all(self.nodes[n].alive for n in self.placement(stripe_id).nodes)

    def _survivors(self, stripe_id: int, role: int) -> List[int]:
        """Roles of the k lowest-id live nodes of a stripe, ``role`` excluded."""
        p = self.placement(stripe_id)
        k = self.ec.k
        survivors = sorted(
            (r for r, n in enumerate(p.nodes) if r != role and self.nodes[n].alive),
            key=lambda r: p.nodes[r],
        )[:k]
        if len(survivors) < k:
            raise UnrecoverableError(stripe_id, [r for r in range(self.ec.width) if r not in survivors])
        return survivors

    def degraded_read(self, stripe_id: int, role: int, offset: int, length: int) -> bytes:
        """
        Rebuild a range of a block whose node is down from k live survivors.
        The caller makes sure the stripe's parity is current.
        """
        p = self.placement(stripe_id)
        survivors = self._survivors(stripe_id, role)
        coordinator = p.nodes[survivors[0]]
        surviving = {}
        for r in survivors:
            surviving[r] = self.read_block(stripe_id, r, offset, length)
            self.send(p.nodes[r], coordinator, length, MSG_RECOVERY)
        return bytes(decode_recover(self.ec, self.matrix, surviving, [role])[role])

    def _decode_block(self, stripe_id: int, role: int) -> None:
        p = self.placement(stripe_id)
        survivors = self._survivors(stripe_id, role)
        dst = p.nodes[role]
        for idx in self._stripe_pages(stripe_id, survivors):
            offset = idx * PAGE_SIZE
            surviving = {}
            for r in survivors:
                surviving[r] = self.read_block(stripe_id, r, offset, PAGE_SIZE, sequential=True)
                self.send(p.nodes[r], dst, PAGE_SIZE, MSG_RECOVERY)
            rebuilt = decode_recover(self.ec, self.matrix, surviving, [role])[role]
            self.write_block(stripe_id, role, offset, rebuilt, op=OP_WRITE, sequential=True)

    def stripe_consistent(self, stripe_id: int) -> bool:
        """False while any member is down: a lost block cannot be checked."""
        if not self.stripe_alive(stripe_id):
            return False
        k, m = self.ec.k, self.ec.m
        for idx in self._stripe_pages(stripe_id, range(k + m)):
            offset = idx * PAGE_SIZE
            data = [self.peek_block(stripe_id, i, offset, PAGE_SIZE) for i in range(k)]
            for j, parity in enumerate(encode_columns(self.matrix, data)):
                if parity.tobytes() != self.peek_block(stripe_id, k + j, offset, PAGE_SIZE):
                    return False
        return True

    # --- reporting ---

    def snapshot(self) -> MetricsSnapshot:
        per_node = {}
        aggregate: Dict[str, int] = {}
        for n in self.nodes:
            totals = n.device.totals()
            per_node[n.node_id] = totals
            for key, value in totals.items():
                aggregate[key] = aggregate.get(key, 0) + value
        aggregate.update(self.network.totals())
        by_kind = {
            kind: {"messages": v[0], "bytes": v[1]}
            for kind, v in sorted(self.network.by_kind.items())
        }
        residence = {}
        name = None
        if self.strategy is not None:
            name = self.strategy.name
            residence = {
                layer: summarize_residence(samples)
                for layer, samples in self.strategy.residence().items()
            }
        sim_time = {
            "max_node_busy_us": max((n.device.busy_us for n in self.nodes), default=0.0),
            "total_device_us": sum(n.device.busy_us for n in self.nodes),
            "network_us": self.network.cost_us,
            "clock_us": float(self.now_us),
        }
        return MetricsSnapshot(name, aggregate, per_node, by_kind, residence, sim_time)
