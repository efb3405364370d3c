"""
Bench run: replay one request stream under each chosen strategy, verify
against the shadow oracle and collect the report.
"""
import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

from tqdm import tqdm

from src.constants import EXIT_OK, EXIT_VERIFY_FAILED, STRATEGY_TSUE
from src.errors import InvalidParamsError
from src.logger import get_logger
from src.modules.cluster_sim import ClusterSim, SimConfig
from src.modules.io_request import FillRequest, ReadRequest
from src.modules.trace import generate, map_to_updates, profile_params, read_trace
from src.services.oracle import ShadowOracle, VerificationResult
from src.services.report import build_report, strategy_entry, write_report
from src.strategies import create_strategy

logger = get_logger(__name__)


@dataclass
class RunSpec:
    strategies: List[str]
    trace_path: Optional[str] = None
    synth_profile: Optional[str] = None
    synth_ops: int = 10_000
    seed: int = 0
    verify: bool = False
    flags: Optional[frozenset] = None
    out_path: Optional[str] = None
    fmt: str = "json"
    # (position, node) or (position, node, recover_position)
    fail_points: List[Tuple[int, ...]] = field(default_factory=list)
    clients: int = 1
    config_path: Optional[str] = None

    def validate(self) -> None:
        if not self.strategies:
            raise InvalidParamsError("at least one strategy is required")
        if (self.trace_path is None) == (self.synth_profile is None):
            raise InvalidParamsError("give exactly one of a trace file or a synthetic profile")
        if self.clients < 1:
            raise InvalidParamsError("clients must be >= 1")

    @property
    def trace_source(self) -> str:
        if self.trace_path:
            return os.path.basename(self.trace_path)
        return f"synth:{self.synth_profile}:{self.synth_ops}"


@dataclass
class StrategyRun:
    name: str
    snapshot: object
    verify: Optional[VerificationResult]
    recoveries: List[dict]
    sim: Optional[ClusterSim] = None


class ReplayRunner:
    def __init__(self, log_callback=None, show_progress=None):
        """
        :param log_callback: extra sink for progress lines (e.g. print)
        :param show_progress: tqdm ``disable`` inverse; None shows bars on a terminal only
        """
        self.log_callback = log_callback
        self.show_progress = show_progress

    def log(self, message):
        logger.info(message)
        if self.log_callback:
            timestamp = datetime.now().strftime("%H:%M:%S")
            self.log_callback(f"[{timestamp}] {message}")

    # --- input ---

    def load_records(self, spec: RunSpec, cfg: SimConfig):
        if spec.trace_path:
            return list(read_trace(spec.trace_path))
        params = profile_params(spec.synth_profile, spec.synth_ops, seed=spec.seed, volume_bytes=cfg.volume_bytes)
        return list(generate(params))

    def build_ops(self, spec: RunSpec, cfg: SimConfig) -> list:
        return list(map_to_updates(self.load_records(spec, cfg), cfg, payload_seed=spec.seed))

    # --- one strategy ---

    def run_strategy(self, name: str, cfg: SimConfig, ops: Sequence, verify: bool = False,
                     fail_points: Sequence[Tuple[int, ...]] = ()) -> StrategyRun:
        """
        Replay ``ops`` under one strategy. A fail point ``(pos, node)`` fails
        and recovers ``node`` before op ``pos``; ``(pos, node, until)`` keeps
        it down until op ``until``, so later points can overlap it.
        """
        sim = ClusterSim(cfg)
        strategy = create_strategy(name, sim)
        oracle = ShadowOracle(sim)
        failures: Dict[int, List[Tuple[int, Optional[int]]]] = {}
        for point in fail_points:
            pos, node, until = self._unpack_fail_point(point)
            failures.setdefault(pos, []).append((node, until))
        returns: Dict[int, List[Tuple[int, int]]] = {}
        recoveries: List[dict] = []
        period = cfg.tick_period_us
        next_tick = period
        result: Optional[VerificationResult] = None

        disable = None if self.show_progress is None else not self.show_progress
        for pos, req in enumerate(tqdm(ops, desc=name, unit="op", disable=disable, leave=False)):
            self._inject(sim, pos, failures, returns, recoveries)

            while next_tick <= req.arrival_time:
                if not strategy.has_pending():
                    next_tick = (req.arrival_time // period + 1) * period
                    break
                strategy.background_tick(next_tick)
                next_tick += period

            if isinstance(req, ReadRequest):
                got = strategy.read(req.stripe_id, req.block_index, req.offset, req.length)
                if verify:
                    check = oracle.check_read(req, got)
                    if not check.passed:
                        self.log(f"❌ {name}: {check.detail}")
                        result = check
                        break
                continue
            if isinstance(req, FillRequest):
                strategy.handle_write(req)
            else:
                strategy.submit(req)
            oracle.apply(req)

        if result is None:
            # points past the end of the stream still fire, then every node comes back
            while failures or returns:
                self._inject(sim, min(set(failures) | set(returns)), failures, returns, recoveries)
            strategy.quiesce()
            if verify:
                result = oracle.verify(sim)
                broken = [r for r in recoveries if not r["verified"]]
                if result.passed and broken:
                    result = VerificationResult(
                        False, f"node {broken[0]['node']} rebuilt into an inconsistent stripe"
                    )
        return StrategyRun(name, sim.snapshot(), result, recoveries, sim)

    @staticmethod
    def _unpack_fail_point(point) -> Tuple[int, int, Optional[int]]:
        if len(point) == 2:
            return point[0], point[1], None
        pos, node, until = point
        if until <= pos:
            raise InvalidParamsError(f"node {node} must come back after op {pos}, not at {until}")
        return pos, node, until

    def _inject(self, sim: ClusterSim, pos: int, failures, returns, recoveries: List[dict]) -> None:
        for node, failed_at in returns.pop(pos, []):
            recoveries.append(self._recover(sim, node, failed_at, pos))
        for node, until in failures.pop(pos, []):
            self._fail(sim, node, pos)
            if until is None:
                recoveries.append(self._recover(sim, node, pos, pos))
            else:
                returns.setdefault(until, []).append((node, pos))

    def _fail(self, sim: ClusterSim, node: int, pos: int) -> None:
        if not 0 <= node < sim.cfg.cluster_size:
            raise InvalidParamsError(f"fail point names node {node}, cluster has {sim.cfg.cluster_size}")
        self.log(f"⚠️ failing node {node} before op {pos}")
        sim.fail_node(node)

    def _recover(self, sim: ClusterSim, node: int, failed_at: int, pos: int) -> dict:
        rep = sim.recover_node(node)
        return {
            "position": failed_at,
            "recovered_at": pos,
            "node": node,
            "rebuilt_blocks": len(rep.rebuilt),
            "reencoded_stripes": len(rep.reencoded_stripes),
            "decoded_stripes": len(rep.decoded_stripes),
            "degraded_stripes": len(rep.degraded_stripes),
            "replayed_records": rep.replayed_records,
            "verified": rep.verified,
        }

    # --- whole run ---

    def run(self, spec: RunSpec, settings) -> Tuple[dict, int]:
        """Returns the report and the exit code (0 iff every verification passed)."""
        spec.validate()
        base_cfg = settings.sim_config(flags=spec.flags, seed=spec.seed)
        ops = self.build_ops(spec, base_cfg)
        self.log(f"🚀 replaying {len(ops)} ops from {spec.trace_source} under {', '.join(spec.strategies)}")

        entries = {}
        exit_code = EXIT_OK
        for name in spec.strategies:
            run = self.run_strategy(name, base_cfg, ops, verify=spec.verify, fail_points=spec.fail_points)
            flags = sorted(base_cfg.flags) if name == STRATEGY_TSUE else []
            entries[name] = strategy_entry(run.snapshot, run.verify, run.recoveries, flags)
            if run.verify is not None and not run.verify.passed:
                self.log(f"❌ {name}: verification failed: {run.verify.detail}")
                exit_code = EXIT_VERIFY_FAILED
                break
            status = "verified" if run.verify is not None else "done"
            self.log(f"✅ {name}: {status}, overwrite_ops={run.snapshot['overwrite_ops']}")

        report = build_report(
            {
                "config_fingerprint": base_cfg.fingerprint(),
                "trace_source": spec.trace_source,
                "seed": spec.seed,
                "ops": len(ops),
                "clients": spec.clients,
            },
            entries,
        )
        if spec.out_path:
            write_report(report, spec.out_path, spec.fmt)
        return report, exit_code
