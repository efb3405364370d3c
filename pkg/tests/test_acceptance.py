"""Larger end-to-end runs. Deselect with ``-m "not slow"``."""
import itertools

import numpy as np
import pytest

from src.constants import (
    ALL_FLAGS,
    KIB,
    MIB,
    MSG_DELTA,
    MSG_PARITY_DELTA,
    STRATEGY_CORD,
    STRATEGY_FO,
    STRATEGY_NAMES,
    STRATEGY_TSUE,
)
from src.modules.cluster_sim import ClusterSim, SimConfig
from src.modules.gf_codec import ECConfig, cauchy_matrix, decode_recover, encode_columns
from src.modules.trace import generate, map_to_updates, profile_params
from src.services.replay_runner import ReplayRunner
from src.strategies import create_strategy
from src.strategies.census import expected_census
from tests.conftest import random_bytes, update
from tests.test_strategies import CENSUS_COUNTERS, disjoint_updates

pytestmark = pytest.mark.slow


def rs64(**overrides):
    values = dict(
        ec=ECConfig(6, 4, 256 * KIB),
        cluster_size=16,
        unit_capacity=1 * MIB,
        pl_log_budget=4 * MIB,
        plr_reserved_bytes=512 * KIB,
        cord_buffer_bytes=2 * MIB,
        flush_age_us=50_000,
        volume_bytes=64 * MIB,
    )
    values.update(overrides)
    return SimConfig(**values)


def ops_for(cfg, profile, n, seed):
    params = profile_params(profile, n, seed=seed, volume_bytes=cfg.volume_bytes)
    return list(map_to_updates(generate(params), cfg, payload_seed=seed))


@pytest.mark.parametrize("name", STRATEGY_NAMES)
def test_census_on_ten_thousand_updates(name):
    cfg = SimConfig(ec=ECConfig(6, 4, 1 * MIB), cluster_size=16)
    sim = ClusterSim(cfg)
    strategy = create_strategy(name, sim)
    n = 10_000
    for req in disjoint_updates(np.random.default_rng(0), cfg.ec.k, cfg.ec.block_size, n):
        strategy.submit(req)
    strategy.quiesce()
    expected = expected_census(name, cfg.ec.m, cfg.flags, cfg.replication)
    snap = sim.snapshot()
    assert {c: snap[c] for c in CENSUS_COUNTERS} == {c: v * n for c, v in expected.items()}


@pytest.mark.parametrize("profile", ["ali", "ten"])
@pytest.mark.parametrize("name", STRATEGY_NAMES)
def test_equivalence_with_failures(name, profile):
    cfg = rs64()
    ops = ops_for(cfg, profile, 100_000, seed=21)
    fail_points = [(len(ops) // 4, 3), (len(ops) // 2, 9), (3 * len(ops) // 4, 14)]
    run = ReplayRunner(show_progress=False).run_strategy(name, cfg, ops, verify=True, fail_points=fail_points)
    assert run.verify.passed, run.verify.detail
    assert all(r["verified"] for r in run.recoveries)


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_locality_ordering_on_ten_profile(seed):
    cfg = SimConfig(ec=ECConfig(6, 4, 1 * MIB), cluster_size=16, volume_bytes=256 * MIB)
    ops = ops_for(cfg, "ten", 5000, seed)
    runner = ReplayRunner(show_progress=False)
    snaps = {name: runner.run_strategy(name, cfg, ops).snapshot for name in STRATEGY_NAMES}

    tsue = snaps[STRATEGY_TSUE]
    assert tsue["overwrite_ops"] <= 0.15 * snaps[STRATEGY_FO]["overwrite_ops"]
    assert tsue["read_write_ops"] == min(s["read_write_ops"] for s in snaps.values())
    assert tsue["network_bytes"] <= 1.1 * snaps[STRATEGY_CORD]["network_bytes"]


def _tsue_breakdown(ec, flags, seed):
    cfg = SimConfig(ec=ec, cluster_size=16, flags=frozenset(flags))
    sim = ClusterSim(cfg)
    tsue = create_strategy(STRATEGY_TSUE, sim)
    rng = np.random.default_rng(seed)
    for _ in range(60):
        block = int(rng.integers(ec.k))
        offset = int(rng.integers(4)) * 4 * KIB
        tsue.submit(update(0, block, offset, random_bytes(rng, 4 * KIB)))
    tsue.quiesce()
    snap = sim.snapshot()
    placement = sim.placement(0)
    data = sum(snap.per_node[placement.data_node(b)]["overwrite_ops"] for b in range(ec.k))
    parity = sum(snap.per_node[n]["overwrite_ops"] for n in placement.parity_nodes)
    deltas = sum(snap.network_by_kind.get(kind, {}).get("messages", 0) for kind in (MSG_DELTA, MSG_PARITY_DELTA))
    return data, parity, deltas


@pytest.mark.parametrize("k,m", [(6, 4), (4, 2)])
@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_breakdown_flags_strictly_help(k, m, seed):
    ec = ECConfig(k, m, 1 * MIB)
    base = _tsue_breakdown(ec, set(), seed)
    o1 = _tsue_breakdown(ec, {"o1"}, seed)
    o12 = _tsue_breakdown(ec, {"o1", "o2"}, seed)
    o1234 = _tsue_breakdown(ec, ALL_FLAGS - {"o5"}, seed)
    full = _tsue_breakdown(ec, ALL_FLAGS, seed)
    assert o1[0] < base[0]
    assert o12[1] < o1[1]
    assert full[2] < o1234[2]


def test_reads_never_stale_under_tsue():
    cfg = rs64()
    ops = ops_for(cfg, "msr", 100_000, seed=8)
    run = ReplayRunner(show_progress=False).run_strategy(STRATEGY_TSUE, cfg, ops, verify=True)
    assert run.verify.passed, run.verify.detail


@pytest.mark.parametrize("seed", range(100))
def test_random_failure_points_recover(seed):
    cfg = rs64(cluster_size=12)
    ops = ops_for(cfg, "ali", 1500, seed=seed)
    rng = np.random.default_rng(seed)
    # distinct nodes, so at most m are ever down together
    losses = int(rng.integers(1, cfg.ec.m + 1))
    nodes = [int(n) for n in rng.choice(cfg.cluster_size, size=losses, replace=False)]
    starts = sorted(int(p) for p in rng.integers(0, len(ops), size=losses))
    fail_points = [(pos, node, pos + int(rng.integers(1, 400))) for pos, node in zip(starts, nodes)]
    name = STRATEGY_NAMES[seed % len(STRATEGY_NAMES)]
    run = ReplayRunner(show_progress=False).run_strategy(name, cfg, ops, verify=True, fail_points=fail_points)
    assert run.verify.passed, run.verify.detail
    assert sorted(r["node"] for r in run.recoveries) == sorted(nodes)


@pytest.mark.parametrize("k,m", [(2, 1), (4, 2), (6, 3), (6, 4)])
def test_mds_recovery_many_stripes(k, m):
    cfg = ECConfig(k, m, 4096)
    mat = cauchy_matrix(k, m)
    rng = np.random.default_rng(k * 10 + m)
    for _ in range(1000):
        data = [random_bytes(rng, 32) for _ in range(k)]
        blocks = data + [p.tobytes() for p in encode_columns(mat, data)]
        for lost in range(1, m + 1):
            for missing in itertools.combinations(range(k + m), lost):
                alive = [p for p in range(k + m) if p not in missing][:k]
                out = decode_recover(cfg, mat, {p: blocks[p] for p in alive}, missing)
                assert out == {p: blocks[p] for p in missing}
