import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.constants import KIB, MIB
from src.modules.cluster_sim import ClusterSim, SimConfig
from src.modules.gf_codec import ECConfig
from src.modules.io_request import FillRequest, UpdateRequest


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    """Keep user config and log settings out of the tests."""
    for var in ("ECBENCH_CONFIG", "ECBENCH_DEVICE_PROFILE", "ECBENCH_CLUSTER_SIZE", "ECBENCH_LOG_LEVEL"):
        monkeypatch.delenv(var, raising=False)
    monkeypatch.setenv("ECBENCH_LOG_DIR", str(tmp_path / "logs"))


def small_config(k=4, m=2, block_size=64 * KIB, cluster_size=8, **overrides):
    values = dict(
        ec=ECConfig(k, m, block_size),
        cluster_size=cluster_size,
        unit_capacity=256 * KIB,
        pl_log_budget=1 * MIB,
        plr_reserved_bytes=128 * KIB,
        cord_buffer_bytes=512 * KIB,
        volume_bytes=2 * MIB,
        volume_slots=2,
    )
    values.update(overrides)
    return SimConfig(**values)


@pytest.fixture
def cfg():
    return small_config()


@pytest.fixture
def sim_factory():
    def make(cfg=None, **overrides):
        return ClusterSim(cfg or small_config(**overrides))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_bytes(rng, n):
    return rng.integers(0, 256, size=n, dtype=np.uint8).tobytes()


def update(stripe_id, block_index, offset, payload, at=0):
    return UpdateRequest(stripe_id, block_index, offset, payload, at)


def fill(stripe_id, block_index, offset, payload, at=0):
    return FillRequest(stripe_id, block_index, offset, payload, at)
