import copy
import os

import yaml
from dotenv import load_dotenv

from src.constants import (
    ALL_FLAGS,
    DEFAULT_BLOCK_SIZE,
    DEFAULT_BYTE_NS,
    DEFAULT_CLUSTER_SIZE,
    DEFAULT_CORD_BUFFER_BYTES,
    DEFAULT_FLUSH_AGE_US,
    DEFAULT_HARD_MAX_UNITS,
    DEFAULT_HDD_RANDOM_MULTIPLIER,
    DEFAULT_K,
    DEFAULT_M,
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
    DEVICE_PROFILES,
    PROFILE_SSD,
    REPLICATION,
)
from src.errors import ConfigError, InvalidParamsError
from src.logger import get_logger
from src.modules.cluster_sim import DeviceCosts, SimConfig
from src.modules.gf_codec import ECConfig

# Load environment variables from .env file
load_dotenv()

logger = get_logger(__name__)

DEFAULT_CONFIG = {
    "cluster": {"size": DEFAULT_CLUSTER_SIZE, "profile": PROFILE_SSD},
    "ec": {"k": DEFAULT_K, "m": DEFAULT_M, "block_size": DEFAULT_BLOCK_SIZE},
    "device": {
        "ssd": {
            "seq_write_us": DEFAULT_SEQ_WRITE_US,
            "rand_write_us": DEFAULT_RAND_WRITE_US,
            "seq_read_us": DEFAULT_SEQ_READ_US,
            "rand_read_us": DEFAULT_RAND_READ_US,
        },
        "hdd_random_multiplier": DEFAULT_HDD_RANDOM_MULTIPLIER,
    },
    "network": {"message_us": DEFAULT_MESSAGE_US, "byte_ns": DEFAULT_BYTE_NS},
    "log_pool": {
        "unit_capacity": DEFAULT_UNIT_CAPACITY,
        "min_units": DEFAULT_MIN_UNITS,
        "max_units": DEFAULT_MAX_UNITS,
        "hard_max_units": DEFAULT_HARD_MAX_UNITS,
        "pools_per_device": DEFAULT_POOLS_PER_DEVICE,
        "flush_age_us": DEFAULT_FLUSH_AGE_US,
    },
    "replication": dict(REPLICATION),
    "strategies": {
        "tick_period_us": DEFAULT_TICK_PERIOD_US,
        "recycle_threshold": DEFAULT_RECYCLE_THRESHOLD,
        "pl_log_budget": DEFAULT_PL_LOG_BUDGET,
        "plr_reserved_bytes": DEFAULT_PLR_RESERVED_BYTES,
        "cord_buffer_bytes": DEFAULT_CORD_BUFFER_BYTES,
    },
    "trace": {"volume_bytes": DEFAULT_VOLUME_BYTES, "volume_slots": DEFAULT_VOLUME_SLOTS},
    "flags": sorted(ALL_FLAGS),
    "logging": {"dir": "logs", "level": "INFO"},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


class ConfigLoader:
    def __init__(self, config_path=None):
        # explicit path > ECBENCH_CONFIG > built-in defaults
        self.config_path = config_path or os.getenv("ECBENCH_CONFIG")
        self.config = self._load_config()
        self._override_with_env()

    def _load_config(self):
        if not self.config_path:
            logger.warning("No config file given; using built-in defaults.")
            return copy.deepcopy(DEFAULT_CONFIG)
        if not os.path.exists(self.config_path):
            raise ConfigError(f"Config file not found at {self.config_path}")

        with open(self.config_path, "r", encoding="utf-8") as f:
            try:
                loaded = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"Error parsing config file: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"{self.config_path}: top level must be a mapping")
        return _deep_merge(DEFAULT_CONFIG, loaded)

    def _override_with_env(self):
        """Override configuration with environment variables."""
        if os.getenv("ECBENCH_DEVICE_PROFILE"):
            self.config["cluster"]["profile"] = os.getenv("ECBENCH_DEVICE_PROFILE").lower()

        if os.getenv("ECBENCH_CLUSTER_SIZE"):
            try:
                self.config["cluster"]["size"] = int(os.getenv("ECBENCH_CLUSTER_SIZE"))
            except ValueError:
                raise ConfigError(
                    f"ECBENCH_CLUSTER_SIZE must be an integer, got {os.getenv('ECBENCH_CLUSTER_SIZE')!r}"
                ) from None

        if os.getenv("ECBENCH_LOG_LEVEL"):
            self.config["logging"]["level"] = os.getenv("ECBENCH_LOG_LEVEL").upper()
        if os.getenv("ECBENCH_LOG_DIR"):
            self.config["logging"]["dir"] = os.getenv("ECBENCH_LOG_DIR")

    @property
    def cluster_config(self):
        return self.config.get("cluster", {})

    @property
    def ec_config(self):
        return self.config.get("ec", {})

    @property
    def device_config(self):
        return self.config.get("device", {})

    @property
    def pool_config(self):
        return self.config.get("log_pool", {})

    @property
    def strategy_config(self):
        return self.config.get("strategies", {})

    @property
    def flags(self):
        return frozenset(self.config.get("flags") or [])

    @property
    def logging_config(self):
        return self.config.get("logging", {})

    def save_config(self, new_config=None, path=None):
        """Write the effective configuration as YAML."""
        target = path or self.config_path
        if not target:
            raise ConfigError("no path to save the configuration to")
        data = new_config if new_config is not None else self.config
        parent = os.path.dirname(os.path.abspath(target))
        os.makedirs(parent, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            yaml.safe_dump(data, f, allow_unicode=True, default_flow_style=False, sort_keys=False)
        if new_config is not None:
            self.config = new_config
            self._override_with_env()
        return target

    def sim_config(self, flags=None, seed=0):
        """Immutable simulator configuration for one run."""
        cluster = self.cluster_config
        profile = cluster.get("profile", PROFILE_SSD)
        if profile not in DEVICE_PROFILES:
            raise ConfigError(f"unknown device profile {profile!r} (choose ssd or hdd)")

        ec = self.ec_config
        ssd = self.device_config.get("ssd", {})
        pools = self.pool_config
        strat = self.strategy_config
        trace = self.config.get("trace", {})
        replication = self.config.get("replication", {})

        chosen = self.flags if flags is None else frozenset(flags)
        copies = replication.get(profile, REPLICATION[profile])
        override = None if copies == REPLICATION[profile] else int(copies)

        try:
            return SimConfig(
                ec=ECConfig(int(ec["k"]), int(ec["m"]), int(ec["block_size"])),
                cluster_size=int(cluster.get("size", DEFAULT_CLUSTER_SIZE)),
                profile=profile,
                costs=DeviceCosts(
                    seq_write_us=float(ssd.get("seq_write_us", DEFAULT_SEQ_WRITE_US)),
                    rand_write_us=float(ssd.get("rand_write_us", DEFAULT_RAND_WRITE_US)),
                    seq_read_us=float(ssd.get("seq_read_us", DEFAULT_SEQ_READ_US)),
                    rand_read_us=float(ssd.get("rand_read_us", DEFAULT_RAND_READ_US)),
                ),
                hdd_random_multiplier=float(
                    self.device_config.get("hdd_random_multiplier", DEFAULT_HDD_RANDOM_MULTIPLIER)
                ),
                message_us=float(self.config["network"]["message_us"]),
                byte_ns=float(self.config["network"]["byte_ns"]),
                unit_capacity=int(pools["unit_capacity"]),
                min_units=int(pools["min_units"]),
                max_units=int(pools["max_units"]),
                hard_max_units=int(pools["hard_max_units"]),
                pools_per_device=int(pools["pools_per_device"]),
                flush_age_us=int(pools["flush_age_us"]),
                replication_override=override,
                tick_period_us=int(strat["tick_period_us"]),
                recycle_threshold=float(strat["recycle_threshold"]),
                pl_log_budget=int(strat["pl_log_budget"]),
                plr_reserved_bytes=int(strat["plr_reserved_bytes"]),
                cord_buffer_bytes=int(strat["cord_buffer_bytes"]),
                flags=chosen,
                seed=int(seed),
                volume_bytes=int(trace["volume_bytes"]),
                volume_slots=int(trace["volume_slots"]),
            )
        except (KeyError, TypeError, ValueError, InvalidParamsError) as e:
            raise ConfigError(f"invalid configuration: {e}") from e


def load_settings(config_path=None):
    """Build a ConfigLoader; the CLI turns ConfigError into exit code 2."""
    return ConfigLoader(config_path)
