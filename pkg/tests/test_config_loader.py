import pytest
import yaml

from src.config_loader import DEFAULT_CONFIG, ConfigLoader, load_settings
from src.constants import ALL_FLAGS, DEFAULT_BLOCK_SIZE, DEFAULT_K, DEFAULT_M, PROFILE_HDD
from src.errors import ConfigError


def write_yaml(tmp_path, data, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_defaults_without_file():
    settings = load_settings()
    assert settings.ec_config == DEFAULT_CONFIG["ec"]
    cfg = settings.sim_config()
    assert (cfg.ec.k, cfg.ec.m, cfg.ec.block_size) == (DEFAULT_K, DEFAULT_M, DEFAULT_BLOCK_SIZE)
    assert cfg.flags == ALL_FLAGS
    assert cfg.replication == 2


def test_file_is_deep_merged(tmp_path):
    path = write_yaml(tmp_path, {"ec": {"k": 4}, "log_pool": {"min_units": 3}})
    settings = ConfigLoader(path)
    assert settings.ec_config == {"k": 4, "m": DEFAULT_M, "block_size": DEFAULT_BLOCK_SIZE}
    assert settings.pool_config["min_units"] == 3
    assert settings.pool_config["max_units"] == DEFAULT_CONFIG["log_pool"]["max_units"]
    assert DEFAULT_CONFIG["ec"]["k"] == DEFAULT_K


def test_config_env_var_points_at_file(tmp_path, monkeypatch):
    monkeypatch.setenv("ECBENCH_CONFIG", write_yaml(tmp_path, {"cluster": {"size": 12}}))
    assert load_settings().sim_config().cluster_size == 12


@pytest.mark.parametrize("content", ["ec: [1, 2", "- just\n- a list\n"])
def test_unreadable_file(tmp_path, content):
    path = tmp_path / "bad.yaml"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        ConfigLoader(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ConfigLoader(str(tmp_path / "absent.yaml"))


def test_env_overrides(monkeypatch):
    monkeypatch.setenv("ECBENCH_DEVICE_PROFILE", "HDD")
    monkeypatch.setenv("ECBENCH_CLUSTER_SIZE", "20")
    monkeypatch.setenv("ECBENCH_LOG_LEVEL", "debug")
    settings = load_settings()
    cfg = settings.sim_config()
    assert cfg.profile == PROFILE_HDD
    assert cfg.replication == 3
    assert cfg.cluster_size == 20
    assert settings.logging_config["level"] == "DEBUG"


def test_bad_env_cluster_size(monkeypatch):
    monkeypatch.setenv("ECBENCH_CLUSTER_SIZE", "lots")
    with pytest.raises(ConfigError):
        load_settings()


def test_replication_override(tmp_path):
    settings = ConfigLoader(write_yaml(tmp_path, {"replication": {"ssd": 3}}))
    assert settings.sim_config().replication == 3


def test_flags_argument_wins_over_file(tmp_path):
    settings = ConfigLoader(write_yaml(tmp_path, {"flags": ["o1"]}))
    assert settings.sim_config().flags == frozenset({"o1"})
    assert settings.sim_config(flags=[]).flags == frozenset()


@pytest.mark.parametrize("data", [
    {"cluster": {"size": 5}},
    {"cluster": {"profile": "tape"}},
    {"ec": {"block_size": 1000}},
    {"flags": ["o7"]},
    {"log_pool": {"unit_capacity": "big"}},
])
def test_invalid_values_raise_config_error(tmp_path, data):
    with pytest.raises(ConfigError):
        ConfigLoader(write_yaml(tmp_path, data)).sim_config()


def test_save_config_round_trip(tmp_path):
    settings = ConfigLoader(write_yaml(tmp_path, {"ec": {"m": 3}}))
    target = settings.save_config(path=str(tmp_path / "out" / "saved.yaml"))
    assert ConfigLoader(target).config == settings.config


def test_save_without_target():
    with pytest.raises(ConfigError):
        load_settings().save_config()
