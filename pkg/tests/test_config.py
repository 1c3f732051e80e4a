import json
import logging
import os

import pytest

from transforseg.core.errors import ConfigError
from transforseg.utils.config import (
    THREADS_ENV,
    ConfigManager,
    RunConfig,
    apply_overrides,
    worker_count,
)
from transforseg.utils.logger import reset_logging, setup_logging

SMALL = """
[run]
out_dir = "out"
seed = 5

[scene]
image_size = 32
catheter_length = 18.0
force_range = 0.02

[model]
variant = "desk"
image_size = 32
patch_size = 8

[train]
dataset = "data/ds"
epochs = 3
learning_rate = 0.001
lambda_seg_top = 0.5

[logging]
file = "logs/run.log"
"""


@pytest.fixture(autouse=True)
def _no_thread_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)


def _write(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_toml_paths_resolve_against_the_config_file(tmp_path):
    config = ConfigManager(_write(tmp_path, SMALL)).load_config()
    assert config["train"]["dataset_abs"] == os.path.join(str(tmp_path), "data", "ds")
    assert config["logging"]["file_abs"] == os.path.join(str(tmp_path), "logs", "run.log")
    assert "checkpoint_dir_abs" not in config["train"]


def test_json_configs_are_accepted(tmp_path):
    path = _write(tmp_path, json.dumps({"train": {"dataset": "/abs/ds"}}), "config.json")
    config = ConfigManager(path).load_config()
    assert config["train"]["dataset_abs"] == "/abs/ds"


def test_missing_or_broken_files_are_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ConfigManager(str(tmp_path / "nope.toml")).load_config()
    with pytest.raises(ConfigError):
        ConfigManager(_write(tmp_path, "[run\nseed = ")).load_config()


def test_run_config_from_file(tmp_path):
    run = RunConfig.from_sources(ConfigManager(_write(tmp_path, SMALL)).load_config())
    assert run.seed == 5 and run.scene.seed == 5 and run.train.seed == 5
    assert run.model.variant == "desk" and run.model.image_size == 32
    assert run.train.epochs == 3 and run.train.learning_rate == 0.001
    assert run.train.weights.seg_top == 0.5 and run.train.weights.seg_side == 1.0
    assert run.train.dataset == os.path.join(str(tmp_path), "data", "ds")
    assert run.train.checkpoint_dir == os.path.join(str(tmp_path), "out", "train")
    assert run.threads == 1


def test_defaults_without_a_file():
    run = RunConfig.from_sources({})
    assert run.model.variant == "desk"
    assert run.model.image_size == run.scene.image_size == 64
    assert run.train.weights.force == 1.0
    assert run.eval_split == "test" and run.hist_bins == 41


def test_overrides_replace_values_and_drop_resolved_paths(tmp_path):
    config = ConfigManager(_write(tmp_path, SMALL)).load_config()
    merged = apply_overrides(config, {"train.dataset": "/elsewhere", "train.epochs": None, "eval.split": "val"})
    assert merged["train"]["dataset"] == "/elsewhere"
    assert "dataset_abs" not in merged["train"]
    assert merged["train"]["epochs"] == 3
    assert merged["eval"]["split"] == "val"
    assert config["train"]["dataset_abs"].endswith("ds")
    with pytest.raises(ConfigError):
        apply_overrides(config, {"epochs": 3})


def test_thread_count(monkeypatch):
    assert worker_count({}) == 1
    assert worker_count({"run": {"threads": 3}}) == 3
    monkeypatch.setenv(THREADS_ENV, "4")
    assert worker_count({"run": {"threads": 3}}) == 4
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(ConfigError):
        worker_count({})


@pytest.mark.parametrize(
    "config",
    [
        {"train": {"lr": 0.1}},
        {"model": {"variant": "huge"}},
        {"scene": {"image_size": 32}},
        {"eval": {"split": "holdout"}},
        {"train": {"epochs": 0}},
        {"train": {"lambda_force": -1.0}},
        {"run": {"threads": "many"}},
    ],
)
def test_invalid_configs(config):
    with pytest.raises(ConfigError):
        RunConfig.from_sources(config)


def test_setup_logging_writes_a_file(tmp_path):
    reset_logging()
    try:
        setup_logging({"logging": {"file": "logs/t.log"}}, str(tmp_path), level_override="DEBUG")
        logging.getLogger("transforseg.test").debug("hello from the test")
        for handler in logging.getLogger().handlers:
            handler.flush()
        assert "hello from the test" in (tmp_path / "logs" / "t.log").read_text()
        assert logging.getLogger().level == logging.DEBUG
    finally:
        for handler in logging.getLogger().handlers[:]:
            logging.getLogger().removeHandler(handler)
            handler.close()
        reset_logging()


def test_variant_size_mismatch_names_the_setting_to_change():
    with pytest.raises(ConfigError, match=r"set scene.image_size = 224 or model.image_size = 64"):
        RunConfig.from_sources({"model": {"variant": "tiny"}})
