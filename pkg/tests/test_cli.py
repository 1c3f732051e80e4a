import json
from pathlib import Path

import numpy as np
import pytest

from transforseg import main as main_module
from transforseg.core.verify import CheckResult
from transforseg.data.pgm import read_pgm, write_pgm
from transforseg.models.checkpoint import TrainingMeta, save_checkpoint
from transforseg.models.vit import ModelConfig, TransForSeg
from transforseg.utils.config import THREADS_ENV

SMALL_RUN = """
[run]
seed = 0

[scene]
image_size = 32
catheter_length = 18.0
force_range = 0.02

[model]
variant = "desk"
image_size = 32
patch_size = 8
embed_dim = 16
depth = 1
heads = 2
ffn_hidden = 32
fusion_heads = 2
fusion_ffn_hidden = 32
seg_base_channels = 8
force_hidden = [16]

[train]
dataset = "data"
checkpoint_dir = "train"
epochs = 1
batch_size = 8
learning_rate = 0.001
"""


@pytest.fixture(autouse=True)
def _no_thread_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(SMALL_RUN)
    return str(path)


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_params_prints_the_ledger_total(capsys):
    assert main_module.main(["params", "--variant", "tiny"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-1].startswith("total")
    total = int(lines[-1].split()[-1].replace(",", ""))
    assert abs(total - 6.9e6) <= 0.05 * 6.9e6


def test_generate_emits_the_manifest(config_file, tmp_path, capsys):
    assert main_module.main(["--config", config_file, "generate", "--count", "10", "--out", str(tmp_path / "ds")]) == 0
    out = _json_out(capsys)
    assert out["splits"] == {"train": 6, "val": 2, "test": 2}
    assert (tmp_path / "ds" / "manifest.csv").is_file()


def test_missing_config_file_exits_with_config_code(tmp_path):
    assert main_module.main(["--config", str(tmp_path / "missing.toml"), "params"]) == 2


def test_invalid_config_value_exits_with_config_code(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[train]\nepochs = 0\n")
    assert main_module.main(["--config", str(path), "params"]) == 2


def test_variant_image_size_mismatch_names_the_scene_setting(tmp_path, monkeypatch):
    messages = []
    monkeypatch.setattr(main_module.logger, "error", messages.append)
    code = main_module.main(["train", "--variant", "tiny", "--out", str(tmp_path / "train")])
    assert code == 2
    assert any("scene.image_size = 224" in m for m in messages), messages


def test_missing_checkpoint_exits_with_io_code(config_file, tmp_path):
    assert main_module.main(["--config", config_file, "eval", "--checkpoint", str(tmp_path / "none.tfsg")]) == 3


def test_corrupt_writes_a_pgm(tmp_path, capsys):
    source = tmp_path / "in.pgm"
    write_pgm(source, np.full((16, 16), 0.5))
    target = tmp_path / "out.pgm"
    code = main_module.main(["corrupt", "--input", str(source), "--output", str(target), "--spec", "gaussian:sigma=0.1,seed=2"])
    assert code == 0
    assert _json_out(capsys)["spec"]["seed"] == 2
    assert not np.array_equal(read_pgm(target), read_pgm(source))


def test_verify_failure_exits_with_one(monkeypatch, capsys):
    results = [CheckResult("params", True, "ok"), CheckResult("adam", False, "step was 0.8")]
    monkeypatch.setattr(main_module, "run_checks", lambda: results)
    assert main_module.main(["verify"]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] adam: step was 0.8" in out
    assert "1/2 checks passed" in out


def test_checkpoint_dataset_mismatch_exits_with_five(config_file, tmp_path, dataset):
    desk = ModelConfig.preset("desk")
    path = save_checkpoint(TransForSeg.init(desk).params, desk, TrainingMeta(), tmp_path / "desk.tfsg")
    code = main_module.main(
        ["--config", config_file, "eval", "--checkpoint", str(path), "--dataset", str(dataset.root)]
    )
    assert code == 5


def test_generate_train_and_evaluate(config_file, tmp_path, capsys):
    assert main_module.main(["--config", config_file, "generate", "--count", "20"]) == 0
    capsys.readouterr()

    assert main_module.main(["--config", config_file, "train"]) == 0
    trained = _json_out(capsys)
    checkpoint = trained["checkpoint"]
    assert checkpoint == str(tmp_path / "train" / "best.tfsg")
    report = json.loads((tmp_path / "train" / "report.json").read_text())
    assert report["samples"] == 2

    assert main_module.main(["--config", config_file, "eval", "--checkpoint", checkpoint, "--corrupt", "motion"]) == 0
    written = _json_out(capsys)["report"]
    assert written.endswith("eval_test_motion.json")
    assert json.loads(Path(written).read_text())["corruption"]["kind"] == "motion"

    assert main_module.main(["--config", config_file, "eval", "--checkpoint", checkpoint, "--corrupt", "all"]) == 0
    suite = _json_out(capsys)
    assert len(suite["reports"]) == 7
    assert (tmp_path / "train" / "robustness_test" / "robustness.json").is_file()
