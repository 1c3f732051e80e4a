import copy
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from transforseg.core.errors import ConfigError
from transforseg.core.losses import LossWeights
from transforseg.core.train import TrainConfig
from transforseg.data.scene import SceneConfig
from transforseg.models.vit import ModelConfig

logger = logging.getLogger(__name__)

THREADS_ENV = "TFSG_THREADS"
DEFAULT_VARIANT = "desk"

# (section, key) pairs holding paths relative to the config file
PATH_KEYS = [
    ("run", "env_file"),
    ("run", "out_dir"),
    ("train", "dataset"),
    ("train", "checkpoint_dir"),
    ("logging", "file"),
]


class ConfigManager:
    """
    Loads a TOML (or JSON) run configuration and resolves its relative
    paths against the directory that contains the file.
    """

    def __init__(self, config_path: str = "config.toml"):
        """Initialize the ConfigManager with a path to the config file."""
        self.config_path = config_path
        self.config: dict[str, Any] = {}
        self.project_root = self._get_project_root()

    def _get_project_root(self) -> str:
        """Get the absolute path to the project root directory."""
        # Assuming this file is in 'utils' subdirectory of the package
        return os.path.dirname(
            os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        )

    @property
    def config_dir(self) -> str:
        return os.path.dirname(os.path.abspath(self.config_path))

    def _resolve_path(self, relative_path: str) -> str:
        """Convert a relative path to an absolute path based on the config file's directory."""
        return os.path.abspath(os.path.join(self.config_dir, relative_path))

    def _load_file(self) -> dict[str, Any]:
        abs_config_path = os.path.abspath(self.config_path)
        logger.info(f"Loading configuration from: {abs_config_path}")

        try:
            with open(abs_config_path, "rb") as f:
                if abs_config_path.endswith(".json"):
                    config = json.load(f)
                else:
                    config = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
            logger.error(f"Error loading configuration {abs_config_path}: {e}")
            raise ConfigError(f"cannot load configuration {abs_config_path}: {e}") from e
        if not isinstance(config, dict):
            raise ConfigError("Configuration file does not contain a table at the top level")
        logger.info(f"Configuration loaded successfully from {abs_config_path}")
        return config

    def _resolve_paths_in_config(self) -> None:
        """Store an absolute ``<key>_abs`` next to every relative path setting."""
        for section, key in PATH_KEYS:
            cfg = self.config.get(section)
            if not isinstance(cfg, dict) or not cfg.get(key):
                continue
            value = str(cfg[key])
            cfg[f"{key}_abs"] = value if os.path.isabs(value) else self._resolve_path(value)

    def load_config(self) -> dict[str, Any]:
        """
        Load and process the configuration file.
        Returns the processed configuration dictionary.
        """
        self.config = self._load_file()
        self._resolve_paths_in_config()
        logger.info("Configuration processed successfully.")
        return self.config


def apply_overrides(config: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Return a copy of ``config`` with dotted ``section.key`` overrides applied.

    ``None`` values are ignored. Overriding a path drops its resolved ``_abs`` twin.
    """
    merged = copy.deepcopy(config)
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        target = merged.setdefault(section, {})
        target[key] = value
        target.pop(f"{key}_abs", None)
    return merged


def worker_count(config: dict[str, Any]) -> int:
    """``TFSG_THREADS`` if set, else ``run.threads``, else 1."""
    raw = os.environ.get(THREADS_ENV)
    source = THREADS_ENV
    if not raw:
        raw = config.get("run", {}).get("threads", 1)
        source = "run.threads"
    try:
        threads = int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{source} must be an integer, got {raw!r}") from None
    if threads < 1:
        raise ConfigError(f"{source} must be >= 1, got {threads}")
    return threads


def _path(section: dict[str, Any], key: str, default: str) -> str:
    return str(section.get(f"{key}_abs") or section.get(key) or default)


def _known(section: dict[str, Any], allowed: set[str], name: str) -> None:
    unknown = {k for k in section if not k.endswith("_abs")} - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")


@dataclass(frozen=True)
class RunConfig:
    """Every typed configuration a command needs, validated together."""

    scene: SceneConfig
    model: ModelConfig
    train: TrainConfig
    out_dir: str = "runs"
    seed: int = 0
    threads: int = 1
    eval_split: str = "test"
    hist_bins: int = 41

    @classmethod
    def from_sources(
        cls, file_config: dict[str, Any], overrides: dict[str, Any] | None = None
    ) -> "RunConfig":
        """Merge flags over the file over the defaults, then validate every part."""
        cfg = apply_overrides(file_config, overrides or {})
        run = cfg.get("run", {})
        _known(run, {"env_file", "out_dir", "threads", "seed"}, "run")
        seed = int(run.get("seed", 0))
        out_dir = _path(run, "out_dir", "runs")

        try:
            scene_cfg = dict(cfg.get("scene", {}))
            scene_cfg.setdefault("seed", seed)
            scene = SceneConfig.from_dict(scene_cfg)

            model_cfg = dict(cfg.get("model", {}))
            variant = model_cfg.pop("variant", DEFAULT_VARIANT)
            if "force_hidden" in model_cfg:
                model_cfg["force_hidden"] = tuple(model_cfg["force_hidden"])
            _known(model_cfg, {f.name for f in fields(ModelConfig)} - {"variant"}, "model")
            model = ModelConfig.preset(variant, **model_cfg)

            train_cfg = dict(cfg.get("train", {}))
            _known(
                train_cfg,
                {"dataset", "checkpoint_dir", "epochs", "batch_size", "learning_rate", "seed",
                 "eval_every", "lambda_force", "lambda_seg_top", "lambda_seg_side"},
                "train",
            )
            weights = LossWeights(
                float(train_cfg.get("lambda_force", 1.0)),
                float(train_cfg.get("lambda_seg_top", 1.0)),
                float(train_cfg.get("lambda_seg_side", 1.0)),
            )
            train = TrainConfig(
                dataset=_path(train_cfg, "dataset", os.path.join(out_dir, "dataset")),
                model=model,
                epochs=int(train_cfg.get("epochs", 30)),
                batch_size=int(train_cfg.get("batch_size", 32)),
                learning_rate=float(train_cfg.get("learning_rate", 1e-4)),
                seed=int(train_cfg.get("seed", seed)),
                checkpoint_dir=_path(train_cfg, "checkpoint_dir", os.path.join(out_dir, "train")),
                eval_every=int(train_cfg.get("eval_every", 1)),
                weights=weights,
                workers=worker_count(cfg),
            ).validate()

            eval_cfg = cfg.get("eval", {})
            _known(eval_cfg, {"split", "hist_bins"}, "eval")
            split = str(eval_cfg.get("split", "test"))
            if split not in ("train", "val", "test"):
                raise ConfigError(f"eval.split must be train, val or test, got {split!r}")
            hist_bins = int(eval_cfg.get("hist_bins", 41))
            if hist_bins < 1:
                raise ConfigError(f"eval.hist_bins must be >= 1, got {hist_bins}")
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid configuration value: {e}") from e

        if model.image_size != scene.image_size:
            raise ConfigError(
                f"model variant {model.variant!r} expects {model.image_size}px images but "
                f"scene.image_size is {scene.image_size}; set scene.image_size = {model.image_size} "
                f"or model.image_size = {scene.image_size}"
            )
        return cls(scene, model, train, out_dir, seed, train.workers, split, hist_bins)
