import numpy as np
import pytest

from transforseg.data.scene import SceneConfig
from transforseg.data.synth import generate_dataset
from transforseg.models.vit import ModelConfig


def small_scene(**overrides) -> SceneConfig:
    """A 32px scene that keeps the catheter in frame at force_range 0.02."""
    values = {"image_size": 32, "catheter_length": 18.0, "force_range": 0.02}
    values.update(overrides)
    return SceneConfig(**values).validate()


def small_model(**overrides) -> ModelConfig:
    values = {
        "image_size": 32,
        "patch_size": 8,
        "embed_dim": 16,
        "depth": 1,
        "heads": 2,
        "ffn_hidden": 32,
        "fusion_heads": 2,
        "fusion_ffn_hidden": 32,
        "seg_base_channels": 8,
        "force_hidden": (16,),
        "variant": "test",
    }
    values.update(overrides)
    return ModelConfig(**values).validate()


@pytest.fixture
def scene() -> SceneConfig:
    return small_scene()


@pytest.fixture
def model_config() -> ModelConfig:
    return small_model()


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    """Twenty 32px samples: 16 train, 2 val, 2 test."""
    root = tmp_path_factory.mktemp("dataset")
    return generate_dataset(20, small_scene(seed=3), root)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
