import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.services.config_factory import ConfigFactory, ModelConfig, TrainConfig
from src.services.synthetic_service import SyntheticSpec, generate_synthetic


@pytest.fixture(autouse=True)
def _fresh_config(monkeypatch):
    """Every test starts from the packaged cn_config.json."""
    monkeypatch.delenv("CN_CONFIG_PATH", raising=False)
    ConfigFactory.reset()
    yield
    ConfigFactory.reset()


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_model_config():
    return ModelConfig(representation_dim=4, hidden_dim=5)


@pytest.fixture
def fast_train_config():
    return TrainConfig(n_steps=3, batch_size=16, convergence_tol=1e-12, seed=7)


@pytest.fixture
def tiny_spec():
    return SyntheticSpec(n_modalities=3, modality_dims=[3, 3, 3], signal_dim=2, strength=2.0,
                         distractor_dims=1, n_samples=60)


@pytest.fixture
def tiny_dataset(tiny_spec):
    return generate_synthetic(tiny_spec, seed=3)
