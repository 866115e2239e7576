import os
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from src.utils import constants as C
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)


class ModelConfig(BaseModel):
    """Architecture of the ePhysicians, discriminator and classifier."""

    representation_dim: int = Field(C.REPRESENTATION_DIM, ge=1)
    hidden_dim: int = Field(C.HIDDEN_DIM, ge=1)
    # 0 = no hidden layer in the classifier (the published setting)
    classifier_hidden: int = Field(0, ge=0)
    leaky_slope: float = Field(C.LEAKY_RELU_SLOPE, gt=0.0, lt=1.0)
    bn_eps: float = Field(C.BN_EPSILON, gt=0.0)
    bn_momentum: float = Field(C.BN_MOMENTUM, gt=0.0, lt=1.0)


class TrainConfig(BaseModel):
    """Every hyper-parameter of the iterative three-optimizer schedule."""

    n_steps: int = Field(C.MAX_OUTER_STEPS, ge=1, description="N, max outer steps")
    k_disc: int = Field(C.DISCRIMINATOR_STEPS, ge=1, description="K, discriminator steps per batch")
    batch_size: int = Field(C.BATCH_SIZE, ge=2)
    lr_ephysician: float = Field(C.ADAM_LR, gt=0.0)
    lr_discriminator: float = Field(C.ADAM_LR, gt=0.0)
    lr_classifier: float = Field(C.ADAM_LR, gt=0.0)
    beta1: float = Field(C.ADAM_BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(C.ADAM_BETA2, ge=0.0, lt=1.0)
    adam_eps: float = Field(C.ADAM_EPSILON, gt=0.0)
    noise_enabled: bool = True
    cooperative: bool = True
    convergence_tol: float = Field(C.CONVERGENCE_TOL, gt=0.0)
    seed: int = Field(0, ge=0, lt=2 ** 64)


class DataConfig(BaseModel):
    knn_k: int = Field(C.KNN_NEIGHBORS, ge=1)
    split_ratios: Tuple[float, float, float] = C.SPLIT_RATIOS
    # "train" fits the z-scores on the train split only; "all" reproduces a
    # literal fit-on-everything pipeline.
    scaler_fit: Literal["train", "all"] = "train"
    stratify: bool = True

    @field_validator("split_ratios")
    @classmethod
    def _ratios_sum_to_one(cls, v):
        if any(r < 0 for r in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must be non-negative and sum to 1, got {v}")
        return v


class EvaluationConfig(BaseModel):
    n_trials: int = Field(C.N_TRIALS, ge=2)
    jobs: int = Field(1, ge=1)
    bayes_samples: int = Field(C.BAYES_MC_SAMPLES, ge=1000)


class ConfigFactory:
    _config = None

    @classmethod
    def _load_config(cls) -> dict:
        if cls._config is None:
            load_dotenv()
            override = os.getenv("CN_CONFIG_PATH")
            config_path = Path(override) if override else \
                Path(__file__).resolve().parent.parent / "config" / "cn_config.json"
            try:
                with open(config_path, "r", encoding="utf-8") as f:
                    cls._config = json.load(f)
                logger.debug(f"Loaded config from {config_path}")
            except Exception as e:
                logger.error(f"Error loading {config_path}: {e}")
                # Fallback: built-in defaults from constants.py
                cls._config = {
                    "model": {},
                    "training": {},
                    "data": {},
                    "evaluation": {},
                    "snapshots": {"steps": list(C.SNAPSHOT_STEPS)},
                    "synthetic": {},
                }
        return cls._config

    @classmethod
    def reset(cls) -> None:
        """Forget the cached file (tests point CN_CONFIG_PATH elsewhere)."""
        cls._config = None

    @classmethod
    def _build(cls, model_cls, section: str, overrides: dict):
        values = dict(cls._load_config().get(section, {}) or {})
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return model_cls(**values)
        except ValidationError as e:
            raise ConfigError(f"invalid '{section}' configuration: {e}") from e

    @classmethod
    def get_model_config(cls, **overrides) -> ModelConfig:
        return cls._build(ModelConfig, "model", overrides)

    @classmethod
    def get_train_config(cls, **overrides) -> TrainConfig:
        return cls._build(TrainConfig, "training", overrides)

    @classmethod
    def get_data_config(cls, **overrides) -> DataConfig:
        return cls._build(DataConfig, "data", overrides)

    @classmethod
    def get_evaluation_config(cls, **overrides) -> EvaluationConfig:
        return cls._build(EvaluationConfig, "evaluation", overrides)

    @classmethod
    def get_synthetic_spec(cls, **overrides):
        from src.services.synthetic_service import SyntheticSpec
        return cls._build(SyntheticSpec, "synthetic", overrides)

    @classmethod
    def get_snapshot_steps(cls) -> List[int]:
        steps = (cls._load_config().get("snapshots") or {}).get("steps") or C.SNAPSHOT_STEPS
        return [int(s) for s in steps]

    @classmethod
    def load_overrides(cls, path: Optional[str]) -> dict:
        """Reads a JSON key-value file (e.g. a synthetic spec) passed on the command line."""
        if not path:
            return {}
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object of key/value pairs")
        return data
