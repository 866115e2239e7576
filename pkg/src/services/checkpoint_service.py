"""
Checkpoint file: one JSON object, keys sorted, floats written with Python's
shortest round-trip repr so float64 payloads reload bit-exactly.

    {
      "format": "cn-checkpoint/1",
      "architecture": {"model": {...}, "noise_enabled": true, "n_classes": 2,
                       "partition": {"total_dims": D, "groups": [[name, [idx...]], ...]}},
      "feature_names": [...], "class_names": [...],
      "scaler": {"mean": [...], "scale": [...]} | null,
      "arrays": {"ephysician.0.dense1.weights": {"shape": [10, 8], "data": [...]}, ...},
      "arrays_sha256": "...",            digest of the arrays, checked on load
      "metadata": {...}
    }
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from src.engine.consensus import ConsensusModel
from src.engine.partition import ModalityPartition
from src.services.config_factory import ModelConfig
from src.services.dataset_service import ZScoreScaler
from src.utils.constants import CHECKPOINT_FORMAT
from src.utils.errors import ConfigError
from src.utils.fingerprint import array_fingerprint

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    model: ConsensusModel
    feature_names: List[str]
    class_names: List[str]
    scaler: Optional[ZScoreScaler] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def preprocess(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return self.scaler.transform(X) if self.scaler is not None else X


def checkpoint_payload(checkpoint: Checkpoint) -> Dict[str, Any]:
    model = checkpoint.model
    arrays = model.named_arrays()
    return {
        "format": CHECKPOINT_FORMAT,
        "architecture": {
            "model": model.config.model_dump(),
            "noise_enabled": model.noise_enabled,
            "n_classes": model.n_classes,
            "partition": {"total_dims": model.partition.total_dims,
                          "groups": [[name, idx] for name, idx in model.partition.groups]},
        },
        "feature_names": list(checkpoint.feature_names),
        "class_names": list(checkpoint.class_names),
        "scaler": checkpoint.scaler.to_dict() if checkpoint.scaler is not None else None,
        "arrays": {name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                   for name, arr in arrays.items()},
        "arrays_sha256": array_fingerprint(arrays),
        "metadata": checkpoint.metadata,
    }


def save_checkpoint(checkpoint: Checkpoint, path: str) -> None:
    payload = checkpoint_payload(checkpoint)
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise OSError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"💾 Checkpoint saved to {path} ({len(payload['arrays'])} arrays)")


def checkpoint_from_payload(payload: Dict[str, Any]) -> Checkpoint:
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unsupported checkpoint format {payload.get('format')!r}")
    arch = payload["architecture"]
    partition = ModalityPartition(groups=[(name, idx) for name, idx in arch["partition"]["groups"]],
                                  total_dims=arch["partition"]["total_dims"])
    model = ConsensusModel(partition, arch["n_classes"], ModelConfig(**arch["model"]),
                           noise_enabled=arch["noise_enabled"], rng=np.random.default_rng(0))
    arrays = {name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
              for name, entry in payload["arrays"].items()}
    digest = payload.get("arrays_sha256")
    if digest is not None and digest != array_fingerprint(arrays):
        raise ConfigError("checkpoint arrays do not match their recorded digest")
    model.load_arrays(arrays)
    model.eval()
    scaler = ZScoreScaler.from_dict(payload["scaler"]) if payload.get("scaler") else None
    return Checkpoint(model=model, feature_names=payload["feature_names"],
                      class_names=payload["class_names"], scaler=scaler,
                      metadata=payload.get("metadata") or {})


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read checkpoint {path}: {e}") from e
    try:
        checkpoint = checkpoint_from_payload(payload)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{path}: malformed checkpoint ({e})") from e
    logger.info(f"📦 Loaded checkpoint {path}: M={checkpoint.model.M}, "
                f"{checkpoint.model.n_classes} classes")
    return checkpoint
