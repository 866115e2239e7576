"""
Size-matched fully connected baseline.

The baseline sees every feature at once and gets as many hidden neurons as
the consensus pipeline: M ePhysician hidden layers (h each) become one layer
of h·M, the M representations (r each) one layer of r·M, and a classifier
hidden layer of c neurons is kept as is.
"""
import logging
from typing import List, Optional

import numpy as np

from src.engine.losses import softmax, softmax_cross_entropy
from src.engine.network import Sequential, build_mlp
from src.engine.partition import ModalityPartition
from src.services.config_factory import ModelConfig

logger = logging.getLogger(__name__)


def baseline_hidden_sizes(n_modalities: int, hidden_dim: int, representation_dim: int,
                          classifier_hidden: int = 0) -> List[int]:
    sizes = [hidden_dim * n_modalities, representation_dim * n_modalities]
    if classifier_hidden > 0:
        sizes.append(classifier_hidden)
    return sizes


def consensus_neuron_count(n_modalities: int, hidden_dim: int, representation_dim: int,
                           classifier_hidden: int = 0) -> int:
    """Hidden neurons of the ePhysicians plus the classifier (representations included)."""
    return n_modalities * (hidden_dim + representation_dim) + classifier_hidden


class MLPBaseline:
    """Plain classifier over all features; batch norm sits between hidden layers."""

    def __init__(self, partition: ModalityPartition, n_classes: int,
                 config: Optional[ModelConfig] = None, rng: Optional[np.random.Generator] = None):
        self.partition = partition
        self.n_classes = n_classes
        self.config = config or ModelConfig()
        rng = rng if rng is not None else np.random.default_rng()
        cfg = self.config
        self.hidden_sizes = baseline_hidden_sizes(partition.M, cfg.hidden_dim,
                                                  cfg.representation_dim, cfg.classifier_hidden)
        self.network: Sequential = build_mlp(partition.total_dims, self.hidden_sizes, n_classes, rng,
                                             name="baseline", leaky_slope=cfg.leaky_slope,
                                             bn_eps=cfg.bn_eps, bn_momentum=cfg.bn_momentum)

    @property
    def hidden_neurons(self) -> int:
        return sum(self.hidden_sizes)

    def loss(self, X, labels):
        logits = self.network.forward(X)
        loss, d_logits = softmax_cross_entropy(logits, labels)
        self.network.backward(d_logits)
        return loss

    def logits(self, X) -> np.ndarray:
        was_training = self.network.training
        self.network.eval()
        try:
            return self.network.forward(X, update_stats=False)
        finally:
            if was_training:
                self.network.train()

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)


def build_mlp_baseline(partition: ModalityPartition, config: Optional[ModelConfig] = None,
                       n_classes: int = 2, rng: Optional[np.random.Generator] = None) -> MLPBaseline:
    model = MLPBaseline(partition, n_classes, config, rng)
    logger.debug(f"MLP baseline hidden sizes {model.hidden_sizes} for M={partition.M}")
    return model
