"""
Consensus Network: M ePhysician encoders, a modality discriminator and a
diagnosis classifier.

    i_m = f_m(x_m)                       one ePhysician per modality
    P(m = k | i) = softmax(f_D(i))_k      discriminator, one representation at a time
    P(y = l | x) = softmax(f_C(i_1..M))_l classifier on the concatenation

With the noise modality enabled the discriminator gets an extra class 0 fed
with i_0 ~ N(mu, sigma^2) built from the batch representations; i_0 never
reaches the classifier and carries no gradient back to the ePhysicians.
"""
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from src.engine.layers import DenseLayer, Layer, as_matrix
from src.engine.losses import softmax, softmax_cross_entropy
from src.engine.network import Sequential, build_mlp
from src.engine.partition import ModalityPartition, partition_matrix
from src.services.config_factory import ModelConfig
from src.utils.constants import NOISE_MODALITY
from src.utils.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)


@dataclass
class NoiseSpec:
    enabled: bool
    mu: np.ndarray
    sigma2: np.ndarray


@dataclass
class LossGradients:
    """Copies of the parameter gradients left by one loss backward pass."""

    ephysicians: Optional[List[Dict[str, np.ndarray]]]
    discriminator: Dict[str, np.ndarray]
    classifier: Dict[str, np.ndarray]
    representations: List[np.ndarray]


class ConsensusModel:
    def __init__(self, partition: ModalityPartition, n_classes: int,
                 config: Optional[ModelConfig] = None, noise_enabled: bool = True,
                 rng: Optional[np.random.Generator] = None):
        if partition.M < 2:
            raise ContractError(f"a consensus model needs at least 2 modalities, got {partition.M}")
        if n_classes < 2:
            raise ContractError(f"need at least 2 diagnosis classes, got {n_classes}")
        self.partition = partition
        self.n_classes = n_classes
        self.config = config or ModelConfig()
        self.noise_enabled = noise_enabled
        rng = rng if rng is not None else np.random.default_rng()
        cfg = self.config
        r = cfg.representation_dim

        # ePhysician sizes are NOT scaled by modality width.
        self.ephysicians: List[Sequential] = [
            build_mlp(len(idx), [cfg.hidden_dim], r, rng, name=f"ephysician.{m}",
                      leaky_slope=cfg.leaky_slope, bn_eps=cfg.bn_eps, bn_momentum=cfg.bn_momentum)
            for m, (_, idx) in enumerate(partition.groups)
        ]
        self.discriminator = Sequential(
            [DenseLayer(r, self.n_disc_classes, rng, name="dense1")], name="discriminator")
        hidden = [cfg.classifier_hidden] if cfg.classifier_hidden > 0 else []
        self.classifier = build_mlp(partition.M * r, hidden, n_classes, rng, name="classifier",
                                    leaky_slope=cfg.leaky_slope, bn_eps=cfg.bn_eps,
                                    bn_momentum=cfg.bn_momentum)

    @property
    def M(self) -> int:
        return self.partition.M

    @property
    def representation_dim(self) -> int:
        return self.config.representation_dim

    @property
    def n_disc_classes(self) -> int:
        return self.partition.M + 1 if self.noise_enabled else self.partition.M

    def modality_class(self, m: int) -> int:
        """Discriminator label of modality m (0-based group index)."""
        return m + 1 if self.noise_enabled else m

    @property
    def networks(self) -> List[Sequential]:
        return [*self.ephysicians, self.discriminator, self.classifier]

    def ephysician_layers(self) -> List[Layer]:
        return [layer for net in self.ephysicians for layer in net.layers]

    def discriminator_layers(self) -> List[Layer]:
        return list(self.discriminator.layers)

    def classifier_layers(self) -> List[Layer]:
        return list(self.classifier.layers)

    @property
    def training(self) -> bool:
        return self.classifier.training

    def train(self) -> None:
        for net in self.networks:
            net.train()

    def eval(self) -> None:
        for net in self.networks:
            net.eval()

    @contextmanager
    def inference(self) -> Iterator["ConsensusModel"]:
        """Temporarily switches every network to running-statistics mode."""
        was_training = self.training
        self.eval()
        try:
            yield self
        finally:
            if was_training:
                self.train()

    def named_arrays(self) -> Dict[str, np.ndarray]:
        arrays: Dict[str, np.ndarray] = {}
        for net in self.networks:
            arrays.update(dict(net.named_arrays(net.name)))
        return arrays

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for net in self.networks:
            net.load_arrays(arrays, net.name)


def encode_all(model: ConsensusModel, X, update_stats: bool = True) -> List[np.ndarray]:
    """i_m = f_m(x_m) for every modality, in the networks' current mode."""
    parts = partition_matrix(X, model.partition)
    return [net.forward(x_m, update_stats=update_stats) for net, x_m in zip(model.ephysicians, parts)]


def noise_statistics(reps: Sequence[np.ndarray]) -> NoiseSpec:
    """Per-dimension mean and variance over all M·B representation rows (stop-gradient)."""
    pooled = np.concatenate([as_matrix(r) for r in reps], axis=0)
    return NoiseSpec(enabled=True, mu=pooled.mean(axis=0), sigma2=pooled.var(axis=0))


def sample_noise(model: ConsensusModel, reps: Sequence[np.ndarray],
                 rng: np.random.Generator) -> np.ndarray:
    if not model.noise_enabled:
        raise ContractError("sample_noise called on a model without the noise modality")
    stats = noise_statistics(reps)
    batch = reps[0].shape[0]
    return stats.mu + np.sqrt(stats.sigma2) * rng.standard_normal((batch, stats.mu.shape[0]))


def _check_reps(model: ConsensusModel, reps: Sequence[np.ndarray]) -> int:
    if len(reps) != model.M:
        raise DimensionError(f"expected {model.M} representation matrices, got {len(reps)}")
    batch = reps[0].shape[0]
    for r in reps:
        if r.shape != (batch, model.representation_dim):
            raise DimensionError(f"representation shape {r.shape} != ({batch}, {model.representation_dim})")
    return batch


def discriminator_loss(model: ConsensusModel, reps: Sequence[np.ndarray],
                       noise: Optional[np.ndarray] = None, backprop_ephysicians: bool = True):
    """
    Cross-entropy of the discriminator guessing the originating modality,
    averaged uniformly over modalities (0..M with noise, 1..M without) and
    over the batch. Leaves gradients in the discriminator and, when
    `backprop_ephysicians`, in the ePhysicians (noise rows contribute none).
    """
    batch = _check_reps(model, reps)
    if model.noise_enabled and noise is None:
        raise ContractError("noise modality enabled but no noise representation given")
    if not model.noise_enabled and noise is not None:
        raise ContractError("noise representation given to a model without the noise modality")

    blocks = list(reps)
    labels = [np.full(batch, model.modality_class(m)) for m in range(model.M)]
    if noise is not None:
        noise = as_matrix(noise, "noise")
        if noise.shape != (batch, model.representation_dim):
            raise DimensionError(f"noise shape {noise.shape} != ({batch}, {model.representation_dim})")
        blocks.insert(0, noise)
        labels.insert(0, np.full(batch, NOISE_MODALITY))

    stacked = np.concatenate(blocks, axis=0)
    logits = model.discriminator.forward(stacked)
    loss, d_logits = softmax_cross_entropy(logits, np.concatenate(labels))
    d_stacked = model.discriminator.backward(d_logits)

    offset = batch if noise is not None else 0
    d_reps = [d_stacked[offset + m * batch: offset + (m + 1) * batch] for m in range(model.M)]
    ephysician_grads = None
    if backprop_ephysicians:
        for net, d_rep in zip(model.ephysicians, d_reps):
            net.backward(d_rep)
        ephysician_grads = [net.named_grads(net.name) for net in model.ephysicians]

    grads = LossGradients(
        ephysicians=ephysician_grads,
        discriminator=model.discriminator.named_grads("discriminator"),
        classifier={},
        representations=d_reps,
    )
    return loss, grads


def classifier_loss(model: ConsensusModel, reps: Sequence[np.ndarray], labels,
                    cooperative: bool = True):
    """
    Cross-entropy of the classifier on concat(i_1..i_M). Gradients always
    reach the classifier; they reach the ePhysicians only when cooperative.
    """
    batch = _check_reps(model, reps)
    logits = model.classifier.forward(np.concatenate(reps, axis=1))
    loss, d_logits = softmax_cross_entropy(logits, labels)
    d_concat = model.classifier.backward(d_logits)

    r = model.representation_dim
    d_reps = [d_concat[:, m * r:(m + 1) * r] for m in range(model.M)]
    if cooperative:
        for net, d_rep in zip(model.ephysicians, d_reps):
            net.backward(d_rep)
    else:
        for net in model.ephysicians:
            net.zero_grad()

    grads = LossGradients(
        ephysicians=[net.named_grads(net.name) for net in model.ephysicians],
        discriminator={},
        classifier=model.classifier.named_grads("classifier"),
        representations=d_reps if cooperative else [np.zeros((batch, r)) for _ in range(model.M)],
    )
    return loss, grads


def classifier_logits(model: ConsensusModel, X) -> np.ndarray:
    with model.inference():
        reps = encode_all(model, X, update_stats=False)
        return model.classifier.forward(np.concatenate(reps, axis=1), update_stats=False)


def predict_proba(model: ConsensusModel, X) -> np.ndarray:
    return softmax(classifier_logits(model, X))


def predict(model: ConsensusModel, X) -> np.ndarray:
    """argmax_l P(y=l|x); np.argmax resolves ties toward the lowest class index."""
    return np.argmax(classifier_logits(model, X), axis=1)
