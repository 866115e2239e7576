"""
Iterative three-optimizer schedule for the Consensus Network.

For every minibatch of an outer step:
  (a) cooperative step   min_C L_C  (and min_P L_C when cooperative)
  (b) adversarial step   max_P L_D  (sign-flipped L_D gradient into the ePhysician Adam)
  (c) K x                min_D L_D
The run stops after N outer steps or when the full-train L_C moves by less
than `convergence_tol` between two outer steps.

RNG order per trial: model initialisation, then per outer step one
permutation for the batches, then per batch the noise draws of (b) and (c).
Loss evaluation and snapshots use their own seeded generators.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.engine.baseline import MLPBaseline
from src.engine.consensus import (
    ConsensusModel, classifier_loss, discriminator_loss, encode_all, predict, sample_noise,
)
from src.engine.losses import softmax_cross_entropy
from src.engine.optim import AdamOptimizer
from src.services.config_factory import TrainConfig
from src.services.dataset_service import Dataset
from src.utils.constants import HISTORY_COLUMNS
from src.utils.errors import ContractError, OptimizerError, TrainingAbortedError

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_STEPS = "max-steps"


@dataclass
class StepRecord:
    step: int
    loss_c: float
    loss_d: float
    val_accuracy: float


@dataclass
class TrainHistory:
    records: List[StepRecord] = field(default_factory=list)
    stop_reason: Optional[str] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def loss_c(self) -> List[float]:
        return [r.loss_c for r in self.records]

    @property
    def loss_d(self) -> List[float]:
        return [r.loss_d for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        rows = [[r.step, r.loss_c, r.loss_d, r.val_accuracy, ""] for r in self.records]
        if rows:
            rows[-1][-1] = self.stop_reason or ""
        return pd.DataFrame(rows, columns=HISTORY_COLUMNS)

    def write_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def convergence_check(history: Union[TrainHistory, Sequence[float]], tol: float) -> bool:
    """True iff the last two full-train L_C values differ by less than `tol`."""
    losses = history.loss_c if isinstance(history, TrainHistory) else list(history)
    if len(losses) < 2:
        raise ContractError("convergence_check needs at least 2 recorded outer steps")
    return abs(losses[-1] - losses[-2]) < tol


@dataclass
class StepCounters:
    classifier: int = 0
    cooperative: int = 0
    adversarial: int = 0
    discriminator: int = 0
    batches: int = 0
    outer: int = 0


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """One shuffled epoch; a trailing batch of one row joins the previous batch (train-mode BN needs B >= 2)."""
    if n < 2:
        raise ContractError(f"training needs at least 2 samples, got {n}")
    perm = rng.permutation(n)
    batches = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def _check_finite(value: float, what: str, step: int, batch: int) -> float:
    if not np.isfinite(value):
        raise TrainingAbortedError(f"non-finite {what} ({value})", step=step, batch=batch)
    return value


def _check_complete(dataset: Dataset, name: str) -> None:
    if dataset.missing_mask.any():
        raise ContractError(f"{name} set still has missing values; impute before training")


StepCallback = Callable[["ConsensusTrainer", StepRecord], None]


class ConsensusTrainer:
    def __init__(self, model: ConsensusModel, config: TrainConfig,
                 rng: Optional[np.random.Generator] = None,
                 on_step_end: Optional[StepCallback] = None):
        if model.noise_enabled != config.noise_enabled:
            raise ContractError(f"model noise_enabled={model.noise_enabled} but "
                                f"config noise_enabled={config.noise_enabled}")
        self.model = model
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.on_step_end = on_step_end
        self.counters = StepCounters()
        self.history = TrainHistory()
        adam = dict(beta1=config.beta1, beta2=config.beta2, epsilon=config.adam_eps)
        self.ephysician_opt = AdamOptimizer(model.ephysician_layers(), lr=config.lr_ephysician,
                                            name="ephysicians", **adam)
        self.discriminator_opt = AdamOptimizer(model.discriminator_layers(), lr=config.lr_discriminator,
                                               name="discriminator", **adam)
        self.classifier_opt = AdamOptimizer(model.classifier_layers(), lr=config.lr_classifier,
                                            name="classifier", **adam)
        # latest end-of-step record, read by snapshot recorders
        self.last_record: Optional[StepRecord] = None

    def _noise(self, reps):
        return sample_noise(self.model, reps, self.rng) if self.model.noise_enabled else None

    # ─────────────────────────────────────────────────────────────────────
    # THE THREE STEPS
    # ─────────────────────────────────────────────────────────────────────

    def cooperative_step(self, X: np.ndarray, y: np.ndarray) -> float:
        reps = encode_all(self.model, X, update_stats=True)
        loss, _ = classifier_loss(self.model, reps, y, cooperative=self.config.cooperative)
        _check_finite(loss, "L_C", self.counters.outer, self.counters.batches)
        self.classifier_opt.step()
        self.counters.classifier += 1
        if self.config.cooperative:
            self.ephysician_opt.step()
            self.counters.cooperative += 1
        return loss

    def adversarial_step(self, X: np.ndarray) -> float:
        reps = encode_all(self.model, X, update_stats=False)
        loss, _ = discriminator_loss(self.model, reps, self._noise(reps), backprop_ephysicians=True)
        _check_finite(loss, "L_D", self.counters.outer, self.counters.batches)
        self.ephysician_opt.step(ascend=True)
        self.counters.adversarial += 1
        return loss

    def discriminator_steps(self, X: np.ndarray) -> float:
        reps = encode_all(self.model, X, update_stats=False)
        loss = float("nan")
        for _ in range(self.config.k_disc):
            loss, _ = discriminator_loss(self.model, reps, self._noise(reps), backprop_ephysicians=False)
            _check_finite(loss, "L_D", self.counters.outer, self.counters.batches)
            self.discriminator_opt.step()
            self.counters.discriminator += 1
        return loss

    def train_batch(self, X: np.ndarray, y: np.ndarray) -> None:
        try:
            self.cooperative_step(X, y)
            self.adversarial_step(X)
            self.discriminator_steps(X)
        except OptimizerError as e:
            raise TrainingAbortedError(str(e), step=self.counters.outer, batch=self.counters.batches) from e
        self.counters.batches += 1

    # ─────────────────────────────────────────────────────────────────────
    # EVALUATION / LOOP
    # ─────────────────────────────────────────────────────────────────────

    def full_losses(self, X: np.ndarray, y: np.ndarray, step: int):
        """(L_C, L_D) on the whole set in train-mode statistics, running stats untouched."""
        self.model.train()
        reps = encode_all(self.model, X, update_stats=False)
        loss_c, _ = classifier_loss(self.model, reps, y, cooperative=False)
        noise = None
        if self.model.noise_enabled:
            noise = sample_noise(self.model, reps, np.random.default_rng([self.config.seed, step, 1]))
        loss_d, _ = discriminator_loss(self.model, reps, noise, backprop_ephysicians=False)
        return loss_c, loss_d

    def fit(self, train_set: Dataset, val_set: Optional[Dataset] = None) -> TrainHistory:
        _check_complete(train_set, "training")
        cfg = self.config
        logger.debug(f"Training CN: M={self.model.M}, N={cfg.n_steps}, K={cfg.k_disc}, "
                     f"noise={cfg.noise_enabled}, coop={cfg.cooperative}")
        self.model.train()
        for step in range(1, cfg.n_steps + 1):
            self.counters.outer = step
            for idx in iterate_batches(train_set.n_samples, cfg.batch_size, self.rng):
                self.train_batch(train_set.X[idx], train_set.y[idx])

            loss_c, loss_d = self.full_losses(train_set.X, train_set.y, step)
            _check_finite(loss_c, "train L_C", step, None)
            _check_finite(loss_d, "train L_D", step, None)
            val_acc = float("nan")
            if val_set is not None and val_set.n_samples > 0:
                val_acc = float(np.mean(predict(self.model, val_set.X) == val_set.y))
            record = StepRecord(step=step, loss_c=loss_c, loss_d=loss_d, val_accuracy=val_acc)
            self.history.records.append(record)
            self.last_record = record
            logger.debug(f"step {step}: L_C={loss_c:.5f} L_D={loss_d:.5f} val_acc={val_acc:.4f}")
            if self.on_step_end is not None:
                self.on_step_end(self, record)

            if step >= 2 and convergence_check(self.history, cfg.convergence_tol):
                self.history.stop_reason = CONVERGED
                break
        else:
            self.history.stop_reason = MAX_STEPS
        self.model.train()
        logger.debug(f"Stopped after {len(self.history)} steps ({self.history.stop_reason})")
        return self.history


def train(config: TrainConfig, model: ConsensusModel, train_set: Dataset, val_set: Optional[Dataset] = None,
          rng: Optional[np.random.Generator] = None, on_step_end: Optional[StepCallback] = None):
    trainer = ConsensusTrainer(model, config, rng, on_step_end)
    history = trainer.fit(train_set, val_set)
    return model, history


def train_baseline(config: TrainConfig, model: MLPBaseline, train_set: Dataset,
                   val_set: Optional[Dataset] = None,
                   rng: Optional[np.random.Generator] = None) -> TrainHistory:
    """Same batches, stop rule and Adam settings as the CN, with one optimizer."""
    _check_complete(train_set, "training")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    opt = AdamOptimizer(model.network.layers, lr=config.lr_classifier, beta1=config.beta1,
                        beta2=config.beta2, epsilon=config.adam_eps, name="baseline")
    history = TrainHistory()
    model.network.train()
    for step in range(1, config.n_steps + 1):
        for b, idx in enumerate(iterate_batches(train_set.n_samples, config.batch_size, rng)):
            _check_finite(model.loss(train_set.X[idx], train_set.y[idx]), "L_C", step, b)
            try:
                opt.step()
            except OptimizerError as e:
                raise TrainingAbortedError(str(e), step=step, batch=b) from e

        loss_c, _ = softmax_cross_entropy(model.network.forward(train_set.X, update_stats=False), train_set.y)
        _check_finite(loss_c, "train L_C", step, None)
        val_acc = float("nan")
        if val_set is not None and val_set.n_samples > 0:
            val_acc = float(np.mean(model.predict(val_set.X) == val_set.y))
        history.records.append(StepRecord(step=step, loss_c=loss_c, loss_d=float("nan"), val_accuracy=val_acc))
        if step >= 2 and convergence_check(history, config.convergence_tol):
            history.stop_reason = CONVERGED
            break
    else:
        history.stop_reason = MAX_STEPS
    return history
