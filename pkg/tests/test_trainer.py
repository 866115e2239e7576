"""
Tests for the three-optimizer schedule: parameter ownership, gradient
reversal, stop rules, counters and determinism.
"""
import math

import numpy as np
import pytest

from src.agents.trainer import (
    CONVERGED, MAX_STEPS, ConsensusTrainer, TrainHistory, StepRecord,
    convergence_check, iterate_batches, train, train_baseline,
)
from src.engine.baseline import build_mlp_baseline
from src.engine.consensus import ConsensusModel, discriminator_loss, encode_all, sample_noise
from src.services.config_factory import DataConfig, TrainConfig
from src.services.dataset_service import prepare_splits
from src.services.partition_service import natural_partition
from src.services.synthetic_service import SyntheticSpec, generate_synthetic
from src.utils.constants import HISTORY_COLUMNS
from src.utils.errors import ContractError, TrainingAbortedError
from src.utils.fingerprint import array_fingerprint


@pytest.fixture
def prepared(tiny_dataset):
    return prepare_splits(tiny_dataset, DataConfig(), seed=0)


@pytest.fixture
def partition(tiny_dataset, tiny_spec):
    return natural_partition(tiny_dataset.feature_names, tiny_spec.group_map())


def _model(partition, config, noise=True, seed=0):
    return ConsensusModel(partition, 2, config, noise_enabled=noise, rng=np.random.default_rng(seed))


def _params(model, prefix):
    return array_fingerprint({k: v for k, v in model.named_arrays().items()
                              if k.startswith(prefix) and ".running_" not in k})


def _running_stats(model):
    return array_fingerprint({k: v for k, v in model.named_arrays().items() if ".running_" in k})


class OwnershipTrainer(ConsensusTrainer):
    """Asserts which parameter group every step is allowed to move."""

    def _snapshot(self):
        return {group: _params(self.model, group) for group in ("ephysician", "discriminator", "classifier")}

    def cooperative_step(self, X, y):
        before = self._snapshot()
        loss = super().cooperative_step(X, y)
        after = self._snapshot()
        assert after["discriminator"] == before["discriminator"]
        assert after["classifier"] != before["classifier"]
        if self.config.cooperative:
            assert after["ephysician"] != before["ephysician"]
        else:
            assert after["ephysician"] == before["ephysician"]
        return loss

    def adversarial_step(self, X):
        before = self._snapshot()
        loss = super().adversarial_step(X)
        after = self._snapshot()
        assert after["ephysician"] != before["ephysician"]
        assert after["discriminator"] == before["discriminator"]
        assert after["classifier"] == before["classifier"]
        return loss

    def discriminator_steps(self, X):
        before = self._snapshot()
        stats = _running_stats(self.model)
        loss = super().discriminator_steps(X)
        after = self._snapshot()
        assert after["discriminator"] != before["discriminator"]
        assert after["ephysician"] == before["ephysician"]
        assert after["classifier"] == before["classifier"]
        assert _running_stats(self.model) == stats
        return loss


# =============================================================================
# Helpers
# =============================================================================

class TestConvergenceCheck:

    def test_examples(self):
        assert convergence_check([0.5, 0.49995], 1e-4)
        assert not convergence_check([0.5, 0.4], 1e-4)
        assert convergence_check([0.5, 0.5], 1e-4)

    def test_needs_two_values(self):
        with pytest.raises(ContractError):
            convergence_check([0.5], 1e-4)

    def test_reads_history(self):
        history = TrainHistory([StepRecord(1, 0.7, 1.1, 0.5), StepRecord(2, 0.69999, 1.0, 0.5)])
        assert convergence_check(history, 1e-4)


class TestIterateBatches:

    def test_covers_every_row_once(self, rng):
        batches = iterate_batches(70, 32, rng)
        np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(70))

    def test_trailing_single_row_is_merged(self, rng):
        assert [len(b) for b in iterate_batches(33, 32, rng)] == [33]
        assert [len(b) for b in iterate_batches(65, 32, rng)] == [32, 33]

    @pytest.mark.parametrize("n", [33, 65, 97, 3])
    def test_merged_epoch_keeps_every_row_once(self, rng, n):
        batch_size = 32 if n > 3 else 2
        batches = iterate_batches(n, batch_size, rng)
        assert all(len(b) >= 2 for b in batches)
        np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(n))

    def test_needs_two_rows(self, rng):
        with pytest.raises(ContractError):
            iterate_batches(1, 32, rng)


# =============================================================================
# Schedule
# =============================================================================

class TestSchedule:

    @pytest.mark.parametrize("cooperative", [True, False])
    def test_parameter_ownership_over_ten_steps(self, prepared, partition, small_model_config, cooperative):
        config = TrainConfig(n_steps=10, batch_size=16, k_disc=2, cooperative=cooperative,
                             convergence_tol=1e-12, seed=1)
        trainer = OwnershipTrainer(_model(partition, small_model_config), config)
        history = trainer.fit(prepared.train, prepared.val)
        assert 1 <= len(history) <= 10

    def test_counters_for_one_batch(self, tiny_dataset, partition, small_model_config):
        train_set = tiny_dataset.subset(range(20))
        config = TrainConfig(n_steps=1, batch_size=32, k_disc=3, seed=2)
        trainer = ConsensusTrainer(_model(partition, small_model_config), config)
        history = trainer.fit(train_set)
        c = trainer.counters
        assert (c.classifier, c.cooperative, c.adversarial, c.discriminator, c.batches, c.outer) == (1, 1, 1, 3, 1, 1)
        assert history.stop_reason == MAX_STEPS

    def test_non_cooperative_counts_no_cooperative_updates(self, prepared, partition, small_model_config):
        config = TrainConfig(n_steps=2, batch_size=16, cooperative=False, convergence_tol=1e-12)
        trainer = ConsensusTrainer(_model(partition, small_model_config), config)
        trainer.fit(prepared.train)
        assert trainer.counters.cooperative == 0
        assert trainer.counters.classifier == trainer.counters.adversarial == trainer.counters.batches

    def test_adversarial_step_increases_discriminator_loss(self, prepared, partition, small_model_config):
        model = _model(partition, small_model_config)
        trainer = ConsensusTrainer(model, TrainConfig(lr_ephysician=1e-5, seed=3))
        X = prepared.train.X[:32]
        reps = encode_all(model, X, update_stats=False)
        noise = sample_noise(model, reps, np.random.default_rng(9))
        before, _ = discriminator_loss(model, reps, noise, backprop_ephysicians=False)
        trainer.adversarial_step(X)
        after, _ = discriminator_loss(model, encode_all(model, X, update_stats=False), noise,
                                      backprop_ephysicians=False)
        assert after > before

    def test_noise_setting_must_match_the_model(self, partition, small_model_config):
        with pytest.raises(ContractError):
            ConsensusTrainer(_model(partition, small_model_config, noise=True), TrainConfig(noise_enabled=False))

    def test_runs_without_noise(self, prepared, partition, small_model_config):
        config = TrainConfig(n_steps=2, batch_size=16, noise_enabled=False, convergence_tol=1e-12)
        _, history = train(config, _model(partition, small_model_config, noise=False), prepared.train)
        assert len(history) == 2
        assert all(math.isfinite(v) for v in history.loss_d)


# =============================================================================
# Stop rules, learning and determinism
# =============================================================================

class TestFit:

    def test_learns_a_separable_problem(self, small_model_config):
        spec = SyntheticSpec(n_modalities=2, modality_dims=[3, 3], strength=3.0, noise_scale=0.5,
                             distractor_dims=0, n_samples=200)
        data = prepare_splits(generate_synthetic(spec, seed=4), DataConfig(), seed=4)
        part = natural_partition(data.train.feature_names, spec.group_map())
        config = TrainConfig(n_steps=30, batch_size=32, convergence_tol=1e-12, seed=4)
        _, history = train(config, _model(part, small_model_config, seed=4), data.train, data.val)
        assert history.loss_c[-1] < math.log(2)

    def test_plateau_stops_early(self, prepared, partition, small_model_config):
        config = TrainConfig(n_steps=50, batch_size=16, lr_ephysician=1e-12, lr_discriminator=1e-12,
                             lr_classifier=1e-12, convergence_tol=1e-4)
        _, history = train(config, _model(partition, small_model_config), prepared.train)
        assert len(history) == 2
        assert history.stop_reason == CONVERGED

    def test_history_frame(self, prepared, partition, small_model_config, fast_train_config):
        _, history = train(fast_train_config, _model(partition, small_model_config), prepared.train, prepared.val)
        frame = history.to_frame()
        assert list(frame.columns) == HISTORY_COLUMNS
        assert len(frame) == len(history) <= fast_train_config.n_steps
        assert frame["stop_reason"].iloc[-1] == history.stop_reason
        assert (frame["stop_reason"].iloc[:-1] == "").all()
        assert frame["val_accuracy"].between(0, 1).all()

    def test_same_seed_gives_identical_parameters(self, prepared, partition, small_model_config, fast_train_config):
        runs = []
        for _ in range(2):
            model, history = train(fast_train_config, _model(partition, small_model_config, seed=5),
                                   prepared.train, prepared.val, rng=np.random.default_rng(6))
            runs.append((array_fingerprint(model.named_arrays()), history.loss_c))
        assert runs[0] == runs[1]

    def test_non_finite_input_aborts(self, prepared, partition, small_model_config, fast_train_config):
        X = prepared.train.X.copy()
        X[0, 0] = np.inf
        poisoned = prepared.train.with_features(X)
        with pytest.raises(TrainingAbortedError) as excinfo:
            train(fast_train_config, _model(partition, small_model_config), poisoned)
        assert excinfo.value.step == 1

    def test_missing_values_rejected(self, prepared, partition, small_model_config, fast_train_config):
        X = prepared.train.X.copy()
        X[0, 0] = np.nan
        with pytest.raises(ContractError):
            train(fast_train_config, _model(partition, small_model_config), prepared.train.with_features(X))


class TestBaselineTraining:

    def test_reduces_loss(self, prepared, partition, small_model_config):
        model = build_mlp_baseline(partition, small_model_config, n_classes=2, rng=np.random.default_rng(0))
        config = TrainConfig(n_steps=15, batch_size=16, convergence_tol=1e-12)
        history = train_baseline(config, model, prepared.train, prepared.val)
        assert history.loss_c[-1] < history.loss_c[0]
        assert all(math.isnan(v) for v in history.loss_d)
