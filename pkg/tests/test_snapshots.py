import numpy as np
import pandas as pd
import pytest

from src.agents.trainer import ConsensusTrainer, StepRecord
from src.engine.consensus import ConsensusModel
from src.services.config_factory import DataConfig, TrainConfig
from src.services.dataset_service import prepare_splits
from src.services.partition_service import natural_partition
from src.services.snapshot_service import export_snapshots, snapshot_rows, validate_steps
from src.utils.constants import SNAPSHOT_COLUMNS
from src.utils.errors import ConfigError


@pytest.fixture
def prepared(tiny_dataset):
    return prepare_splits(tiny_dataset, DataConfig(), seed=0)


def _trainer(tiny_dataset, tiny_spec, small_model_config, noise=True, **overrides):
    partition = natural_partition(tiny_dataset.feature_names, tiny_spec.group_map())
    config = TrainConfig(n_steps=3, batch_size=16, convergence_tol=1e-12, noise_enabled=noise, **overrides)
    model = ConsensusModel(partition, 2, small_model_config, noise, np.random.default_rng(0))
    return ConsensusTrainer(model, config)


class TestSnapshots:

    def test_rows_per_step_modality_and_sample(self, tiny_dataset, tiny_spec, small_model_config, prepared, tmp_path):
        out = tmp_path / "snaps.csv"
        trainer = _trainer(tiny_dataset, tiny_spec, small_model_config)
        export_snapshots(trainer, prepared.train, prepared.val, [1, 3], str(out))
        frame = pd.read_csv(out)
        assert list(frame.columns) == SNAPSHOT_COLUMNS
        assert len(frame) == 2 * 4 * prepared.train.n_samples
        assert sorted(frame["step"].unique()) == [1, 3]
        assert sorted(frame["modality"].unique()) == [0, 1, 2, 3]
        assert frame["explained_frac"].between(0, 1).all()
        assert trainer.on_step_end is None

    def test_no_noise_rows_without_the_noise_modality(self, tiny_dataset, tiny_spec, small_model_config, prepared, tmp_path):
        out = tmp_path / "snaps.csv"
        trainer = _trainer(tiny_dataset, tiny_spec, small_model_config, noise=False)
        export_snapshots(trainer, prepared.train, None, [2], str(out))
        frame = pd.read_csv(out)
        assert sorted(frame["modality"].unique()) == [1, 2, 3]

    def test_one_snapshot_per_sample_and_modality(self, tiny_dataset, tiny_spec, small_model_config, prepared):
        trainer = _trainer(tiny_dataset, tiny_spec, small_model_config)
        rows = snapshot_rows(trainer.model, prepared.train, StepRecord(1, 0.7, 1.3, 0.5), seed=4)
        keys = {(r.modality, r.sample_id) for r in rows}
        assert len(keys) == len(rows) == 4 * prepared.train.n_samples
        assert all(r.loss_d == 1.3 for r in rows)

    def test_snapshot_noise_is_seeded(self, tiny_dataset, tiny_spec, small_model_config, prepared):
        trainer = _trainer(tiny_dataset, tiny_spec, small_model_config)
        record = StepRecord(5, 0.7, 1.3, 0.5)
        first = snapshot_rows(trainer.model, prepared.train, record, seed=4)
        second = snapshot_rows(trainer.model, prepared.train, record, seed=4)
        assert [(r.pc1, r.pc2) for r in first] == [(r.pc1, r.pc2) for r in second]

    @pytest.mark.parametrize("steps", [[0], [4], [1, 9]])
    def test_steps_outside_the_run(self, steps):
        with pytest.raises(ConfigError):
            validate_steps(steps, 3)

    def test_steps_deduplicated(self):
        assert validate_steps([3, 1, 3], 3) == [1, 3]

    def test_steps_after_an_early_stop_are_skipped(self, tiny_dataset, tiny_spec, small_model_config,
                                                   prepared, tmp_path, caplog):
        partition = natural_partition(tiny_dataset.feature_names, tiny_spec.group_map())
        config = TrainConfig(n_steps=50, batch_size=16, lr_ephysician=1e-12, lr_discriminator=1e-12,
                             lr_classifier=1e-12, convergence_tol=1e-4)
        trainer = ConsensusTrainer(ConsensusModel(partition, 2, small_model_config, True,
                                                  np.random.default_rng(0)), config)
        history = export_snapshots(trainer, prepared.train, None, [1, 40], str(tmp_path / "s.csv"))
        assert len(history) == 2
        assert "no snapshot for steps [40]" in caplog.text
        assert set(pd.read_csv(tmp_path / "s.csv")["step"]) == {1}
