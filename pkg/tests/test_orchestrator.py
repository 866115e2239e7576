"""
Tests for trial aggregation, ablation grids and the experiment orchestrator.
"""
import math

import numpy as np
import pandas as pd
import pytest

from src.agents.orchestrator import (
    AblationGrid, CellSpec, ExperimentOrchestrator, TrialReport, aggregate, build_grid, division_grid,
    modality_grid, noise_grid, sample_mean_std, table_frame, trial_seeds, write_reports,
)
from src.services.config_factory import EvaluationConfig, ModelConfig, TrainConfig
from src.utils.constants import TABLE_COLUMNS, TRIAL_COLUMNS
from src.utils.errors import ConfigError


@pytest.fixture
def orchestrator(tiny_dataset, tiny_spec):
    return ExperimentOrchestrator(
        tiny_dataset, tiny_spec.group_map(),
        model_config=ModelConfig(representation_dim=3, hidden_dim=4),
        train_config=TrainConfig(n_steps=2, batch_size=16, convergence_tol=1e-12),
        eval_config=EvaluationConfig(n_trials=2, bayes_samples=2000),
        master_seed=11,
    )


# =============================================================================
# Aggregation
# =============================================================================

class TestAggregation:

    def test_mean_and_sample_std(self):
        summary = sample_mean_std([0.7, 0.9])
        assert summary.mean == pytest.approx(0.8)
        assert summary.std == pytest.approx(0.141421356, abs=1e-9)
        assert summary.n == 2

    def test_identical_values(self):
        summary = sample_mean_std([0.8] * 10)
        assert summary.mean == pytest.approx(0.8)
        assert summary.std == pytest.approx(0.0, abs=1e-15)

    def test_order_does_not_matter(self):
        rng = np.random.default_rng(0)
        values = rng.random(10).tolist()
        reference = sample_mean_std(values)
        for _ in range(20):
            shuffled = sample_mean_std(rng.permutation(values).tolist())
            assert shuffled.mean == reference.mean
            assert shuffled.std == pytest.approx(reference.std, rel=1e-14)

    def test_single_value_has_undefined_std(self):
        assert math.isnan(sample_mean_std([0.5]).std)

    def test_aborted_trials_are_excluded(self):
        reports = [TrialReport(cell_id="c", trial=0, seed=1, accuracy=0.7, micro_f1=0.7, macro_f1=0.6),
                   TrialReport(cell_id="c", trial=1, seed=2, status="aborted", error="boom"),
                   TrialReport(cell_id="c", trial=2, seed=3, accuracy=0.9, micro_f1=0.9, macro_f1=0.8)]
        summary = aggregate("c", reports)
        assert summary.excluded == [1]
        assert summary.metrics["accuracy"].n == 2
        assert summary.metrics["accuracy"].mean == pytest.approx(0.8)


# =============================================================================
# Grids and seeds
# =============================================================================

class TestGrids:

    def test_modality_grid_for_three_groups(self):
        grid = modality_grid(["a", "b", "c"])
        ids = [c.cell_id for c in grid.cells]
        assert len(ids) == 11
        assert ids[:3] == ["mlp_a", "mlp_b", "mlp_c"]
        assert {"cn_a+b", "mlp_b+c", "cn_all", "mlp_all"} <= set(ids)
        assert not any(c.family == "cn" and c.modalities and len(c.modalities) == 1 for c in grid.cells)

    def test_division_grid(self):
        assert [c.groups for c in division_grid(3).cells] == ["merged:2", "natural", "random:2", "random:3", "random:4"]
        assert [c.cell_id for c in division_grid(2).cells][0] == "cn_natural_2"

    def test_noise_grid_differs_only_in_noise(self):
        on, off = noise_grid().cells
        assert (on.noise_enabled, off.noise_enabled) == (True, False)
        assert (on.family, on.cooperative, on.groups) == (off.family, off.cooperative, off.groups)

    def test_all_grid_has_unique_ids(self):
        ids = [c.cell_id for c in build_grid("all", ["a", "b", "c"]).cells]
        assert len(ids) == len(set(ids))
        assert "cn_noise_off" in ids and "cn_random_4" in ids

    def test_unknown_grid(self):
        with pytest.raises(ConfigError):
            build_grid("everything", ["a", "b"])

    def test_trial_seeds(self):
        assert trial_seeds(0, 3) == trial_seeds(0, 3)
        assert trial_seeds(0, 3) != trial_seeds(0, 4)
        assert trial_seeds(0, 3) != trial_seeds(1, 3)
        assert len(set(trial_seeds(5, 0).values())) == 3


# =============================================================================
# Orchestrator
# =============================================================================

class TestExperimentOrchestrator:

    def test_run_trials_summary(self, orchestrator):
        summary = orchestrator.run_trials(CellSpec("cn"))
        assert summary.metrics["accuracy"].n == 2
        assert [t.trial for t in summary.trials] == [0, 1]
        assert all(0.0 <= t.accuracy <= 1.0 for t in summary.trials)
        assert summary.bayes_ceiling is not None

    def test_same_master_seed_same_report(self, tiny_dataset, tiny_spec, orchestrator):
        again = ExperimentOrchestrator(tiny_dataset, tiny_spec.group_map(),
                                       model_config=orchestrator.model_config,
                                       train_config=orchestrator.train_config,
                                       eval_config=orchestrator.eval_config, master_seed=11)
        first = orchestrator.run_trials(CellSpec("cn"))
        second = again.run_trials(CellSpec("cn"))
        assert first.model_dump() == second.model_dump()

    def test_paired_cells_share_splits(self, orchestrator):
        on, off = orchestrator.run_ablation(noise_grid())
        for a, b in zip(on.trials, off.trials):
            assert a.split_fingerprint == b.split_fingerprint
            assert a.seed == b.seed
        assert on.trials[0].config_fingerprint != off.trials[0].config_fingerprint
        assert on.trials[0].split_fingerprint != on.trials[1].split_fingerprint

    def test_mlp_and_cn_share_splits(self, orchestrator):
        mlp, cn = orchestrator.run_ablation(build_grid("benchmark", orchestrator.natural.names))
        assert [t.split_fingerprint for t in mlp.trials] == [t.split_fingerprint for t in cn.trials]

    def test_parallel_trials_match_sequential(self, orchestrator):
        sequential = orchestrator.run_trials(CellSpec("cn"), jobs=1)
        parallel = orchestrator.run_trials(CellSpec("cn"), jobs=2)
        assert [t.accuracy for t in sequential.trials] == [t.accuracy for t in parallel.trials]

    def test_selected_modalities_and_random_groups(self, orchestrator):
        cells = [CellSpec("mlp_single", family="mlp", modalities=("modality_1",)),
                 CellSpec("cn_pair", modalities=("modality_0", "modality_2")),
                 CellSpec("cn_random_2", groups="random:2"),
                 CellSpec("cn_merged", groups="merged:2")]
        summaries = orchestrator.run_ablation(AblationGrid("custom", cells))
        assert all(s.metrics["accuracy"].n == 2 for s in summaries)

    def test_invalid_cell_is_reported_as_aborted(self, orchestrator):
        summary = orchestrator.run_trials(CellSpec("cn_single", modalities=("modality_0",)))
        assert summary.excluded == [0, 1]
        assert summary.metrics["accuracy"].n == 0
        assert all(t.status == "aborted" and t.error for t in summary.trials)

    def test_needs_two_trials(self, orchestrator):
        with pytest.raises(ConfigError):
            orchestrator.run_trials(CellSpec("cn"), n_trials=1)

    def test_write_reports(self, orchestrator, tmp_path):
        summaries = orchestrator.run_ablation(noise_grid())
        table, trials = tmp_path / "table.csv", tmp_path / "trials.csv"
        write_reports(summaries, str(table), str(trials))
        table_df, trials_df = pd.read_csv(table), pd.read_csv(trials)
        assert list(table_df.columns) == TABLE_COLUMNS
        assert len(table_df) == 2 * 3
        assert list(trials_df.columns) == TRIAL_COLUMNS
        assert len(trials_df) == 2 * 2

    def test_modality_table_runs_every_cell(self, orchestrator):
        grid = modality_grid(orchestrator.natural.names)
        summaries = orchestrator.run_ablation(grid, n_trials=2)
        assert [s.cell_id for s in summaries] == [c.cell_id for c in grid.cells]
        assert len(summaries) == 11
        assert all(s.metrics["accuracy"].n == 2 for s in summaries)
        assert len(table_frame(summaries)) == 11 * 3


# =============================================================================
# Cell flags
# =============================================================================

class TestCellFlags:

    @pytest.fixture
    def plain_orchestrator(self, tiny_dataset, tiny_spec):
        return ExperimentOrchestrator(
            tiny_dataset, tiny_spec.group_map(),
            model_config=ModelConfig(representation_dim=3, hidden_dim=4),
            train_config=TrainConfig(n_steps=2, batch_size=16, convergence_tol=1e-12,
                                     noise_enabled=False, cooperative=False),
            eval_config=EvaluationConfig(n_trials=2, bayes_samples=2000),
        )

    def test_open_axes_follow_the_train_config(self, plain_orchestrator):
        for cell in build_grid("benchmark", plain_orchestrator.natural.names).cells:
            config = plain_orchestrator.cell_train_config(cell, 0)
            assert (config.noise_enabled, config.cooperative) == (False, False)

    def test_grid_axis_overrides_the_train_config(self, plain_orchestrator):
        on, off = noise_grid().cells
        assert plain_orchestrator.cell_train_config(on, 0).noise_enabled is True
        assert plain_orchestrator.cell_train_config(on, 0).cooperative is False
        assert plain_orchestrator.cell_train_config(off, 0).noise_enabled is False

    def test_trials_train_with_the_inherited_flags(self, plain_orchestrator, monkeypatch):
        seen = []
        original = ExperimentOrchestrator.cell_train_config

        def spy(self, cell, trial):
            config = original(self, cell, trial)
            seen.append((cell.cell_id, config.noise_enabled, config.cooperative))
            return config

        monkeypatch.setattr(ExperimentOrchestrator, "cell_train_config", spy)
        plain_orchestrator.run_ablation(build_grid("benchmark", plain_orchestrator.natural.names))
        assert seen and all(noise is False and coop is False for _, noise, coop in seen)

    def test_fingerprint_tracks_the_inherited_flags(self, orchestrator, plain_orchestrator):
        cell = CellSpec("cn_all")
        assert orchestrator.config_fingerprint(cell) != plain_orchestrator.config_fingerprint(cell)
