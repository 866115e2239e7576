import asyncio
import hashlib
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from src.agents.base_agent import AgentResult, BaseAgent
from src.agents.trainer import train, train_baseline
from src.engine.baseline import build_mlp_baseline
from src.engine.consensus import ConsensusModel, predict
from src.engine.partition import ModalityPartition
from src.services.config_factory import DataConfig, EvaluationConfig, ModelConfig, TrainConfig
from src.services.dataset_service import Dataset, PreparedData, prepare_splits
from src.services.partition_service import (
    merge_groups, natural_partition, random_partition, select_modalities,
)
from src.services.synthetic_service import bayes_ceiling
from src.utils.constants import METRIC_NAMES, TABLE_COLUMNS, TRIAL_COLUMNS
from src.utils.errors import ConfigError
from src.utils.metrics import metrics

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# REPORT TYPES
# ---------------------------------------------------------------------------


class TrialReport(BaseModel):
    cell_id: str
    trial: int
    seed: int
    status: str = "ok"
    accuracy: Optional[float] = None
    micro_f1: Optional[float] = None
    macro_f1: Optional[float] = None
    split_fingerprint: str = ""
    config_fingerprint: str = ""
    steps_run: int = 0
    stop_reason: Optional[str] = None
    error: Optional[str] = None


class MetricSummary(BaseModel):
    mean: float
    std: float
    n: int


class CellSummary(BaseModel):
    cell_id: str
    metrics: Dict[str, MetricSummary]
    trials: List[TrialReport]
    excluded: List[int]
    bayes_ceiling: Optional[float] = None


def sample_mean_std(values: Sequence[float]) -> MetricSummary:
    """Mean and sample (n-1) std; exactly rounded sums so trial order does not matter."""
    n = len(values)
    if n == 0:
        return MetricSummary(mean=float("nan"), std=float("nan"), n=0)
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else float("nan")
    return MetricSummary(mean=mean, std=std, n=n)


def aggregate(cell_id: str, reports: Sequence[TrialReport], ceiling: Optional[float] = None) -> CellSummary:
    ok = [r for r in reports if r.status == "ok"]
    excluded = sorted(r.trial for r in reports if r.status != "ok")
    if excluded:
        logger.warning(f"⚠️ [{cell_id}] excluded aborted trials {excluded}")
    summary = {name: sample_mean_std([getattr(r, name) for r in ok]) for name in METRIC_NAMES}
    return CellSummary(cell_id=cell_id, metrics=summary, trials=sorted(reports, key=lambda r: r.trial),
                       excluded=excluded, bayes_ceiling=ceiling)


# ---------------------------------------------------------------------------
# GRID
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellSpec:
    """
    One ablation cell.

    groups: "natural", "merged:K" (natural groups merged into K) or "random:K".
    modalities: optional subset of natural group names (modality comparison rows).
    noise_enabled / cooperative: None inherits the experiment's TrainConfig.
    """
    cell_id: str
    family: str = "cn"              # "cn" | "mlp"
    noise_enabled: Optional[bool] = None
    cooperative: Optional[bool] = None
    groups: str = "natural"
    modalities: Optional[tuple] = None


@dataclass
class AblationGrid:
    name: str
    cells: List[CellSpec] = field(default_factory=list)

    def __add__(self, other: "AblationGrid") -> "AblationGrid":
        return AblationGrid(name=f"{self.name}+{other.name}", cells=self.cells + other.cells)


def noise_grid() -> AblationGrid:
    return AblationGrid("noise", [CellSpec("cn_noise_on", noise_enabled=True),
                                  CellSpec("cn_noise_off", noise_enabled=False)])


def cooperative_grid() -> AblationGrid:
    return AblationGrid("cooperative", [CellSpec("cn_coop_on", cooperative=True),
                                        CellSpec("cn_coop_off", cooperative=False)])


def modality_grid(group_names: Sequence[str]) -> AblationGrid:
    """Single modalities (MLP only), every pair (MLP and CN), all modalities (MLP and CN)."""
    names = list(group_names)
    if len(names) < 2:
        raise ConfigError("the modality comparison needs at least 2 natural groups")
    cells = [CellSpec(f"mlp_{n}", family="mlp", modalities=(n,)) for n in names]
    for pair in itertools.combinations(names, 2):
        tag = "+".join(pair)
        cells += [CellSpec(f"mlp_{tag}", family="mlp", modalities=pair),
                  CellSpec(f"cn_{tag}", family="cn", modalities=pair)]
    if len(names) > 2:
        cells += [CellSpec("mlp_all", family="mlp"), CellSpec("cn_all", family="cn")]
    return AblationGrid("modalities", cells)


def division_grid(n_natural_groups: int, random_counts: Sequence[int] = (2, 3, 4)) -> AblationGrid:
    cells = []
    if n_natural_groups > 2:
        cells.append(CellSpec("cn_natural_2", groups="merged:2"))
    cells.append(CellSpec(f"cn_natural_{n_natural_groups}", groups="natural"))
    cells += [CellSpec(f"cn_random_{k}", groups=f"random:{k}") for k in random_counts]
    return AblationGrid("division", cells)


def benchmark_grid() -> AblationGrid:
    return AblationGrid("benchmark", [CellSpec("mlp_all", family="mlp"), CellSpec("cn_all", family="cn")])


GRID_NAMES = ["noise", "cooperative", "modalities", "division", "benchmark"]


def build_grid(name: str, group_names: Sequence[str]) -> AblationGrid:
    builders = {
        "noise": noise_grid,
        "cooperative": cooperative_grid,
        "modalities": lambda: modality_grid(group_names),
        "division": lambda: division_grid(len(group_names)),
        "benchmark": benchmark_grid,
    }
    if name == "all":
        grid = AblationGrid("all")
        for key in GRID_NAMES:
            grid = grid + builders[key]()
        # paired cells are keyed by id; identical ids across tables are the same experiment
        unique = {c.cell_id: c for c in grid.cells}
        return AblationGrid("all", list(unique.values()))
    if name not in builders:
        raise ConfigError(f"unknown ablation grid '{name}' (choose from {GRID_NAMES + ['all']})")
    return builders[name]()


# ---------------------------------------------------------------------------
# TRIALS
# ---------------------------------------------------------------------------


def trial_seeds(master_seed: int, trial: int) -> Dict[str, int]:
    """Trial-indexed seeds shared by every cell (paired comparisons)."""
    split_seed, init_seed, partition_seed = np.random.SeedSequence([master_seed, trial]).generate_state(
        3, dtype=np.uint64)
    return {"split": int(split_seed), "init": int(init_seed), "partition": int(partition_seed)}


class TrialAgent(BaseAgent):
    """Trains and scores one model on one trial's splits."""

    def __init__(self, orchestrator: "ExperimentOrchestrator"):
        super().__init__("trial")
        self.orchestrator = orchestrator

    async def process(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        return await asyncio.to_thread(self.orchestrator.run_single_trial, payload["cell"], payload["trial"])


class ExperimentOrchestrator:
    def __init__(self, dataset: Dataset, group_map: Optional[Mapping[str, str]] = None,
                 model_config: Optional[ModelConfig] = None, train_config: Optional[TrainConfig] = None,
                 data_config: Optional[DataConfig] = None, eval_config: Optional[EvaluationConfig] = None,
                 master_seed: int = 0):
        self.dataset = dataset
        self.group_map = group_map
        self.model_config = model_config or ModelConfig()
        self.train_config = train_config or TrainConfig()
        self.data_config = data_config or DataConfig()
        self.eval_config = eval_config or EvaluationConfig()
        self.master_seed = master_seed
        self._prepared: Dict[int, PreparedData] = {}
        self._ceiling: Optional[float] = None
        self._ceiling_done = False

    # --- data ---

    @property
    def natural(self) -> ModalityPartition:
        if self.group_map is None:
            raise ConfigError("this experiment needs a modality map (natural partition)")
        return natural_partition(self.dataset.feature_names, self.group_map)

    def prepared(self, trial: int) -> PreparedData:
        # setdefault keeps the first result if two threads race on the same trial
        if trial not in self._prepared:
            data = prepare_splits(self.dataset, self.data_config, trial_seeds(self.master_seed, trial)["split"])
            self._prepared.setdefault(trial, data)
        return self._prepared[trial]

    def ceiling(self) -> Optional[float]:
        if not self._ceiling_done:
            self._ceiling = bayes_ceiling(self.dataset, self.eval_config.bayes_samples, self.master_seed)
            self._ceiling_done = True
            if self._ceiling is not None:
                logger.info(f"📊 Monte-Carlo Bayes ceiling: {self._ceiling:.4f}")
        return self._ceiling

    def partition_for(self, cell: CellSpec, trial: int):
        """(partition, column indices) for a cell; columns are None when every feature is used."""
        kind, _, count = cell.groups.partition(":")
        if kind == "random":
            return random_partition(self.dataset.n_features, int(count),
                                    trial_seeds(self.master_seed, trial)["partition"]), None
        natural = self.natural
        if kind == "merged":
            natural = merge_groups(natural, n_groups=int(count))
        elif kind != "natural":
            raise ConfigError(f"unknown partition kind '{cell.groups}'")
        if cell.modalities:
            return select_modalities(natural, list(cell.modalities))
        # the MLP baseline reads every column; its partition only fixes the layer sizes
        return natural, None

    def cell_flags(self, cell: CellSpec) -> Dict[str, bool]:
        """Noise and cooperation for a cell; axes a cell leaves open come from the TrainConfig."""
        return {
            "noise_enabled": self.train_config.noise_enabled if cell.noise_enabled is None else cell.noise_enabled,
            "cooperative": self.train_config.cooperative if cell.cooperative is None else cell.cooperative,
        }

    def cell_train_config(self, cell: CellSpec, trial: int) -> TrainConfig:
        return self.train_config.model_copy(update={
            **self.cell_flags(cell),
            "seed": trial_seeds(self.master_seed, trial)["init"],
        })

    def config_fingerprint(self, cell: CellSpec) -> str:
        base = self.train_config.model_dump(exclude={"seed"})
        base.update(self.cell_flags(cell))
        blob = json.dumps({"cell": cell.__dict__, "model": self.model_config.model_dump(),
                           "train": base, "data": self.data_config.model_dump()},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    # --- one trial ---

    def run_single_trial(self, cell: CellSpec, trial: int) -> Dict[str, Any]:
        data = self.prepared(trial)
        partition, columns = self.partition_for(cell, trial)
        train_set, val_set, test_set = data.train, data.val, data.test
        if columns is not None:
            train_set, val_set, test_set = (d.select_columns(columns) for d in (train_set, val_set, test_set))

        config = self.cell_train_config(cell, trial)
        rng = np.random.default_rng(config.seed)
        n_classes = self.dataset.n_classes
        if cell.family == "cn":
            model = ConsensusModel(partition, n_classes, self.model_config, config.noise_enabled, rng)
            _, history = train(config, model, train_set, val_set, rng)
            y_pred = predict(model, test_set.X)
        elif cell.family == "mlp":
            model = build_mlp_baseline(partition, self.model_config, n_classes, rng)
            history = train_baseline(config, model, train_set, val_set, rng)
            y_pred = model.predict(test_set.X)
        else:
            raise ConfigError(f"unknown model family '{cell.family}'")

        scores = metrics(test_set.y, y_pred, n_classes)
        return {**scores.as_dict(), "split_fingerprint": data.split_fingerprint(),
                "steps_run": len(history), "stop_reason": history.stop_reason}

    # --- cells / grids ---

    async def run_cell_async(self, cell: CellSpec, n_trials: Optional[int] = None,
                             jobs: Optional[int] = None) -> CellSummary:
        n_trials = n_trials or self.eval_config.n_trials
        if n_trials < 2:
            raise ConfigError(f"n_trials must be >= 2, got {n_trials}")
        semaphore = asyncio.Semaphore(jobs or self.eval_config.jobs)
        agent = TrialAgent(self)
        fingerprint = self.config_fingerprint(cell)

        async def _one(trial: int) -> TrialReport:
            async with semaphore:
                result: AgentResult = await agent.execute({"cell": cell, "trial": trial})
            seed = trial_seeds(self.master_seed, trial)["init"]
            if not result.success:
                logger.error(f"❌ [{cell.cell_id}] trial {trial} aborted: {result.error}")
                return TrialReport(cell_id=cell.cell_id, trial=trial, seed=seed, status="aborted",
                                   config_fingerprint=fingerprint, error=result.error)
            logger.info(f"✅ [{cell.cell_id}] trial {trial}: acc={result.data['accuracy']:.4f} "
                        f"macro_f1={result.data['macro_f1']:.4f} ({result.data['steps_run']} steps)")
            return TrialReport(cell_id=cell.cell_id, trial=trial, seed=seed,
                               config_fingerprint=fingerprint, **result.data)

        reports = await asyncio.gather(*[_one(t) for t in range(n_trials)])
        summary = aggregate(cell.cell_id, reports, self.ceiling())
        acc = summary.metrics["accuracy"]
        logger.info(f"📊 [{cell.cell_id}] accuracy {acc.mean:.4f} ± {acc.std:.4f} (n={acc.n})")
        return summary

    def run_trials(self, cell: Optional[CellSpec] = None, n_trials: Optional[int] = None,
                   jobs: Optional[int] = None) -> CellSummary:
        cell = cell or CellSpec("cn")
        return asyncio.run(self.run_cell_async(cell, n_trials, jobs))

    def run_ablation(self, grid: AblationGrid, n_trials: Optional[int] = None,
                     jobs: Optional[int] = None) -> List[CellSummary]:
        logger.info(f"🚀 Ablation '{grid.name}': {len(grid.cells)} cells × "
                    f"{n_trials or self.eval_config.n_trials} trials")

        async def _all():
            # cells run one after another; trials inside a cell share the job pool
            return [await self.run_cell_async(cell, n_trials, jobs) for cell in grid.cells]

        return asyncio.run(_all())


def run_trials(dataset: Dataset, cell: Optional[CellSpec] = None, n_trials: int = 10,
               master_seed: int = 0, **kwargs) -> CellSummary:
    return ExperimentOrchestrator(dataset, master_seed=master_seed, **kwargs).run_trials(cell, n_trials)


def run_ablation(grid: AblationGrid, dataset: Dataset, n_trials: int = 10, master_seed: int = 0,
                 **kwargs) -> List[CellSummary]:
    return ExperimentOrchestrator(dataset, master_seed=master_seed, **kwargs).run_ablation(grid, n_trials)


# ---------------------------------------------------------------------------
# OUTPUT
# ---------------------------------------------------------------------------


def table_frame(summaries: Sequence[CellSummary]) -> pd.DataFrame:
    rows = [[s.cell_id, name, s.metrics[name].mean, s.metrics[name].std, s.metrics[name].n]
            for s in summaries for name in METRIC_NAMES]
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def trials_frame(summaries: Sequence[CellSummary]) -> pd.DataFrame:
    rows = [[t.cell_id, t.trial, t.seed, t.accuracy, t.micro_f1, t.macro_f1, t.status,
             t.split_fingerprint, t.config_fingerprint]
            for s in summaries for t in s.trials]
    return pd.DataFrame(rows, columns=TRIAL_COLUMNS)


def write_reports(summaries: Sequence[CellSummary], table_path: str, trials_path: Optional[str] = None) -> None:
    table_frame(summaries).to_csv(table_path, index=False, lineterminator="\n")
    if trials_path:
        trials_frame(summaries).to_csv(trials_path, index=False, lineterminator="\n")
    logger.info(f"💾 Table written to {table_path}" + (f", per-trial scores to {trials_path}" if trials_path else ""))
