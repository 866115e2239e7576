"""
PCA snapshots of the representation vectors during training.

At each requested outer step every training sample is encoded by every
ePhysician (plus one noise row per sample when the noise modality is on),
and the (M+1)·N rows are projected jointly onto their own top-2 components.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from src.agents.trainer import ConsensusTrainer, StepRecord, TrainHistory
from src.engine.consensus import ConsensusModel, encode_all, sample_noise
from src.services.dataset_service import Dataset
from src.utils.constants import NOISE_MODALITY, SNAPSHOT_COLUMNS
from src.utils.errors import ConfigError
from src.utils.pca import pca_top2

logger = logging.getLogger(__name__)


@dataclass
class SnapshotRecord:
    step: int
    modality: int
    sample_id: str
    pc1: float
    pc2: float
    explained_frac: float
    loss_d: float
    val_acc: float


def snapshot_rows(model: ConsensusModel, dataset: Dataset, record: StepRecord, seed: int = 0) -> List[SnapshotRecord]:
    with model.inference():
        reps = encode_all(model, dataset.X, update_stats=False)
    blocks, modality_ids = [], []
    if model.noise_enabled:
        blocks.append(sample_noise(model, reps, np.random.default_rng([seed, record.step, 2])))
        modality_ids.append(NOISE_MODALITY)
    for m, rep in enumerate(reps):
        blocks.append(rep)
        modality_ids.append(m + 1)

    pca = pca_top2(np.concatenate(blocks, axis=0))
    n = dataset.n_samples
    rows = []
    for b, modality in enumerate(modality_ids):
        coords = pca.coords[b * n:(b + 1) * n]
        rows += [SnapshotRecord(step=record.step, modality=modality, sample_id=sid,
                                pc1=float(c[0]), pc2=float(c[1]), explained_frac=pca.explained_fraction,
                                loss_d=record.loss_d, val_acc=record.val_accuracy)
                 for sid, c in zip(dataset.ids, coords)]
    return rows


@dataclass
class SnapshotRecorder:
    """`on_step_end` callback collecting snapshot rows at the listed steps."""

    dataset: Dataset
    steps: Sequence[int]
    seed: int = 0
    rows: List[SnapshotRecord] = field(default_factory=list)

    def __call__(self, trainer: ConsensusTrainer, record: StepRecord) -> None:
        if record.step in self.steps:
            self.rows += snapshot_rows(trainer.model, self.dataset, record, self.seed)
            logger.debug(f"📸 Snapshot at step {record.step}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([[getattr(r, c) for c in SNAPSHOT_COLUMNS] for r in self.rows],
                            columns=SNAPSHOT_COLUMNS)


def validate_steps(steps: Sequence[int], n_steps: int) -> List[int]:
    bad = [s for s in steps if not 1 <= int(s) <= n_steps]
    if bad:
        raise ConfigError(f"snapshot steps {bad} outside [1, {n_steps}]")
    return sorted({int(s) for s in steps})


def export_snapshots(trainer: ConsensusTrainer, train_set: Dataset, val_set: Optional[Dataset],
                     steps: Sequence[int], out_path: str) -> TrainHistory:
    """Trains with a SnapshotRecorder attached and writes the snapshot CSV."""
    steps = validate_steps(steps, trainer.config.n_steps)
    recorder = SnapshotRecorder(train_set, steps, trainer.config.seed)
    previous = trainer.on_step_end

    def _chain(t: ConsensusTrainer, record: StepRecord) -> None:
        recorder(t, record)
        if previous is not None:
            previous(t, record)

    trainer.on_step_end = _chain
    history = trainer.fit(train_set, val_set)
    trainer.on_step_end = previous

    taken = sorted({r.step for r in recorder.rows})
    skipped = [s for s in steps if s not in taken]
    if skipped:
        logger.warning(f"⚠️ Training stopped at step {len(history)}; no snapshot for steps {skipped}")
    try:
        recorder.to_frame().to_csv(out_path, index=False, lineterminator="\n")
    except OSError as e:
        raise OSError(f"cannot write snapshots to {out_path}: {e}") from e
    logger.info(f"📸 {len(recorder.rows)} snapshot rows written to {out_path}")
    return history
