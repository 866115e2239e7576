from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.engine.layers import as_matrix
from src.utils.errors import DimensionError, PartitionConfigError


@dataclass
class ModalityPartition:
    """Disjoint, exhaustive assignment of feature indices to M named groups."""

    groups: List[Tuple[str, List[int]]]
    total_dims: int
    # Single-group partitions only exist for the single-modality MLP baselines.
    min_groups: int = 2

    def __post_init__(self) -> None:
        self.groups = [(str(name), [int(i) for i in idx]) for name, idx in self.groups]
        if len(self.groups) < max(1, self.min_groups):
            raise PartitionConfigError(f"a partition needs at least {self.min_groups} groups, got {len(self.groups)}")
        names = [name for name, _ in self.groups]
        if len(set(names)) != len(names):
            raise PartitionConfigError(f"duplicate group names in {names}")
        seen: set = set()
        for name, idx in self.groups:
            if not idx:
                raise PartitionConfigError(f"group '{name}' is empty")
            overlap = seen.intersection(idx)
            if overlap or len(set(idx)) != len(idx):
                raise PartitionConfigError(f"group '{name}' repeats feature indices {sorted(overlap) or idx}")
            seen.update(idx)
        if seen != set(range(self.total_dims)):
            missing = sorted(set(range(self.total_dims)) - seen)
            extra = sorted(seen - set(range(self.total_dims)))
            raise PartitionConfigError(f"partition does not cover 0..{self.total_dims - 1} "
                                       f"(missing={missing[:10]}, out_of_range={extra[:10]})")

    @property
    def M(self) -> int:
        return len(self.groups)

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.groups]

    @property
    def sizes(self) -> List[int]:
        return [len(idx) for _, idx in self.groups]

    def indices(self, m: int) -> np.ndarray:
        return np.asarray(self.groups[m][1], dtype=np.int64)

    def order(self) -> np.ndarray:
        """Feature indices in group-concatenation order."""
        return np.concatenate([self.indices(m) for m in range(self.M)])


def partition_sample(x, partition: ModalityPartition) -> List[np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != partition.total_dims:
        raise DimensionError(f"sample has shape {x.shape}, partition expects ({partition.total_dims},)")
    return [x[partition.indices(m)] for m in range(partition.M)]


def partition_matrix(X, partition: ModalityPartition) -> List[np.ndarray]:
    X = as_matrix(X)
    if X.shape[1] != partition.total_dims:
        raise DimensionError(f"matrix has {X.shape[1]} columns, partition expects {partition.total_dims}")
    return [X[:, partition.indices(m)] for m in range(partition.M)]


def reassemble(parts: Sequence[np.ndarray], partition: ModalityPartition) -> np.ndarray:
    """Inverse of partition_sample / partition_matrix."""
    if len(parts) != partition.M:
        raise DimensionError(f"expected {partition.M} parts, got {len(parts)}")
    stacked = np.concatenate([np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in parts], axis=1)
    out = np.empty_like(stacked)
    out[:, partition.order()] = stacked
    return out[0] if np.asarray(parts[0]).ndim == 1 else out
