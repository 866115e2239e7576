"""
Modality division: natural (from a feature → group map), random
(seeded near-equal groups), merged and sub-selected partitions.
"""
import logging
from collections import OrderedDict
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.engine.partition import ModalityPartition
from src.utils.constants import MODALITY_MAP_COLUMNS
from src.utils.errors import PartitionConfigError

logger = logging.getLogger(__name__)


def load_modality_map(path: str) -> "OrderedDict[str, str]":
    """Reads the `feature_name,group_name` CSV; a feature listed twice is an error."""
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise PartitionConfigError(f"cannot read modality map {path}: {e}") from e
    if list(df.columns[:2]) != MODALITY_MAP_COLUMNS:
        raise PartitionConfigError(f"{path}: header must be {','.join(MODALITY_MAP_COLUMNS)}, "
                                   f"got {list(df.columns)}")
    group_map: "OrderedDict[str, str]" = OrderedDict()
    for row, (feature, group) in enumerate(zip(df["feature_name"], df["group_name"]), start=2):
        feature, group = feature.strip(), group.strip()
        if not feature or not group:
            raise PartitionConfigError(f"{path}:{row}: empty feature or group name")
        if feature in group_map:
            raise PartitionConfigError(f"{path}:{row}: feature '{feature}' assigned to both "
                                       f"'{group_map[feature]}' and '{group}'")
        group_map[feature] = group
    return group_map


def natural_partition(feature_names: Sequence[str], group_map: Mapping[str, str]) -> ModalityPartition:
    """Groups in order of first appearance in the map; indices follow column order."""
    unmapped = [f for f in feature_names if f not in group_map]
    if unmapped:
        raise PartitionConfigError(f"features without a group: {unmapped[:10]}"
                                   f"{' ...' if len(unmapped) > 10 else ''}")
    unknown = [f for f in group_map if f not in set(feature_names)]
    if unknown:
        logger.warning(f"⚠️ Modality map names {len(unknown)} features not in the data, e.g. {unknown[:3]}")

    position = {name: i for i, name in enumerate(feature_names)}
    groups: "OrderedDict[str, List[int]]" = OrderedDict()
    for feature, group in group_map.items():
        if feature in position:
            groups.setdefault(group, []).append(position[feature])
    return ModalityPartition(groups=[(g, sorted(idx)) for g, idx in groups.items()],
                             total_dims=len(feature_names))


def random_partition(total_dims: int, n_groups: int, seed: int = 0) -> ModalityPartition:
    """Seeded shuffle cut into `n_groups` groups whose sizes differ by at most one."""
    if n_groups < 2 or n_groups > total_dims:
        raise PartitionConfigError(f"cannot cut {total_dims} features into {n_groups} random groups")
    perm = np.random.default_rng(seed).permutation(total_dims)
    chunks = np.array_split(perm, n_groups)
    return ModalityPartition(groups=[(f"random_{m}", sorted(c.tolist())) for m, c in enumerate(chunks)],
                             total_dims=total_dims)


def merge_groups(partition: ModalityPartition, plan: Optional[Sequence[Sequence[str]]] = None,
                 n_groups: int = 2) -> ModalityPartition:
    """
    Coarsens a partition. `plan` lists the group names of each merged group;
    without a plan, consecutive groups are merged into `n_groups` near-equal
    runs (3 → 2 gives [a+b, c]).
    """
    if plan is None:
        if n_groups < 1 or n_groups > partition.M:
            raise PartitionConfigError(f"cannot merge {partition.M} groups into {n_groups}")
        plan = [list(chunk) for chunk in np.array_split(np.array(partition.names, dtype=object), n_groups)]

    lookup = dict(partition.groups)
    flat = [name for merged in plan for name in merged]
    if sorted(flat) != sorted(lookup):
        raise PartitionConfigError(f"merge plan {plan} must use every group of {partition.names} exactly once")
    groups = [("+".join(merged), sorted(i for name in merged for i in lookup[name])) for merged in plan]
    return ModalityPartition(groups=groups, total_dims=partition.total_dims,
                             min_groups=min(partition.min_groups, len(groups)))


def select_modalities(partition: ModalityPartition, names: Sequence[str]) -> Tuple[ModalityPartition, np.ndarray]:
    """
    Restricts a partition to the named groups. Returns the sub-partition over
    the re-indexed columns and the original column indices to slice with.
    """
    lookup = dict(partition.groups)
    missing = [n for n in names if n not in lookup]
    if missing or not names:
        raise PartitionConfigError(f"unknown modalities {missing} (available: {partition.names})")
    columns = np.array(sorted(i for n in names for i in lookup[n]), dtype=np.int64)
    remap = {int(c): j for j, c in enumerate(columns)}
    groups = [(n, [remap[i] for i in lookup[n]]) for n in names]
    return ModalityPartition(groups=groups, total_dims=len(columns), min_groups=1), columns


def parse_groups_flag(value: str) -> Tuple[str, Optional[int]]:
    """'natural' → ('natural', None); 'random:K' → ('random', K)."""
    value = (value or "natural").strip().lower()
    if value == "natural":
        return "natural", None
    kind, _, count = value.partition(":")
    if kind == "random" and count.isdigit() and int(count) >= 2:
        return "random", int(count)
    raise PartitionConfigError(f"--groups must be 'natural' or 'random:K' with K >= 2, got '{value}'")


def build_partition(feature_names: Sequence[str], groups: str = "natural",
                    group_map: Optional[Mapping[str, str]] = None, seed: int = 0) -> ModalityPartition:
    kind, count = parse_groups_flag(groups)
    if kind == "random":
        return random_partition(len(feature_names), count, seed)
    if group_map is None:
        raise PartitionConfigError("a natural partition needs a modality map")
    return natural_partition(feature_names, group_map)


def describe(partition: ModalityPartition) -> Dict[str, int]:
    return {name: len(idx) for name, idx in partition.groups}
