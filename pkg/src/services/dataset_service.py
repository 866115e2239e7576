"""
Tabular ingestion and preprocessing.

Pipeline order: load → impute (KNN) → split (60/20/20, stratified) →
fit z-scores on train → apply to every split.
"""
import csv
import hashlib
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.impute import KNNImputer
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

from src.services.config_factory import DataConfig
from src.utils.constants import KNN_NEIGHBORS, MIN_CLASS_SIZE_FOR_STRATIFY, SPLIT_RATIOS
from src.utils.errors import DataParseError, ImputationError, LabelError

logger = logging.getLogger(__name__)


@dataclass
class FeatureRecord:
    id: str
    label: int
    features: np.ndarray
    missing: np.ndarray


@dataclass
class Dataset:
    ids: List[str]
    X: np.ndarray                 # [N × D], NaN = missing
    y: np.ndarray                 # [N] class indices
    feature_names: List[str]
    class_names: List[str]
    truth: Optional[Any] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.ids = [str(i) for i in self.ids]
        if self.X.ndim != 2 or self.X.shape[0] == 0:
            raise ValueError(f"dataset needs a non-empty 2-D feature matrix, got {self.X.shape}")
        if len(self.ids) != self.X.shape[0] or self.y.shape != (self.X.shape[0],):
            raise ValueError("ids, labels and feature rows must have the same length")
        if len(self.feature_names) != self.X.shape[1]:
            raise ValueError(f"{len(self.feature_names)} feature names for {self.X.shape[1]} columns")
        if self.y.min() < 0 or self.y.max() >= len(self.class_names):
            raise LabelError(f"labels must be in [0, {len(self.class_names)})")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.X)

    @property
    def records(self) -> List[FeatureRecord]:
        mask = self.missing_mask
        return [FeatureRecord(id=i, label=int(l), features=x, missing=mk)
                for i, l, x, mk in zip(self.ids, self.y, self.X, mask)]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(ids=[self.ids[i] for i in idx], X=self.X[idx].copy(), y=self.y[idx].copy(),
                       feature_names=list(self.feature_names), class_names=list(self.class_names),
                       truth=self.truth)

    def with_features(self, X: np.ndarray) -> "Dataset":
        return Dataset(ids=list(self.ids), X=X, y=self.y.copy(), feature_names=list(self.feature_names),
                       class_names=list(self.class_names), truth=self.truth)

    def select_columns(self, columns: Sequence[int]) -> "Dataset":
        cols = np.asarray(columns, dtype=np.int64)
        return Dataset(ids=list(self.ids), X=self.X[:, cols].copy(), y=self.y.copy(),
                       feature_names=[self.feature_names[c] for c in cols],
                       class_names=list(self.class_names), truth=self.truth)

    def fingerprint(self) -> str:
        """Hash of ids, labels and feature values (NaN-safe)."""
        h = hashlib.sha256()
        h.update("\x1f".join(self.ids).encode("utf-8"))
        h.update(self.y.tobytes())
        h.update(np.nan_to_num(self.X, nan=np.inf).tobytes())
        return h.hexdigest()[:16]


# ─────────────────────────────────────────────────────────────────────────────
# CSV I/O
# ─────────────────────────────────────────────────────────────────────────────

_PANDAS_LINE = re.compile(r"line (\d+)")


def _ragged_row(path: str, width: int) -> Optional[Tuple[int, int]]:
    """(line number, field count) of the first non-blank record whose width differs from the header."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        for fields in reader:
            if fields and len(fields) != width:
                return reader.line_num, len(fields)
    return None


def _resolve_labels(raw: List[str], class_names: Optional[List[str]], path: str) -> Tuple[np.ndarray, List[str]]:
    if class_names is not None:
        lookup = {name: i for i, name in enumerate(class_names)}
        y = []
        for row, value in enumerate(raw, start=2):
            if value in lookup:
                y.append(lookup[value])
            elif value.isdigit() and int(value) < len(class_names):
                y.append(int(value))
            else:
                raise DataParseError(f"unknown label '{value}' (known: {class_names})", row=row, path=path)
        return np.asarray(y, dtype=np.int64), list(class_names)

    for row, value in enumerate(raw, start=2):
        if value == "":
            raise DataParseError("empty label", row=row, path=path)
    if all(v.isdigit() for v in raw):
        y = np.asarray([int(v) for v in raw], dtype=np.int64)
        return y, [str(i) for i in range(int(y.max()) + 1)]
    names = sorted(set(raw))
    lookup = {name: i for i, name in enumerate(names)}
    return np.asarray([lookup[v] for v in raw], dtype=np.int64), names


def load_csv(path: str, class_names: Optional[List[str]] = None) -> Dataset:
    """
    Reads `id,label,<features...>`. Empty cells are missing. Labels are
    class names (or indices); with `class_names` given, any other label is
    an error.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        raise DataParseError(f"wrong column count: {e}", row=int(match.group(1)) if match else None,
                             path=str(path)) from e
    except pd.errors.EmptyDataError as e:
        raise DataParseError("file is empty", path=str(path)) from e
    except OSError as e:
        raise DataParseError(f"cannot read file: {e}", path=str(path)) from e

    columns = list(df.columns)
    if len(columns) < 3 or columns[0] != "id" or columns[1] != "label":
        raise DataParseError(f"header must be id,label,<features...>, got {columns[:3]}", row=1, path=str(path))
    if df.empty:
        raise DataParseError("no data rows", path=str(path))

    # pandas pads short rows silently, so field counts are checked on the raw records
    ragged = _ragged_row(path, len(columns))
    if ragged is not None:
        row, width = ragged
        raise DataParseError(f"wrong column count: {width} fields, expected {len(columns)}", row=row, path=str(path))

    feature_names = columns[2:]
    raw = df[feature_names].apply(lambda col: col.str.strip())
    values = raw.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    empty = (raw == "").to_numpy()
    bad = ~empty & ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataParseError(f"non-numeric value '{raw.iat[r, c]}' in column '{feature_names[c]}'",
                             row=int(r) + 2, path=str(path))
    values[empty] = np.nan

    y, names = _resolve_labels(df["label"].str.strip().tolist(), class_names, str(path))
    dataset = Dataset(ids=df["id"].tolist(), X=values, y=y, feature_names=feature_names, class_names=names)
    logger.info(f"📥 Loaded {path}: {dataset.n_samples} records, {dataset.n_features} features, "
                f"{int(empty.sum())} missing cells")
    return dataset


def write_csv(dataset: Dataset, path: str) -> None:
    df = pd.DataFrame(dataset.X, columns=dataset.feature_names)
    df.insert(0, "label", [dataset.class_names[i] for i in dataset.y])
    df.insert(0, "id", dataset.ids)
    try:
        df.to_csv(path, index=False, na_rep="", lineterminator="\n")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    logger.info(f"💾 Wrote {dataset.n_samples} records to {path}")


# ─────────────────────────────────────────────────────────────────────────────
# IMPUTATION / SCALING
# ─────────────────────────────────────────────────────────────────────────────

def knn_impute(dataset: Dataset, k: int = KNN_NEIGHBORS) -> Dataset:
    """
    Fills each missing cell with the mean of that feature over the k nearest
    records observing it. Distances use the mutually observed features only,
    scaled by D / n_shared (sklearn's nan_euclidean), which ranks neighbours
    exactly like the shared-dimension-normalised Euclidean distance.
    """
    if k < 1:
        raise ImputationError(f"k must be >= 1, got {k}")
    mask = dataset.missing_mask
    if not mask.any():
        return dataset

    observed = (~mask).sum(axis=0)
    empty = [dataset.feature_names[j] for j in np.flatnonzero(observed == 0)]
    if empty:
        raise ImputationError(f"features missing in every record: {empty}")
    thin = [dataset.feature_names[j] for j in np.flatnonzero(observed < k)]
    if thin:
        logger.warning(f"⚠️ Fewer than k={k} donors for {thin}; using every available donor")

    imputer = KNNImputer(n_neighbors=k, metric="nan_euclidean", weights="uniform")
    filled = imputer.fit_transform(dataset.X)
    filled[~mask] = dataset.X[~mask]
    logger.debug(f"KNN-imputed {int(mask.sum())} cells (k={k})")
    return dataset.with_features(filled)


@dataclass
class ZScoreScaler:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.shape[0]:
            raise ValueError(f"scaler fitted on {self.mean.shape[0]} features, got {X.shape[-1]}")
        return (X - self.mean) / self.scale

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, List[float]]) -> "ZScoreScaler":
        return cls(mean=np.asarray(data["mean"], dtype=np.float64),
                   scale=np.asarray(data["scale"], dtype=np.float64))


def zscore_fit(dataset: Dataset) -> ZScoreScaler:
    """Population mean/std per feature; zero-std features keep scale 1 and so map to 0."""
    if dataset.missing_mask.any():
        raise ValueError("fit the scaler on imputed data")
    sk = StandardScaler().fit(dataset.X)
    return ZScoreScaler(mean=sk.mean_.copy(), scale=sk.scale_.copy())


def zscore_apply(scaler: ZScoreScaler, dataset: Dataset) -> Dataset:
    return dataset.with_features(scaler.transform(dataset.X))


# ─────────────────────────────────────────────────────────────────────────────
# SPLITTING
# ─────────────────────────────────────────────────────────────────────────────

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def split_sizes(n: int, ratios: Sequence[float] = SPLIT_RATIOS) -> Tuple[int, int, int]:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n_val = _round_half_up(n * ratios[1])
    n_test = _round_half_up(n * ratios[2])
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ValueError(f"{n} samples leave no training data with ratios {ratios}")
    return n_train, n_val, n_test


def split_indices(y: np.ndarray, ratios: Sequence[float] = SPLIT_RATIOS, seed: int = 0,
                  stratify: bool = True) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(y)
    n_train, n_val, n_test = split_sizes(n, ratios)
    seed = int(seed) % 2 ** 32

    if stratify:
        counts = np.bincount(y)
        small = [c for c, cnt in enumerate(counts) if 0 < cnt < MIN_CLASS_SIZE_FOR_STRATIFY]
        if small:
            logger.warning(f"⚠️ Classes {small} have fewer than {MIN_CLASS_SIZE_FOR_STRATIFY} samples; "
                           f"falling back to an unstratified split")
            stratify = False

    def _cut(idx: np.ndarray, size: int, rs: int):
        if size == 0:
            return idx, idx[:0]
        strat = y[idx] if stratify else None
        try:
            return train_test_split(idx, test_size=size, random_state=rs, stratify=strat)
        except ValueError as e:
            if strat is None:
                raise
            logger.warning(f"⚠️ Stratified split failed ({e}); using an unstratified split")
            return train_test_split(idx, test_size=size, random_state=rs, stratify=None)

    rest, test = _cut(np.arange(n), n_test, seed)
    train, val = _cut(rest, n_val, (seed + 1) % 2 ** 32)
    return np.sort(train), np.sort(val), np.sort(test)


def split(dataset: Dataset, ratios: Sequence[float] = SPLIT_RATIOS, seed: int = 0,
          stratify: bool = True) -> Tuple[Dataset, Dataset, Dataset]:
    train, val, test = split_indices(dataset.y, ratios, seed, stratify)
    return dataset.subset(train), dataset.subset(val), dataset.subset(test)


@dataclass
class PreparedData:
    train: Dataset
    val: Dataset
    test: Dataset
    scaler: ZScoreScaler

    def split_fingerprint(self) -> str:
        h = hashlib.sha256()
        for part in (self.train, self.val, self.test):
            h.update(part.fingerprint().encode("ascii"))
        return h.hexdigest()[:16]


def prepare_splits(dataset: Dataset, config: Optional[DataConfig] = None, seed: int = 0) -> PreparedData:
    """Runs the full preprocessing pipeline for one trial."""
    config = config or DataConfig()
    complete = knn_impute(dataset, config.knn_k)
    train, val, test = split(complete, config.split_ratios, seed, config.stratify)
    scaler = zscore_fit(complete if config.scaler_fit == "all" else train)
    return PreparedData(
        train=zscore_apply(scaler, train),
        val=zscore_apply(scaler, val),
        test=zscore_apply(scaler, test),
        scaler=scaler,
    )
