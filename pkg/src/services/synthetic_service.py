"""
Synthetic multi-modal dataset with a known generative model.

    y ~ Bernoulli(balance)
    s = (2y - 1) · strength · u + z,       z ~ N(0, I_k), |u| = 1
    x_m = [A_m s ; 0] + B_m h_m + noise_m · e,   per modality m

Every modality carries a linear view of the same latent s, padded with
`distractor_dims` pure-noise columns; `nuisance_rank > 0` adds a
modality-private low-rank Gaussian factor h_m. Given y, x is Gaussian with a
shared covariance, so the Bayes rule is linear and its accuracy is known.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.stats import norm

from src.services.dataset_service import Dataset
from src.utils.constants import BAYES_MC_SAMPLES

logger = logging.getLogger(__name__)

CLASS_NAMES = ["class_0", "class_1"]


class SyntheticSpec(BaseModel):
    n_modalities: int = Field(3, ge=1)
    # signal-carrying columns per modality (distractors come on top)
    modality_dims: List[int] = Field(default_factory=lambda: [8, 8, 8])
    signal_dim: int = Field(2, ge=1)
    strength: float = Field(2.0, ge=0.0)
    # one scale for every modality or one per modality
    noise_scale: Union[float, List[float]] = 1.0
    distractor_dims: int = Field(2, ge=0)
    nuisance_rank: int = Field(0, ge=0)
    nuisance_strength: float = Field(1.0, ge=0.0)
    balance: float = Field(0.5, gt=0.0, lt=1.0)
    n_samples: int = Field(600, ge=2)
    missing_rate: float = Field(0.0, ge=0.0, lt=1.0)

    @field_validator("modality_dims")
    @classmethod
    def _dims_positive(cls, v):
        if any(d < 1 for d in v):
            raise ValueError(f"every modality needs at least one signal column, got {v}")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.modality_dims) == 1 and self.n_modalities > 1:
            self.modality_dims = self.modality_dims * self.n_modalities
        if len(self.modality_dims) != self.n_modalities:
            raise ValueError(f"modality_dims has {len(self.modality_dims)} entries "
                             f"for {self.n_modalities} modalities")
        scales = self.noise_scales
        if len(scales) != self.n_modalities:
            raise ValueError(f"noise_scale has {len(scales)} entries for {self.n_modalities} modalities")
        if any(s <= 0 for s in scales):
            raise ValueError(f"noise scales must be > 0, got {scales}")
        return self

    @property
    def noise_scales(self) -> List[float]:
        if isinstance(self.noise_scale, list):
            return [float(s) for s in self.noise_scale]
        return [float(self.noise_scale)] * self.n_modalities

    @property
    def block_widths(self) -> List[int]:
        return [d + self.distractor_dims for d in self.modality_dims]

    @property
    def total_dims(self) -> int:
        return sum(self.block_widths)

    def feature_names(self) -> List[str]:
        names: List[str] = []
        for m, d in enumerate(self.modality_dims):
            names += [f"m{m}_sig{j}" for j in range(d)]
            names += [f"m{m}_dis{j}" for j in range(self.distractor_dims)]
        return names

    def group_map(self) -> Dict[str, str]:
        """feature_name → group_name, the natural division of a synthetic dataset."""
        return {name: f"modality_{name.split('_', 1)[0][1:]}" for name in self.feature_names()}


@dataclass
class SyntheticTruth:
    """Generative parameters kept alongside a synthetic dataset."""

    spec: SyntheticSpec
    direction: np.ndarray        # u, shape [k]
    loadings: np.ndarray         # stacked [A_m ; 0], shape [D × k]
    nuisance: List[np.ndarray]   # B_m, shape [width_m × rank]
    noise_std: np.ndarray        # per-column noise, shape [D]

    def class_means(self) -> np.ndarray:
        """Latent means for class 0 and class 1, shape [2 × k]."""
        mu = self.spec.strength * self.direction
        return np.stack([-mu, mu])

    def covariance(self) -> np.ndarray:
        """Cov(x | y), identical for both classes."""
        cov = self.loadings @ self.loadings.T + np.diag(self.noise_std ** 2)
        offset = 0
        for width, b in zip(self.spec.block_widths, self.nuisance):
            if b.size:
                cov[offset:offset + width, offset:offset + width] += b @ b.T
            offset += width
        return cov

    def _discriminant(self):
        means = self.class_means() @ self.loadings.T  # [2 × D]
        diff = means[1] - means[0]
        w = np.linalg.solve(self.covariance(), diff)
        b = -0.5 * float((means[1] + means[0]) @ w) + np.log(self.spec.balance / (1 - self.spec.balance))
        return w, b, float(diff @ w)

    def bayes_predict(self, X) -> np.ndarray:
        w, b, _ = self._discriminant()
        return (np.asarray(X, dtype=np.float64) @ w + b > 0).astype(np.int64)

    def analytic_accuracy(self) -> Optional[float]:
        """Φ(Δ/2) with Δ the Mahalanobis distance between class means; balanced classes only."""
        if abs(self.spec.balance - 0.5) > 1e-12:
            return None
        _, _, delta2 = self._discriminant()
        return float(norm.cdf(np.sqrt(max(delta2, 0.0)) / 2.0))

    def monte_carlo_ceiling(self, n_samples: int = BAYES_MC_SAMPLES, seed: int = 0) -> float:
        """Accuracy of the true Bayes rule on fresh samples from the same generator."""
        rng = np.random.default_rng([seed, 0xBA7E5])
        X, y = _sample(self, n_samples, rng)
        return float(np.mean(self.bayes_predict(X) == y))


def _build_truth(spec: SyntheticSpec, rng: np.random.Generator) -> SyntheticTruth:
    k = spec.signal_dim
    u = rng.standard_normal(k)
    u /= np.linalg.norm(u)

    blocks = []
    nuisance = []
    noise_std = []
    for d, width, scale in zip(spec.modality_dims, spec.block_widths, spec.noise_scales):
        a = rng.standard_normal((d, k)) / np.sqrt(k)
        blocks.append(np.vstack([a, np.zeros((spec.distractor_dims, k))]))
        nuisance.append(spec.nuisance_strength * rng.standard_normal((width, spec.nuisance_rank)))
        noise_std.append(np.full(width, scale))
    return SyntheticTruth(spec=spec, direction=u, loadings=np.vstack(blocks),
                          nuisance=nuisance, noise_std=np.concatenate(noise_std))


def _sample(truth: SyntheticTruth, n: int, rng: np.random.Generator):
    spec = truth.spec
    y = (rng.random(n) < spec.balance).astype(np.int64)
    latent = truth.class_means()[y] + rng.standard_normal((n, spec.signal_dim))
    X = latent @ truth.loadings.T
    X += rng.standard_normal((n, spec.total_dims)) * truth.noise_std
    offset = 0
    for width, b in zip(spec.block_widths, truth.nuisance):
        if b.size:
            X[:, offset:offset + width] += rng.standard_normal((n, b.shape[1])) @ b.T
        offset += width
    return X, y


def generate_synthetic(spec: SyntheticSpec, seed: int = 0) -> Dataset:
    """Draws `spec.n_samples` records; the generator parameters ride along in `dataset.truth`."""
    rng = np.random.default_rng(seed)
    truth = _build_truth(spec, rng)
    X, y = _sample(truth, spec.n_samples, rng)
    if spec.missing_rate > 0:
        X[rng.random(X.shape) < spec.missing_rate] = np.nan

    width = len(str(spec.n_samples - 1))
    dataset = Dataset(
        ids=[f"s{i:0{width}d}" for i in range(spec.n_samples)],
        X=X,
        y=y,
        feature_names=spec.feature_names(),
        class_names=list(CLASS_NAMES),
        truth=truth,
    )
    logger.info(f"🧪 Synthetic dataset: {spec.n_samples} samples, {spec.n_modalities} modalities, "
                f"{spec.total_dims} features, balance={spec.balance}")
    return dataset


def bayes_ceiling(dataset: Dataset, n_samples: int = BAYES_MC_SAMPLES, seed: int = 0) -> Optional[float]:
    """Monte-Carlo Bayes accuracy for a synthetic dataset; None for real data."""
    if dataset.truth is None:
        return None
    return dataset.truth.monte_carlo_ceiling(n_samples, seed)
