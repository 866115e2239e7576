"""
Dense building blocks with exact analytic gradients.

Conventions:
  - Matrices are float64, one row per sample.
  - `backward(d_out)` receives the gradient of a SUM-reduced loss w.r.t. the
    layer output and returns the gradient w.r.t. the layer input; parameter
    gradients are stored in `self.grads` (overwritten, never accumulated).
  - `forward` caches what `backward` needs; calling backward first is a
    StateError.
"""
import logging
from typing import Dict, Optional

import numpy as np

from src.utils.constants import BN_EPSILON, BN_MOMENTUM, LEAKY_RELU_SLOPE
from src.utils.errors import BatchTooSmallError, DimensionError, StateError

logger = logging.getLogger(__name__)


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Coerces input to a 2-D float64 array with at least one row and column."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    return arr


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Layer:
    """Base class. Layers without parameters leave params/grads empty."""

    def __init__(self, name: str):
        self.name = name
        self.training = True
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    @property
    def in_dim(self) -> Optional[int]:
        return None

    @property
    def out_dim(self) -> Optional[int]:
        return None

    def forward(self, X, update_stats: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, d_out) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for key, value in self.params.items():
            self.grads[key] = np.zeros_like(value)

    def train(self) -> None:
        self.training = True

    def eval(self) -> None:
        self.training = False

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name})"


class DenseLayer(Layer):
    """out[b] = W · x[b] + bias, with W stored as [out × in]."""

    def __init__(self, in_dim: int, out_dim: int, rng: Optional[np.random.Generator] = None,
                 name: str = "dense"):
        super().__init__(name)
        if in_dim < 1 or out_dim < 1:
            raise DimensionError(f"{name}: dims must be >= 1 (in={in_dim}, out={out_dim})")
        rng = rng if rng is not None else np.random.default_rng()
        self.params["weights"] = glorot_uniform(in_dim, out_dim, rng)
        self.params["bias"] = np.zeros(out_dim)
        self.zero_grad()
        self._input: Optional[np.ndarray] = None

    @property
    def in_dim(self) -> int:
        return self.params["weights"].shape[1]

    @property
    def out_dim(self) -> int:
        return self.params["weights"].shape[0]

    def forward(self, X, update_stats: bool = True) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.in_dim:
            raise DimensionError(f"{self.name}: expected {self.in_dim} input columns, got {X.shape[1]}")
        self._input = X
        return X @ self.params["weights"].T + self.params["bias"]

    def backward(self, d_out) -> np.ndarray:
        if self._input is None:
            raise StateError(f"{self.name}: backward called before forward")
        d_out = as_matrix(d_out, "d_out")
        if d_out.shape != (self._input.shape[0], self.out_dim):
            raise DimensionError(
                f"{self.name}: upstream gradient shape {d_out.shape} does not match "
                f"({self._input.shape[0]}, {self.out_dim})"
            )
        self.grads["weights"] = d_out.T @ self._input
        self.grads["bias"] = d_out.sum(axis=0)
        return d_out @ self.params["weights"]


def leaky_relu_forward(X, slope: float = LEAKY_RELU_SLOPE) -> np.ndarray:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"Leaky ReLU slope must be in (0, 1), got {slope}")
    X = np.asarray(X, dtype=np.float64)
    return np.where(X >= 0, X, slope * X)


class LeakyReLU(Layer):
    def __init__(self, slope: float = LEAKY_RELU_SLOPE, name: str = "act"):
        super().__init__(name)
        if not 0.0 < slope < 1.0:
            raise ValueError(f"Leaky ReLU slope must be in (0, 1), got {slope}")
        self.slope = slope
        self._input: Optional[np.ndarray] = None

    def forward(self, X, update_stats: bool = True) -> np.ndarray:
        X = as_matrix(X)
        self._input = X
        return leaky_relu_forward(X, self.slope)

    def backward(self, d_out) -> np.ndarray:
        if self._input is None:
            raise StateError(f"{self.name}: backward called before forward")
        d_out = as_matrix(d_out, "d_out")
        return d_out * np.where(self._input >= 0, 1.0, self.slope)


class BatchNormLayer(Layer):
    """
    Per-column batch normalisation.

    Train mode normalises with the biased batch variance and updates the
    running statistics by exponential moving average (the running variance
    uses the unbiased estimate). Inference mode uses the running statistics
    and therefore accepts single-row batches.
    """

    def __init__(self, dim: int, eps: float = BN_EPSILON, momentum: float = BN_MOMENTUM,
                 name: str = "bn"):
        super().__init__(name)
        if dim < 1:
            raise DimensionError(f"{name}: dim must be >= 1")
        if eps <= 0:
            raise ValueError("BatchNorm epsilon must be positive")
        if not 0.0 < momentum < 1.0:
            raise ValueError("BatchNorm momentum must be in (0, 1)")
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(dim)
        self.params["beta"] = np.zeros(dim)
        self.buffers["running_mean"] = np.zeros(dim)
        self.buffers["running_var"] = np.ones(dim)
        self.zero_grad()
        self._cache = None

    @property
    def in_dim(self) -> int:
        return self.params["gamma"].shape[0]

    @property
    def out_dim(self) -> int:
        return self.in_dim

    def forward(self, X, update_stats: bool = True) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.in_dim:
            raise DimensionError(f"{self.name}: expected {self.in_dim} columns, got {X.shape[1]}")
        gamma, beta = self.params["gamma"], self.params["beta"]

        if self.training:
            batch = X.shape[0]
            if batch < 2:
                raise BatchTooSmallError(f"{self.name}: train-mode batch norm needs B >= 2, got {batch}")
            mean = X.mean(axis=0)
            var = X.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            x_hat = (X - mean) * inv_std
            if update_stats:
                m = self.momentum
                unbiased = var * batch / (batch - 1)
                self.buffers["running_mean"] = (1 - m) * self.buffers["running_mean"] + m * mean
                self.buffers["running_var"] = (1 - m) * self.buffers["running_var"] + m * unbiased
            self._cache = ("train", x_hat, inv_std)
        else:
            inv_std = 1.0 / np.sqrt(self.buffers["running_var"] + self.eps)
            x_hat = (X - self.buffers["running_mean"]) * inv_std
            self._cache = ("eval", x_hat, inv_std)

        return gamma * x_hat + beta

    def backward(self, d_out) -> np.ndarray:
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        mode, x_hat, inv_std = self._cache
        d_out = as_matrix(d_out, "d_out")
        if d_out.shape != x_hat.shape:
            raise DimensionError(f"{self.name}: upstream gradient shape {d_out.shape} != {x_hat.shape}")

        self.grads["gamma"] = (d_out * x_hat).sum(axis=0)
        self.grads["beta"] = d_out.sum(axis=0)
        d_xhat = d_out * self.params["gamma"]

        if mode == "eval":
            return d_xhat * inv_std

        batch = x_hat.shape[0]
        return (inv_std / batch) * (
            batch * d_xhat
            - d_xhat.sum(axis=0)
            - x_hat * (d_xhat * x_hat).sum(axis=0)
        )
