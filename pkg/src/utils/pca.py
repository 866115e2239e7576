"""
Top-2 principal components by power iteration with deflation.
"""
import logging
from dataclasses import dataclass

import numpy as np

from src.utils.constants import PCA_MAX_ITER, PCA_TOL
from src.utils.errors import DegenerateInputError, DimensionError

logger = logging.getLogger(__name__)

_START_SEED = 0


@dataclass
class PCAResult:
    components: np.ndarray      # [2 × r], orthonormal rows
    coords: np.ndarray          # [N × 2]
    eigenvalues: np.ndarray     # [2], non-increasing
    explained_fraction: float   # (λ1 + λ2) / trace
    total_variance: float

    @property
    def explained_ratios(self) -> np.ndarray:
        return self.eigenvalues / self.total_variance


def _fix_sign(v: np.ndarray) -> np.ndarray:
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def power_iteration(C: np.ndarray, tol: float = PCA_TOL, max_iter: int = PCA_MAX_ITER):
    """
    Dominant eigenpair of a symmetric PSD matrix.

    Starts from a fixed-seed Gaussian vector, so the start has a component
    along every eigenvector.
    """
    if not np.any(C):
        return 0.0, np.zeros(C.shape[0])
    v = np.random.default_rng(_START_SEED).standard_normal(C.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = C @ v
        w_norm = np.linalg.norm(w)
        if w_norm == 0.0:
            return 0.0, v
        w /= w_norm
        if w @ v < 0:
            w = -w
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    else:
        logger.warning(f"⚠️ Power iteration hit {max_iter} iterations without reaching tol={tol}")
    return float(v @ C @ v), v


def pca_top2(X, tol: float = PCA_TOL, max_iter: int = PCA_MAX_ITER) -> PCAResult:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3 or X.shape[1] < 2:
        raise DimensionError(f"pca_top2 needs N >= 3 rows and r >= 2 columns, got {X.shape}")
    Xc = X - X.mean(axis=0)
    scale = max(1.0, float(np.max(np.abs(X))))
    if float(np.max(np.abs(Xc))) <= 1e-12 * scale:
        raise DegenerateInputError("all rows are identical; no principal direction exists")

    C = Xc.T @ Xc / (X.shape[0] - 1)
    trace = float(np.trace(C))

    lam1, v1 = power_iteration(C, tol, max_iter)
    v1 = _fix_sign(v1)
    deflated = C - lam1 * np.outer(v1, v1)
    floor = tol * max(lam1, 1.0)
    lam2, v2 = 0.0, None
    # a deflated matrix of pure round-off has no direction to converge to
    if np.linalg.norm(deflated) > floor:
        lam2, v2 = power_iteration(deflated, tol, max_iter)

    if v2 is None or lam2 <= floor:
        # rank 1: any unit vector orthogonal to v1 will do; take the least aligned axis.
        e = np.zeros_like(v1)
        e[np.argmin(np.abs(v1))] = 1.0
        v2 = e - (e @ v1) * v1
        v2 /= np.linalg.norm(v2)
        lam2 = max(float(v2 @ C @ v2), 0.0)
    else:
        # re-orthogonalise against v1 to absorb deflation round-off
        v2 = v2 - (v2 @ v1) * v1
        v2 /= np.linalg.norm(v2)
    v2 = _fix_sign(v2)

    components = np.vstack([v1, v2])
    eigenvalues = np.array([lam1, lam2])
    fraction = float(np.clip(eigenvalues.sum() / trace, 0.0, 1.0)) if trace > 0 else 0.0
    return PCAResult(components=components, coords=Xc @ components.T,
                     eigenvalues=eigenvalues, explained_fraction=fraction, total_variance=trace)
