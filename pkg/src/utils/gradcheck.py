"""
Central finite differences for checking analytic gradients.
"""
from typing import Callable, Dict, Mapping

import numpy as np

FD_STEP = 1e-5
# Below this gradient norm errors are judged in absolute terms (e.g. a dense bias
# feeding train-mode batch norm has an exactly zero gradient).
ABS_FLOOR = 1e-6


def numeric_gradient(loss_fn: Callable[[], float], array: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Perturbs `array` in place, one entry at a time; `loss_fn` must read it."""
    grad = np.zeros_like(array)
    for idx in np.ndindex(*array.shape):
        original = array[idx]
        array[idx] = original + h
        plus = loss_fn()
        array[idx] = original - h
        minus = loss_fn()
        array[idx] = original
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||, ABS_FLOOR)."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), ABS_FLOOR)
    return float(np.linalg.norm(analytic - numeric) / denom)


def check_gradients(loss_fn: Callable[[], float], arrays: Mapping[str, np.ndarray],
                    analytic: Mapping[str, np.ndarray], h: float = FD_STEP) -> Dict[str, float]:
    """Relative error per named array between `analytic` and finite differences of `loss_fn`."""
    return {name: relative_error(analytic[name], numeric_gradient(loss_fn, arrays[name], h))
            for name in analytic}
