"""
Adam with bias correction.

`adam_step` is the pure update on parallel lists of arrays; `AdamOptimizer`
binds one AdamState to a parameter group (a list of layers) so the trainer
can keep the three optimizers of the consensus schedule apart.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from src.engine.layers import Layer
from src.utils.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, ADAM_LR
from src.utils.errors import DimensionError, OptimizerError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    step_count: int = 0
    first_moment: List[np.ndarray] = field(default_factory=list)
    second_moment: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
        return state


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """Updates `params` in place and returns (params, state)."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    if len(state.first_moment) != len(params):
        raise DimensionError("Adam state was built for a different parameter list")

    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or state.first_moment[i].shape != p.shape:
            raise DimensionError(f"parameter {i}: shape {p.shape} vs gradient {np.shape(g)}")
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient for parameter {i}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.first_moment[i] = b1 * state.first_moment[i] + (1 - b1) * g
        v = state.second_moment[i] = b2 * state.second_moment[i] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


class AdamOptimizer:
    """One Adam state over every parameter of a group of layers."""

    def __init__(self, layers: Sequence[Layer], lr: float = ADAM_LR, beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2, epsilon: float = ADAM_EPSILON, name: str = "adam"):
        self.name = name
        self._slots = [(layer, key) for layer in layers for key in sorted(layer.params)]
        self.state = AdamState.for_params(
            [layer.params[key] for layer, key in self._slots],
            lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon,
        )

    @property
    def step_count(self) -> int:
        return self.state.step_count

    def step(self, ascend: bool = False) -> None:
        """Descends the stored gradients; `ascend=True` flips their sign (gradient reversal)."""
        params = [layer.params[key] for layer, key in self._slots]
        grads = [layer.grads[key] for layer, key in self._slots]
        if ascend:
            grads = [-g for g in grads]
        try:
            adam_step(params, grads, self.state)
        except OptimizerError as e:
            raise OptimizerError(f"{self.name}: {e}") from e
