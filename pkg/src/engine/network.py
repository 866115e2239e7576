import logging
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.engine.layers import BatchNormLayer, DenseLayer, Layer, LeakyReLU
from src.utils.constants import BN_EPSILON, BN_MOMENTUM, LEAKY_RELU_SLOPE
from src.utils.errors import DimensionError

logger = logging.getLogger(__name__)


class Sequential:
    """Ordered composition of layers; backward runs the layers in reverse."""

    def __init__(self, layers: Sequence[Layer], name: str = "net"):
        self.name = name
        self.layers: List[Layer] = list(layers)
        if not self.layers:
            raise DimensionError(f"{name}: empty layer list")
        self._check_chain()

    def _check_chain(self) -> None:
        width: Optional[int] = None
        for layer in self.layers:
            if layer.in_dim is not None and width is not None and layer.in_dim != width:
                raise DimensionError(
                    f"{self.name}: layer {layer.name} expects {layer.in_dim} inputs "
                    f"but the previous layer produces {width}"
                )
            if layer.out_dim is not None:
                width = layer.out_dim

    @property
    def in_dim(self) -> int:
        return next(l.in_dim for l in self.layers if l.in_dim is not None)

    @property
    def out_dim(self) -> int:
        return next(l.out_dim for l in reversed(self.layers) if l.out_dim is not None)

    @property
    def training(self) -> bool:
        return self.layers[0].training

    def forward(self, X, update_stats: bool = True) -> np.ndarray:
        out = X
        for layer in self.layers:
            out = layer.forward(out, update_stats=update_stats)
        return out

    def backward(self, d_out) -> np.ndarray:
        grad = d_out
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def train(self) -> None:
        for layer in self.layers:
            layer.train()

    def eval(self) -> None:
        for layer in self.layers:
            layer.eval()

    def named_arrays(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        """Parameters and buffers keyed as `<prefix>.<layer>.<name>`."""
        base = f"{prefix}." if prefix else ""
        for layer in self.layers:
            for key in sorted(layer.params):
                yield f"{base}{layer.name}.{key}", layer.params[key]
            for key in sorted(layer.buffers):
                yield f"{base}{layer.name}.{key}", layer.buffers[key]

    def named_grads(self, prefix: str = "") -> Dict[str, np.ndarray]:
        base = f"{prefix}." if prefix else ""
        return {
            f"{base}{layer.name}.{key}": layer.grads[key].copy()
            for layer in self.layers
            for key in sorted(layer.params)
        }

    def load_arrays(self, arrays: Dict[str, np.ndarray], prefix: str = "") -> None:
        base = f"{prefix}." if prefix else ""
        for layer in self.layers:
            for store in (layer.params, layer.buffers):
                for key in store:
                    name = f"{base}{layer.name}.{key}"
                    if name not in arrays:
                        raise KeyError(f"missing array '{name}'")
                    value = np.asarray(arrays[name], dtype=np.float64)
                    if value.shape != store[key].shape:
                        raise DimensionError(f"{name}: shape {value.shape} != {store[key].shape}")
                    store[key][...] = value

    def parameter_count(self) -> int:
        return sum(p.size for layer in self.layers for p in layer.params.values())

    def __repr__(self) -> str:
        return f"Sequential({self.name}: {', '.join(map(repr, self.layers))})"


def build_mlp(in_dim: int, hidden_sizes: Sequence[int], out_dim: int,
              rng: np.random.Generator, name: str = "mlp",
              leaky_slope: float = LEAKY_RELU_SLOPE, bn_eps: float = BN_EPSILON,
              bn_momentum: float = BN_MOMENTUM) -> Sequential:
    """dense → BN → LeakyReLU for every hidden size, then a final dense layer."""
    layers: List[Layer] = []
    width = in_dim
    for i, size in enumerate(hidden_sizes, start=1):
        layers.append(DenseLayer(width, size, rng, name=f"dense{i}"))
        layers.append(BatchNormLayer(size, eps=bn_eps, momentum=bn_momentum, name=f"bn{i}"))
        layers.append(LeakyReLU(leaky_slope, name=f"act{i}"))
        width = size
    layers.append(DenseLayer(width, out_dim, rng, name=f"dense{len(hidden_sizes) + 1}"))
    return Sequential(layers, name=name)
