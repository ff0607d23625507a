"""Named parameter collections shared by both networks and the checkpoint codec."""

from __future__ import annotations

from collections.abc import Iterator
from collections.abc import Mapping

import numpy as np

from ..custom_exceptions import ConfigError
from ..custom_exceptions import DimensionError
from .tensor import Gradients
from .tensor import Tensor


class ParameterStore(Mapping[str, Tensor]):
    """Ordered ``name -> Tensor`` mapping of trainable parameters.

    Names are unique and use ``/`` separated prefixes (``hsr/...``,
    ``det/...``). Every stored tensor has ``requires_grad`` set.
    """

    def __init__(self, tensors: Mapping[str, Tensor] | None = None) -> None:
        self._tensors: dict[str, Tensor] = {}
        for name, tensor in (tensors or {}).items():
            self.add(name, tensor.data)

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError as exc:
            raise ConfigError(f"unknown parameter '{name}'") from exc

    def __contains__(self, name: object) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ConfigError(f"duplicate parameter name '{name}'")
        array = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise ConfigError(f"parameter '{name}' has non-finite values")
        tensor = Tensor(array, requires_grad=True, name=name)
        self._tensors[name] = tensor
        return tensor

    def assign(self, name: str, value: np.ndarray) -> None:
        """Replace a parameter's values, keeping its shape."""
        current = self[name]
        array = np.asarray(value, dtype=np.float64)
        if array.shape != current.shape:
            raise DimensionError(
                f"parameter '{name}' expects shape {current.shape}, got {array.shape}"
            )
        current.data = np.array(array, order="C")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: t.shape for name, t in self._tensors.items()}

    def arrays(self) -> dict[str, np.ndarray]:
        """Copies of all parameter values, keyed by name."""
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def with_prefix(self, prefix: str) -> dict[str, Tensor]:
        return {name: t for name, t in self._tensors.items() if name.startswith(prefix)}

    def grads_from(self, gradients: Gradients) -> dict[str, np.ndarray]:
        """Gradient arrays for every parameter (zeros where unused)."""
        return {name: gradients[t] for name, t in self._tensors.items()}

    def copy(self) -> ParameterStore:
        return ParameterStore(self._tensors)

    def num_values(self) -> int:
        return sum(t.size for t in self._tensors.values())


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform init in ``±1/sqrt(fan_in)``."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)
