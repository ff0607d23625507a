"""Tensor and define-by-run tape for reverse-mode differentiation.

Tensors hold contiguous 64-bit numpy arrays. Operations executed while a
``Tape`` is active record one node each (parents plus a local backward rule);
``Tape.backward`` walks the nodes in reverse recording order, which is a
valid reverse topological order because parents are always recorded before
their children.
"""

from __future__ import annotations

import contextvars
from collections.abc import Callable
from collections.abc import Iterator
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..custom_exceptions import ContractError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

_active_tape: contextvars.ContextVar[Tape | None] = contextvars.ContextVar(
    "active_tape", default=None
)


class Tensor:
    """Dense n-dimensional array with an optional gradient flag.

    Attributes
    ----------
    data: np.ndarray
        Row-major float64 storage.
    requires_grad: bool
        Leaf tensors with this flag receive gradients from ``Tape.backward``.
    name: str | None
        Optional label, used for parameters and error messages.
    """

    __slots__ = ("data", "requires_grad", "name", "_tape", "_node")

    # numpy defers mixed ndarray/Tensor arithmetic to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data: Any, requires_grad: bool = False, name: str | None = None) -> None:
        self.data = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = requires_grad
        self.name = name
        self._tape: Tape | None = None
        self._node: int | None = None

    @classmethod
    def wrap(cls, array: np.ndarray) -> Tensor:
        """Wrap an existing float64 array without copying."""
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(array, dtype=np.float64)
        out.requires_grad = False
        out.name = None
        out._tape = None
        out._node = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array."""
        return self.data.copy()

    def detach(self) -> Tensor:
        """Return a tensor sharing data but detached from any tape."""
        return Tensor.wrap(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Operator sugar; the primitives live in ops.py.
    def __add__(self, other: Any) -> Tensor:
        from .ops import add

        return add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        from .ops import add

        return add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        from .ops import sub

        return sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        from .ops import sub

        return sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        from .ops import mul

        return mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        from .ops import mul

        return mul(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        from .ops import div

        return div(self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        from .ops import div

        return div(other, self)

    def __neg__(self) -> Tensor:
        from .ops import neg

        return neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        from .ops import matmul

        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        from .ops import getitem

        return getitem(self, index)


@dataclass(frozen=True)
class TapeNode:
    """One recorded primitive: parent node indices and its backward rule."""

    parents: tuple[int | None, ...]
    backward: BackwardFn | None
    shape: tuple[int, ...]


class Gradients:
    """Gradients returned by ``Tape.backward``, keyed by tensor identity."""

    def __init__(self, by_id: dict[int, np.ndarray], tensors: dict[int, Tensor]) -> None:
        self._by_id = by_id
        self._tensors = tensors

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._by_id.get(id(tensor))
        if grad is None or self._tensors.get(id(tensor)) is not tensor:
            return np.zeros(tensor.shape)
        return grad

    def __contains__(self, tensor: object) -> bool:
        return isinstance(tensor, Tensor) and self._tensors.get(id(tensor)) is tensor

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._tensors.values())

    def __len__(self) -> int:
        return len(self._tensors)


class Tape:
    """Append-only record of primitive operations.

    Use as a context manager; while active, every op whose inputs need
    gradients appends a node. A tape is meant for one forward/backward pass.
    """

    def __init__(self) -> None:
        self.nodes: list[TapeNode] = []
        self._leaf_index: dict[int, int] = {}
        self._leaves: list[Tensor] = []
        self._token: contextvars.Token | None = None

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def _index_of(self, tensor: Tensor) -> int | None:
        if tensor._tape is self and tensor._node is not None:
            return tensor._node
        if not tensor.requires_grad:
            return None
        key = id(tensor)
        if key not in self._leaf_index:
            self._leaf_index[key] = len(self.nodes)
            self._leaves.append(tensor)
            self.nodes.append(TapeNode(parents=(), backward=None, shape=tensor.shape))
        return self._leaf_index[key]

    def record(self, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
        parents = tuple(self._index_of(t) for t in inputs)
        out = Tensor.wrap(data)
        if all(p is None for p in parents):
            return out
        out.requires_grad = True
        out._tape = self
        out._node = len(self.nodes)
        self.nodes.append(TapeNode(parents=parents, backward=backward, shape=out.shape))
        return out

    def backward(self, loss: Tensor) -> Gradients:
        """Propagate d(loss)/d(node) from a scalar root to every leaf."""
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        root = self._root_index(loss)

        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[root] = np.ones(self.nodes[root].shape)
        leaf_nodes = set(self._leaf_index.values())

        for index in range(root, -1, -1):
            grad = grads[index]
            node = self.nodes[index]
            if grad is None or node.backward is None:
                continue
            parent_grads = node.backward(grad)
            for parent, parent_grad in zip(node.parents, parent_grads):
                if parent is None or parent_grad is None:
                    continue
                current = grads[parent]
                grads[parent] = parent_grad if current is None else current + parent_grad
            if index not in leaf_nodes:
                grads[index] = None

        by_id: dict[int, np.ndarray] = {}
        tensors: dict[int, Tensor] = {}
        for leaf in self._leaves:
            index = self._leaf_index[id(leaf)]
            grad = grads[index]
            by_id[id(leaf)] = np.zeros(leaf.shape) if grad is None else grad.reshape(leaf.shape)
            tensors[id(leaf)] = leaf
        return Gradients(by_id, tensors)

    def _root_index(self, loss: Tensor) -> int:
        if loss._tape is self and loss._node is not None:
            return loss._node
        if loss.requires_grad:
            return self._index_of(loss)  # type: ignore[return-value]
        raise ContractError("loss was not recorded on this tape")


def active_tape() -> Tape | None:
    """Return the tape currently recording, if any."""
    return _active_tape.get()


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Module-level form of ``Tape.backward``."""
    return tape.backward(loss)


def as_tensor(value: Any) -> Tensor:
    """Return ``value`` unchanged if it is a Tensor, else a constant Tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def record(data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Create the result of a primitive, recording it on the active tape."""
    tape = _active_tape.get()
    if tape is None:
        return Tensor.wrap(data)
    return tape.record(data, inputs, backward_fn)
