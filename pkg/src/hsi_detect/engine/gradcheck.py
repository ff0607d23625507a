"""Finite-difference gradient checking."""

from __future__ import annotations

from collections.abc import Callable
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..custom_exceptions import ContractError
from .tensor import Tape
from .tensor import Tensor

ScalarFn = Callable[..., Tensor]


@dataclass(frozen=True)
class GradCheckResult:
    """Worst component found by ``check_gradients``."""

    max_rel_err: float
    input_index: int
    component: int
    analytic: float
    numeric: float
    checked: int


def _components(size: int, max_components: int | None, rng: np.random.Generator) -> np.ndarray:
    if max_components is None or max_components >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_components, replace=False))


def check_gradients(
    f: ScalarFn,
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    *,
    max_components: int | None = None,
    seed: int = 0,
    abs_tol: float = 1e-10,
) -> GradCheckResult:
    """Compare tape gradients of scalar ``f(*inputs)`` with central differences.

    The error of one component is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``; components
    whose absolute difference is at most ``abs_tol`` count as exact.
    ``max_components`` limits the check to a seeded random subset of each
    input's components.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    for tensor in inputs:
        if not np.all(np.isfinite(tensor.data)):
            raise ContractError("grad_check inputs must be finite")

    with Tape() as tape:
        loss = f(*inputs)
    grads = tape.backward(loss)

    rng = np.random.default_rng(seed)
    worst = GradCheckResult(0.0, -1, -1, 0.0, 0.0, 0)
    checked = 0
    for input_index, tensor in enumerate(inputs):
        analytic = grads[tensor].reshape(-1)
        flat = tensor.data.reshape(-1)
        for component in _components(flat.size, max_components, rng):
            original = flat[component]
            flat[component] = original + eps
            plus = f(*inputs).item()
            flat[component] = original - eps
            minus = f(*inputs).item()
            flat[component] = original
            numeric = (plus - minus) / (2.0 * eps)
            value = float(analytic[component])
            diff = abs(value - numeric)
            checked += 1
            if diff <= abs_tol:
                continue
            err = diff / max(abs(value), abs(numeric), 1e-8)
            if err > worst.max_rel_err:
                worst = GradCheckResult(err, input_index, int(component), value, numeric, 0)
    return GradCheckResult(
        worst.max_rel_err, worst.input_index, worst.component, worst.analytic, worst.numeric, checked
    )


def grad_check(
    f: ScalarFn,
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    *,
    max_components: int | None = None,
    seed: int = 0,
    abs_tol: float = 1e-10,
) -> float:
    """Maximum relative error between analytic and central-difference gradients."""
    return check_gradients(
        f, inputs, eps, max_components=max_components, seed=seed, abs_tol=abs_tol
    ).max_rel_err
