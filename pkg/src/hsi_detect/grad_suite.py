"""Finite-difference verification of every differentiable piece.

Three groups of sites are checked: the engine primitives (relative error
≤ 1e-5), one reconstruction stage and the full reconstruction forward
(≤ 1e-4), and the detector with its losses on 16×16×31 pairs (≤ 1e-4).
Inputs are drawn from seeded streams, so the report is reproducible.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from rich.console import Console
from rich.table import Table

from .detector_network import DetectorConfig
from .detector_network import init_detector_params
from .detector_training import DetectorTrainConfig
from .detector_training import paired_loss
from .engine import ops
from .engine.gradcheck import GradCheckResult
from .engine.gradcheck import check_gradients
from .engine.params import ParameterStore
from .engine.rng import stream
from .engine.tensor import Tensor
from .hsr_network import HsrConfig
from .hsr_network import hsr_forward
from .hsr_network import init_hsr_params
from .hsr_network import sst_forward
from .objectives import contrastive_reg_loss
from .objectives import multitask_cls_loss
from .objectives import reconstruction_loss
from .spectral_types import NUM_BANDS

logger = logging.getLogger(__name__)

PRIMITIVE_TOL = 1e-5
NETWORK_TOL = 1e-4
NETWORK_EPS = 1e-6
DETECTOR_EPS = 1e-5


@dataclass(frozen=True)
class GradSite:
    name: str
    group: str
    tolerance: float
    result: GradCheckResult

    @property
    def passed(self) -> bool:
        return self.result.max_rel_err <= self.tolerance


@dataclass
class GradSuiteReport:
    sites: list[GradSite] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(site.passed for site in self.sites)

    @property
    def worst(self) -> GradSite | None:
        """Site with the largest error relative to its tolerance."""
        if not self.sites:
            return None
        return max(self.sites, key=lambda s: s.result.max_rel_err / s.tolerance)

    def display(self, out: Console) -> None:
        table = Table(title="[bold cyan]Gradient check[/bold cyan]", header_style="bold blue")
        table.add_column("Site", style="cyan")
        table.add_column("Group")
        table.add_column("Checked", justify="right")
        table.add_column("Max rel. error", justify="right")
        table.add_column("Tolerance", justify="right")
        table.add_column("Status", justify="center")
        for site in self.sites:
            table.add_row(
                site.name,
                site.group,
                str(site.result.checked),
                f"{site.result.max_rel_err:.2e}",
                f"{site.tolerance:.0e}",
                "[green]PASS[/green]" if site.passed else "[red]FAIL[/red]",
            )
        out.print(table)
        worst = self.worst
        if worst is not None:
            out.print(
                f"Worst site: [bold]{worst.name}[/bold] "
                f"(input {worst.result.input_index}, component {worst.result.component}, "
                f"analytic {worst.result.analytic:.6e}, numeric {worst.result.numeric:.6e})"
            )


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def _away_from_kinks(x: np.ndarray, kinks: Sequence[float], margin: float = 0.05) -> np.ndarray:
    for kink in kinks:
        pushed = np.where(x >= kink, kink + margin, kink - margin)
        x = np.where(np.abs(x - kink) < margin, pushed, x)
    return x


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    return ops.sum(out * weights.reshape(out.shape))


PrimitiveCase = Callable[[np.random.Generator], tuple[Callable[..., Tensor], list[np.ndarray]]]


def _unary(op: Callable[[Tensor], Tensor], low: float = -2.0, high: float = 2.0, kinks=()) -> PrimitiveCase:
    def case(rng: np.random.Generator):
        x = _away_from_kinks(rng.uniform(low, high, (3, 4)), kinks)
        w = rng.normal(size=(3, 4))
        return (lambda a: _weighted(op(a), w)), [x]

    return case


def _binary(op: Callable[[Tensor, Tensor], Tensor], shapes=((3, 4), (3, 4)), positive_b=False) -> PrimitiveCase:
    def case(rng: np.random.Generator):
        a = rng.normal(size=shapes[0])
        b = rng.uniform(0.5, 2.0, shapes[1]) if positive_b else rng.normal(size=shapes[1])
        out_shape = np.broadcast_shapes(shapes[0], shapes[1])
        w = rng.normal(size=out_shape)
        return (lambda x, y: _weighted(op(x, y), w)), [a, b]

    return case


def _shaped(op: Callable[[Tensor], Tensor], in_shape, out_shape) -> PrimitiveCase:
    def case(rng: np.random.Generator):
        w = rng.normal(size=out_shape)
        return (lambda a: _weighted(op(a), w)), [rng.normal(size=in_shape)]

    return case


def _conv_case(stride: int, pad: int) -> PrimitiveCase:
    def case(rng: np.random.Generator):
        x = rng.normal(size=(2, 2, 6, 6))
        k = rng.normal(size=(3, 2, 3, 3))
        out = ops.conv_output_extent(6, 3, stride, pad)
        w = rng.normal(size=(2, 3, out, out))
        return (lambda a, b: _weighted(ops.conv2d(a, b, stride=stride, pad=pad), w)), [x, k]

    return case


def _depthwise_case(rng: np.random.Generator):
    x = rng.normal(size=(2, 3, 5, 5))
    k = rng.normal(size=(3, 3, 3))
    w = rng.normal(size=(2, 3, 5, 5))
    return (lambda a, b: _weighted(ops.depthwise_conv2d(a, b), w)), [x, k]


def _concat_case(rng: np.random.Generator):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(4, 3))
    w = rng.normal(size=(6, 3))
    return (lambda x, y: _weighted(ops.concat([x, y], axis=0), w)), [a, b]


def _matmul_case(rng: np.random.Generator):
    a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))
    w = rng.normal(size=(2, 3, 5))
    return (lambda x, y: _weighted(ops.matmul(x, y), w)), [a, b]


def _shared_case(rng: np.random.Generator):
    # one leaf feeding two paths
    x = rng.normal(size=(3, 3))
    return (lambda a: ops.sum(ops.matmul(a, a) * a)), [x]


PRIMITIVE_CASES: dict[str, PrimitiveCase] = {
    "add": _binary(ops.add, ((3, 4), (4,))),
    "sub": _binary(ops.sub, ((3, 1), (3, 4))),
    "mul": _binary(ops.mul),
    "div": _binary(ops.div, positive_b=True),
    "neg": _unary(ops.neg),
    "exp": _unary(ops.exp),
    "log": _unary(ops.log, 0.5, 2.0),
    "sqrt": _unary(ops.sqrt, 0.5, 2.0),
    "abs": _unary(ops.abs, kinks=(0.0,)),
    "relu": _unary(ops.relu, kinks=(0.0,)),
    "gelu": _unary(ops.gelu),
    "sigmoid": _unary(ops.sigmoid),
    "softplus": _unary(ops.softplus),
    "maximum": _unary(lambda a: ops.maximum(a, 0.3), kinks=(0.3,)),
    "clamp": _unary(lambda a: ops.clamp(a, -0.5, 0.5), kinks=(-0.5, 0.5)),
    "sum": _shaped(lambda a: ops.sum(a, axis=1), (3, 4), (3,)),
    "mean": _shaped(lambda a: ops.mean(a, axis=0, keepdims=True), (3, 4), (1, 4)),
    "variance": _shaped(lambda a: ops.variance(a, axis=(-2, -1)), (2, 3, 4), (2,)),
    "reshape": _shaped(lambda a: ops.reshape(a, (4, 3)), (3, 4), (4, 3)),
    "transpose": _shaped(lambda a: ops.transpose(a, (2, 0, 1)), (2, 3, 4), (4, 2, 3)),
    "concat": _concat_case,
    "getitem": _shaped(lambda a: ops.getitem(a, (np.array([0, 2, 2]), slice(1, 3))), (3, 4), (3, 2)),
    "nearest_upsample": _shaped(ops.nearest_upsample, (2, 3, 3), (2, 6, 6)),
    "matmul": _matmul_case,
    "softmax": _shaped(lambda a: ops.softmax(a, axis=-1), (3, 4), (3, 4)),
    "log_softmax": _shaped(lambda a: ops.log_softmax(a, axis=0), (3, 4), (3, 4)),
    "conv2d": _conv_case(1, 1),
    "conv2d_stride2": _conv_case(2, 1),
    "conv2d_valid": _conv_case(1, 0),
    "depthwise_conv2d": _depthwise_case,
    "global_avg_pool": _shaped(ops.global_avg_pool, (2, 3, 4, 4), (2, 3)),
    "l2_normalize": _shaped(lambda a: ops.l2_normalize(a, axis=-1), (3, 4), (3, 4)),
    "shared_subexpression": _shared_case,
}


def check_primitive(name: str, seed: int = 0, trials: int = 20) -> GradCheckResult:
    """Worst result of ``trials`` random instances of one primitive."""
    case = PRIMITIVE_CASES[name]
    worst: GradCheckResult | None = None
    checked = 0
    for trial in range(trials):
        f, arrays = case(stream(seed, f"gradcheck/{name}", trial))
        result = check_gradients(f, [Tensor(a, requires_grad=True) for a in arrays])
        checked += result.checked
        if worst is None or result.max_rel_err > worst.max_rel_err:
            worst = result
    assert worst is not None
    return GradCheckResult(
        worst.max_rel_err, worst.input_index, worst.component, worst.analytic, worst.numeric, checked
    )


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------

GRAD_HSR = HsrConfig(stages=1, base_channels=4, heads=2, depth=1)
# Default widths; measured input so no reconstruction network is involved.
GRAD_DETECTOR = DetectorConfig(input="hsi", hsi_source="measured")


def randomize_zero_params(params: ParameterStore, seed: int, scale: float = 0.2) -> ParameterStore:
    """Replace all-zero tensors (identity-initialised layers) with small random values."""
    rng = stream(seed, "gradcheck/params")
    for name, tensor in params.items():
        if not np.any(tensor.data):
            params.assign(name, rng.uniform(-scale, scale, tensor.shape))
    return params


def _trainable(params: ParameterStore, names: Sequence[str]) -> list[Tensor]:
    return [params[name] for name in names]


def check_sst(seed: int = 0, size: int = 16, max_components: int = 48) -> GradCheckResult:
    """Gradient of a weighted mean of one stage w.r.t. its input and attention weights."""
    params = randomize_zero_params(init_hsr_params(GRAD_HSR, seed), seed)
    rng = stream(seed, "gradcheck/sst")
    x = Tensor(rng.normal(size=(GRAD_HSR.base_channels, size, size)), requires_grad=True)
    w = rng.normal(size=x.shape)
    names = ["hsr/stage0/enc0/attn/q", "hsr/stage0/enc0/attn/temperature", "hsr/stage0/out/w"]

    def f(x_: Tensor, *_: Tensor) -> Tensor:
        return ops.mean(sst_forward(x_, params, GRAD_HSR) * w)

    return check_gradients(
        f, [x, *_trainable(params, names)], NETWORK_EPS, max_components=max_components, seed=seed
    )


def check_hsr_forward(seed: int = 0, size: int = 16, max_components: int = 48) -> GradCheckResult:
    params = randomize_zero_params(init_hsr_params(GRAD_HSR, seed), seed, scale=0.05)
    rng = stream(seed, "gradcheck/hsr")
    rgb = Tensor(rng.uniform(0.2, 0.6, (3, size, size)), requires_grad=True)
    return check_gradients(
        lambda r: ops.mean(hsr_forward(r, params, GRAD_HSR)),
        [rgb],
        NETWORK_EPS,
        max_components=max_components,
        seed=seed,
    )


def _detector_batch(seed: int, size: int) -> tuple[np.ndarray, np.ndarray, list[int]]:
    rng = stream(seed, "gradcheck/detector")
    real = rng.uniform(0.05, 0.95, (2, NUM_BANDS, size, size))
    fake = np.clip(real + rng.normal(0.0, 0.05, real.shape), 0.0, 1.0)
    return real, fake, [0, 1]


def check_detector_loss(seed: int = 0, size: int = 16, max_components: int = 16) -> GradCheckResult:
    """Full training objective on a 2-pair batch w.r.t. one weight of every sub-network.

    Runs the default detector geometry with central differences at
    ``DETECTOR_EPS``.
    """
    params = init_detector_params(GRAD_DETECTOR, seed)
    real, fake, manip_ids = _detector_batch(seed, size)
    train_cfg = DetectorTrainConfig()
    names = [
        "det/content/conv1/w",
        "det/fingerprint/conv2/w",
        "det/style/w",
        "det/dec/conv1/w",
        "det/dec/out/b",
        "det/head/binary/w",
        "det/head/specific/w",
    ]

    def f(*_: Tensor) -> Tensor:
        return paired_loss(real, fake, manip_ids, params, GRAD_DETECTOR, train_cfg).tensor  # type: ignore[return-value]

    return check_gradients(
        f, _trainable(params, names), DETECTOR_EPS, max_components=max_components, seed=seed
    )


def check_losses(seed: int = 0) -> dict[str, GradCheckResult]:
    """Each detector loss on random logits, embeddings and reconstructions."""
    rng = stream(seed, "gradcheck/losses")
    binary = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    specific = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    embeddings = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    recon = Tensor(rng.uniform(0.0, 1.0, (4, 3, 4, 4)), requires_grad=True)
    cross = Tensor(rng.uniform(0.0, 1.0, (4, 3, 4, 4)), requires_grad=True)
    originals = rng.uniform(0.0, 1.0, (4, 3, 4, 4))
    labels = [0, 1, 0, 1]
    manip_ids = [None, 2, None, 0]

    def cls(b: Tensor, s: Tensor) -> Tensor:
        binary_term, specific_term = multitask_cls_loss(b, s, labels, manip_ids)
        return binary_term + specific_term

    return {
        "multitask_cls_loss": check_gradients(cls, [binary, specific]),
        "contrastive_reg_loss": check_gradients(
            lambda e: contrastive_reg_loss(e, labels, margin=1.5), [embeddings]
        ),
        "reconstruction_loss": check_gradients(
            lambda a, b: reconstruction_loss(a, b, originals, 1.0, 0.5), [recon, cross]
        ),
    }


def run_grad_suite(seed: int = 0, trials: int = 20, size: int = 16) -> GradSuiteReport:
    """Check every site; the report lists them in a fixed order."""
    started = time.perf_counter()
    report = GradSuiteReport()
    for name in PRIMITIVE_CASES:
        report.sites.append(GradSite(name, "engine", PRIMITIVE_TOL, check_primitive(name, seed, trials)))
    for name, result in check_losses(seed).items():
        report.sites.append(GradSite(name, "objectives", NETWORK_TOL, result))
    report.sites.append(GradSite("sst_forward", "hsr-net", NETWORK_TOL, check_sst(seed, size)))
    report.sites.append(GradSite("hsr_forward", "hsr-net", NETWORK_TOL, check_hsr_forward(seed, size)))
    report.sites.append(
        GradSite("detector_total_loss", "detector", NETWORK_TOL, check_detector_loss(seed, size))
    )
    report.seconds = time.perf_counter() - started

    for site in report.sites:
        level = logging.INFO if site.passed else logging.WARNING
        logger.log(
            level,
            "gradient site checked",
            extra={"site": site.name, "max_rel_err": site.result.max_rel_err, "tolerance": site.tolerance},
        )
    return report
