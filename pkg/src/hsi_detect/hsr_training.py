"""Pretraining of the reconstruction network on (RGB, cube) pairs."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field

from .custom_exceptions import ContractError
from .custom_exceptions import DimensionError
from .custom_exceptions import TrainingError
from .engine.optim import AdamState
from .engine.optim import adam_step
from .engine.params import ParameterStore
from .engine.rng import stream
from .engine.tensor import Tape
from .engine.tensor import Tensor
from .hsr_network import HsrConfig
from .hsr_network import check_extent
from .hsr_network import hsr_forward
from .hsr_network import hsr_reconstruct_batch
from .hsr_network import init_hsr_params
from .hsr_network import mrae_loss
from .spectral_types import RgbImage
from .spectral_types import SpectralImage
from .training_history import TrainingHistory

logger = logging.getLogger(__name__)

Pair = tuple[RgbImage, SpectralImage]


class HsrTrainConfig(BaseModel):
    """Optimisation settings for reconstruction pretraining."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    steps: int = Field(default=2000, ge=1)
    lr: float = Field(default=2e-3, gt=0.0, le=1.0)
    batch_size: int = Field(default=4, ge=1)
    log_every: int = Field(default=50, ge=1)
    val_samples: int = Field(default=16, ge=0)


@dataclass
class HsrTrainResult:
    params: ParameterStore
    history: TrainingHistory
    val_mrae: list[tuple[int, float]] = field(default_factory=list)


def stack_pairs(pairs: Sequence[Pair]) -> tuple[np.ndarray, np.ndarray]:
    """``N×3×H×W`` inputs and ``N×31×H×W`` targets."""
    if not pairs:
        raise ContractError("reconstruction pretraining needs at least one pair")
    shapes = {(rgb.height, rgb.width, hsi.height, hsi.width) for rgb, hsi in pairs}
    if len(shapes) != 1:
        raise DimensionError(f"pairs have inconsistent extents: {sorted(shapes)}")
    return np.stack([rgb.data for rgb, _ in pairs]), np.stack([hsi.data for _, hsi in pairs])


def evaluate_mrae(
    params: ParameterStore, cfg: HsrConfig, rgb: np.ndarray, hsi: np.ndarray
) -> float:
    pred = hsr_reconstruct_batch(rgb, params, cfg)
    return mrae_loss(Tensor.wrap(pred), hsi).item()


def hsr_pretrain(
    pairs: Sequence[Pair],
    cfg: HsrConfig,
    train_cfg: HsrTrainConfig,
    seed: int,
    val_pairs: Sequence[Pair] = (),
    params: ParameterStore | None = None,
) -> HsrTrainResult:
    """Minimise MRAE with Adam; deterministic in ``seed``.

    Raises:
        TrainingError: When the loss stops being finite (names the step).
    """
    rgb, hsi = stack_pairs(pairs)
    check_extent(rgb.shape[-2], rgb.shape[-1], cfg)
    val_rgb = val_hsi = None
    if val_pairs and train_cfg.val_samples:
        val_rgb, val_hsi = stack_pairs(val_pairs[: train_cfg.val_samples])

    params = params if params is not None else init_hsr_params(cfg, seed)
    state = AdamState.create(params, lr=train_cfg.lr)
    history = TrainingHistory(name="hsr", columns=("mrae",))
    result = HsrTrainResult(params=params, history=history)
    batch = min(train_cfg.batch_size, len(rgb))
    logger.info(
        "HSR pretraining started",
        extra={"pairs": len(rgb), "steps": train_cfg.steps, "parameters": params.num_values()},
    )

    for step in range(train_cfg.steps):
        index = np.sort(stream(seed, "hsr/batch", step).choice(len(rgb), size=batch, replace=False))
        with Tape() as tape:
            loss = mrae_loss(hsr_forward(Tensor.wrap(rgb[index]), params, cfg), hsi[index])
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError("reconstruction loss diverged", step=step, component="mrae")
        history.add(step, mrae=value)
        adam_step(params, params.grads_from(tape.backward(loss)), state)

        if step % train_cfg.log_every == 0 or step == train_cfg.steps - 1:
            extra = {"step": step, "mrae": value}
            if val_rgb is not None:
                val = evaluate_mrae(params, cfg, val_rgb, val_hsi)
                result.val_mrae.append((step, val))
                extra["val_mrae"] = val
            logger.info("HSR step", extra=extra)

    return result
