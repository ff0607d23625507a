"""Detector inputs and the paired training loop.

Each training step draws scenes, runs ``forward_pair`` on their (real, fake)
twins, combines the three losses and takes one Adam step. The detector's
input is either the RGB projection, the measured cube, or the cube
reconstructed by a frozen reconstruction network.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field

from .custom_exceptions import ConfigError
from .custom_exceptions import ContractError
from .custom_exceptions import TrainingError
from .dataset_builder import SamplePair
from .detector_network import DetectorConfig
from .detector_network import forward_pair
from .detector_network import init_detector_params
from .engine import ops
from .engine.optim import AdamState
from .engine.optim import adam_step
from .engine.params import ParameterStore
from .engine.rng import stream
from .engine.tensor import Tape
from .engine.tensor import Tensor
from .hsr_network import HsrConfig
from .hsr_network import hsr_reconstruct_batch
from .objectives import LOSS_COLUMNS
from .objectives import LossBreakdown
from .objectives import LossWeights
from .objectives import contrastive_reg_loss
from .objectives import multitask_cls_loss
from .objectives import reconstruction_loss
from .objectives import total_loss
from .spectral_types import LabeledSample
from .training_history import TrainingHistory

logger = logging.getLogger(__name__)


class DetectorTrainConfig(BaseModel):
    """Optimisation settings and loss weights for detector training."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    steps: int = Field(default=2000, ge=1)
    lr: float = Field(default=1e-3, gt=0.0, le=1.0)
    batch_pairs: int = Field(default=4, ge=1)
    log_every: int = Field(default=50, ge=1)
    lambda_cls: float = Field(default=1.0, ge=0.0)
    lambda_con: float = Field(default=0.05, ge=0.0)
    lambda_rec: float = Field(default=0.3, ge=0.0)
    margin: float = Field(default=1.0, gt=0.0)
    w_self: float = Field(default=1.0, ge=0.0)
    w_cross: float = Field(default=1.0, ge=0.0)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_cls, self.lambda_con, self.lambda_rec)


@dataclass(frozen=True)
class FrozenHsr:
    """Reconstruction parameters used read-only by the detector."""

    params: ParameterStore
    cfg: HsrConfig


@dataclass(frozen=True)
class PairArrays:
    """Detector inputs of paired scenes, aligned by index."""

    real: np.ndarray
    fake: np.ndarray
    manip_ids: tuple[int, ...]
    scene_seeds: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.real)


@dataclass
class DetectorTrainResult:
    params: ParameterStore
    history: TrainingHistory


def detector_inputs(
    samples: Sequence[LabeledSample], cfg: DetectorConfig, hsr: FrozenHsr | None = None
) -> np.ndarray:
    """Stack the arrays the detector consumes for ``samples``."""
    if cfg.input == "rgb":
        return np.stack([s.rgb.data for s in samples])
    if cfg.hsi_source == "measured":
        return np.stack([s.hsi.data for s in samples])
    if hsr is None:
        raise ConfigError("input=hsi with reconstructed cubes needs a reconstruction checkpoint")
    return hsr_reconstruct_batch(np.stack([s.rgb.data for s in samples]), hsr.params, hsr.cfg)


def pair_arrays(
    pairs: Sequence[SamplePair], cfg: DetectorConfig, hsr: FrozenHsr | None = None
) -> PairArrays:
    if not pairs:
        raise ContractError("detector training needs at least one pair")
    return PairArrays(
        real=detector_inputs([p.real for p in pairs], cfg, hsr),
        fake=detector_inputs([p.fake for p in pairs], cfg, hsr),
        manip_ids=tuple(int(p.fake.manip_id) for p in pairs),  # type: ignore[arg-type]
        scene_seeds=tuple(p.scene_seed for p in pairs),
    )


def paired_loss(
    real: np.ndarray,
    fake: np.ndarray,
    manip_ids: Sequence[int],
    params: ParameterStore,
    cfg: DetectorConfig,
    train_cfg: DetectorTrainConfig,
) -> LossBreakdown:
    """Full training objective for a batch of (real, fake) twins."""
    out_real, out_fake = forward_pair(Tensor.wrap(real), Tensor.wrap(fake), params, cfg)
    n = len(real)
    labels = [0] * n + [1] * n
    cls_binary, cls_specific = multitask_cls_loss(
        ops.concat([out_real.binary_logits, out_fake.binary_logits], axis=0),
        ops.concat([out_real.specific_logits, out_fake.specific_logits], axis=0),
        labels,
        [None] * n + list(manip_ids),
    )
    embeddings = ops.concat(
        [
            ops.global_avg_pool(out_real.fingerprint.common),
            ops.global_avg_pool(out_fake.fingerprint.common),
        ],
        axis=0,
    )
    contrastive = contrastive_reg_loss(embeddings, labels, train_cfg.margin)
    reconstruction = reconstruction_loss(
        ops.concat([out_real.self_recon, out_fake.self_recon], axis=0),
        ops.concat([out_real.cross_recon, out_fake.cross_recon], axis=0),
        np.concatenate([real, fake]),
        train_cfg.w_self,
        train_cfg.w_cross,
    )
    return total_loss(cls_binary, cls_specific, contrastive, reconstruction, train_cfg.weights)


def train_detector(
    data: PairArrays,
    cfg: DetectorConfig,
    train_cfg: DetectorTrainConfig,
    seed: int,
    params: ParameterStore | None = None,
) -> DetectorTrainResult:
    """Paired training loop; one history row per logging interval."""
    params = params if params is not None else init_detector_params(cfg, seed)
    state = AdamState.create(params, lr=train_cfg.lr)
    history = TrainingHistory(name="detector", columns=LOSS_COLUMNS)
    batch = min(train_cfg.batch_pairs, len(data))
    logger.info(
        "detector training started",
        extra={
            "pairs": len(data),
            "steps": train_cfg.steps,
            "input": cfg.input,
            "hsi_source": cfg.hsi_source,
            "parameters": params.num_values(),
        },
    )

    for step in range(train_cfg.steps):
        index = np.sort(stream(seed, "detector/batch", step).choice(len(data), size=batch, replace=False))
        try:
            with Tape() as tape:
                breakdown = paired_loss(
                    data.real[index],
                    data.fake[index],
                    [data.manip_ids[i] for i in index],
                    params,
                    cfg,
                    train_cfg,
                )
            grads = tape.backward(breakdown.tensor)  # type: ignore[arg-type]
            adam_step(params, params.grads_from(grads), state)
        except TrainingError as exc:
            raise TrainingError(
                "detector training diverged", step=step, component=exc.component
            ) from exc

        if step % train_cfg.log_every == 0 or step == train_cfg.steps - 1:
            history.add(step, **breakdown.as_row())
            logger.info("detector step", extra={"step": step, **breakdown.as_row()})

    return DetectorTrainResult(params=params, history=history)
