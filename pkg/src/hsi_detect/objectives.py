"""Training losses of the detector and their weighted total."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import fields

import numpy as np

from .custom_exceptions import ContractError
from .custom_exceptions import DimensionError
from .custom_exceptions import LabelError
from .custom_exceptions import TrainingError
from .engine import ops
from .engine.tensor import Tensor
from .engine.tensor import as_tensor

LOSS_COLUMNS = ("cls_binary", "cls_specific", "contrastive", "reconstruction", "total")


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 1.0
    lambda_con: float = 0.05
    lambda_rec: float = 0.3


@dataclass(frozen=True)
class LossBreakdown:
    """Loss components as floats; ``tensor`` is the differentiable total."""

    cls_binary: float
    cls_specific: float
    contrastive: float
    reconstruction: float
    total: float
    tensor: Tensor | None = None

    def as_row(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name in LOSS_COLUMNS}


def _as_batch(logits: Tensor) -> Tensor:
    return ops.reshape(logits, (1, -1)) if logits.ndim == 1 else logits


def _cross_entropy_terms(logits: Tensor, targets: np.ndarray) -> Tensor:
    log_probs = ops.log_softmax(logits, axis=-1)
    return -ops.getitem(log_probs, (np.arange(len(targets)), targets))


def multitask_cls_loss(
    binary_logits: Tensor,
    specific_logits: Tensor,
    labels: Sequence[int],
    manip_ids: Sequence[int | None],
) -> tuple[Tensor, Tensor]:
    """Binary and family cross-entropy, averaged over the batch.

    ``labels`` holds 1 for fake and 0 for real. Real samples contribute
    exactly 0 to the family term but still count in the batch size.
    """
    binary_logits = _as_batch(binary_logits)
    specific_logits = _as_batch(specific_logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = len(labels)
    if binary_logits.shape[0] != n or specific_logits.shape[0] != n or len(manip_ids) != n:
        raise DimensionError(
            f"batch sizes differ: logits {binary_logits.shape[0]}/{specific_logits.shape[0]}, "
            f"labels {n}, manip_ids {len(manip_ids)}"
        )
    k = specific_logits.shape[-1]
    for label, manip_id in zip(labels, manip_ids):
        if label not in (0, 1):
            raise LabelError(f"binary label must be 0 or 1, got {label}")
        if (label == 1) != (manip_id is not None):
            raise LabelError(f"manip_id {manip_id} inconsistent with label {label}")
        if manip_id is not None and not 0 <= manip_id < k:
            raise LabelError(f"manip_id {manip_id} outside [0, {k})")

    cls_binary = ops.mean(_cross_entropy_terms(binary_logits, labels))
    fakes = np.flatnonzero(labels == 1)
    if len(fakes) == 0:
        return cls_binary, as_tensor(0.0)
    fake_logits = ops.getitem(specific_logits, (fakes,))
    targets = np.array([manip_ids[i] for i in fakes], dtype=np.int64)
    cls_specific = ops.sum(_cross_entropy_terms(fake_logits, targets)) / float(n)
    return cls_binary, cls_specific


def contrastive_reg_loss(embeddings: Tensor, labels: Sequence[int], margin: float = 1.0) -> Tensor:
    """Pairwise hinge on L2-normalised embeddings, averaged over ``i < j`` pairs.

    Same-label pairs pay ``d²``; different-label pairs pay ``max(0, margin − d)²``.
    """
    labels = np.asarray(labels).reshape(-1)
    if embeddings.ndim != 2 or embeddings.shape[0] != len(labels):
        raise DimensionError(
            f"embeddings {embeddings.shape} do not match {len(labels)} labels"
        )
    n, dim = embeddings.shape
    if n < 2:
        raise ContractError("contrastive loss needs a batch of at least 2")
    z = ops.l2_normalize(embeddings, axis=-1)
    diff = ops.reshape(z, (n, 1, dim)) - ops.reshape(z, (1, n, dim))
    squared = ops.sum(diff * diff, axis=-1)
    rows, cols = np.triu_indices(n, k=1)
    pair_sq = ops.getitem(squared, (rows, cols))
    distance = ops.sqrt(pair_sq)
    same = (labels[rows] == labels[cols]).astype(np.float64)
    hinge = ops.relu(margin - distance)
    return ops.mean(same * pair_sq + (1.0 - same) * hinge * hinge)


def reconstruction_loss(
    self_recons: Tensor,
    cross_recons: Tensor,
    originals: Tensor | np.ndarray,
    w_self: float = 1.0,
    w_cross: float = 1.0,
) -> Tensor:
    """Weighted L1 of self- and cross-reconstructions against the content originals."""
    originals = as_tensor(originals)
    if self_recons.shape != originals.shape or cross_recons.shape != originals.shape:
        raise DimensionError(
            f"reconstruction shapes {self_recons.shape}/{cross_recons.shape} "
            f"differ from originals {originals.shape}"
        )
    self_term = ops.mean(ops.abs(self_recons - originals))
    cross_term = ops.mean(ops.abs(cross_recons - originals))
    return w_self * self_term + w_cross * cross_term


def total_loss(
    cls_binary: Tensor | float,
    cls_specific: Tensor | float,
    contrastive: Tensor | float,
    reconstruction: Tensor | float,
    weights: LossWeights = LossWeights(),
) -> LossBreakdown:
    """``λ_cls·(binary + specific) + λ_con·contrastive + λ_rec·reconstruction``.

    Raises:
        TrainingError: If any component is not finite (names the component).
    """
    parts = {
        "cls_binary": as_tensor(cls_binary),
        "cls_specific": as_tensor(cls_specific),
        "contrastive": as_tensor(contrastive),
        "reconstruction": as_tensor(reconstruction),
    }
    values = {}
    for name, part in parts.items():
        value = ops.ensure_scalar(part).item()
        if not math.isfinite(value):
            raise TrainingError("loss component is not finite", component=name)
        values[name] = value

    total = (
        weights.lambda_cls * (parts["cls_binary"] + parts["cls_specific"])
        + weights.lambda_con * parts["contrastive"]
        + weights.lambda_rec * parts["reconstruction"]
    )
    return LossBreakdown(total=total.item(), tensor=total, **values)
