"""Dense tensor engine with reverse-mode differentiation.

The numerical substrate for the reconstruction and detection networks:
``Tensor`` and ``Tape`` (define-by-run recording), the primitives in
``ops``, finite-difference checking, Adam, parameter stores and seeded
random streams.
"""

from . import ops
from .gradcheck import GradCheckResult
from .gradcheck import check_gradients
from .gradcheck import grad_check
from .optim import AdamState
from .optim import adam_step
from .params import ParameterStore
from .params import fan_in_uniform
from .rng import derive_seed
from .rng import stream
from .tensor import Gradients
from .tensor import Tape
from .tensor import Tensor
from .tensor import active_tape
from .tensor import backward

__all__ = [
    "ops",
    "Tensor",
    "Tape",
    "Gradients",
    "active_tape",
    "backward",
    "grad_check",
    "check_gradients",
    "GradCheckResult",
    "AdamState",
    "adam_step",
    "ParameterStore",
    "fan_in_uniform",
    "stream",
    "derive_seed",
]
