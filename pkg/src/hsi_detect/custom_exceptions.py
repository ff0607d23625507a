"""Custom exception classes for hsi-detect.

Each exception type corresponds to one failure category of the pipeline and
carries the process exit code the CLI reports for it.
"""

from __future__ import annotations


class HsiDetectError(Exception):
    """Base class for all errors raised by hsi-detect.

    Attributes
    ----------
    exit_code: int
        Process exit code used by the CLI when this error reaches the
        command boundary.
    """

    exit_code: int = 1


class ConfigError(HsiDetectError):
    """Raised when configuration or environment validation fails.

    This exception is raised when there are issues with:
    - Unknown or invalid keys in the run configuration
    - Network geometry that does not fit together (e.g. heads not dividing
      the attention width)
    - Unknown manipulation kinds or an empty kind list
    - A detector configured for hyperspectral input without a
      reconstruction checkpoint
    """

    exit_code = 2


class DimensionError(HsiDetectError):
    """Raised when tensor or image shapes violate an operation's contract.

    The message names the offending shapes so the caller can see both sides
    of the mismatch.
    """

    exit_code = 2


class ContractError(HsiDetectError):
    """Raised when an API precondition is not met.

    Examples are a non-scalar root passed to backward or a batch of one
    sample handed to the contrastive loss.
    """

    exit_code = 2


class LabelError(HsiDetectError):
    """Raised when sample labels are inconsistent.

    A fake sample needs a manipulation id in ``[0, K)``; a real sample must
    not carry one.
    """

    exit_code = 2


class FormatError(HsiDetectError):
    """Raised when a binary or manifest file cannot be parsed.

    This exception is raised when:
    - The magic bytes or version of an HS1 or checkpoint file are wrong
    - A payload is truncated
    - A manifest line is not valid JSON

    The message names the byte offset (or line) where parsing stopped.
    """

    exit_code = 3

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataIOError(HsiDetectError):
    """Raised when files or directories cannot be read or written."""

    exit_code = 3


class TrainingError(HsiDetectError):
    """Raised when optimisation cannot continue.

    This exception is raised when:
    - A gradient contains NaN or Inf (the Adam step is refused)
    - A loss component is not finite
    - The training loss diverges

    ``step`` and ``component`` identify where the failure happened.
    """

    exit_code = 4

    def __init__(
        self, message: str, step: int | None = None, component: str | None = None
    ) -> None:
        details = []
        if component is not None:
            details.append(f"component={component}")
        if step is not None:
            details.append(f"step={step}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.step = step
        self.component = component


class EvaluationError(HsiDetectError):
    """Raised when scores or labels cannot be evaluated (e.g. one class only)."""

    exit_code = 5


class ProtocolError(HsiDetectError):
    """Raised when the cross-manipulation protocol is violated.

    This covers test scenes that also appear in training and detectors that
    were not trained on exactly one manipulation kind.
    """

    exit_code = 5
