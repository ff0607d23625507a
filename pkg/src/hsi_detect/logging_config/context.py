"""Contextual logging support using contextvars.

A run binds its config hash, the command name and the current pipeline
stage; every log record emitted while the binding is active carries them.
"""

from __future__ import annotations

import contextvars
from typing import Any

_run_id: contextvars.ContextVar[str | None] = contextvars.ContextVar("run_id", default=None)
_command: contextvars.ContextVar[str | None] = contextvars.ContextVar("command", default=None)
_stage: contextvars.ContextVar[str | None] = contextvars.ContextVar("stage", default=None)
_custom_context: contextvars.ContextVar[dict[str, Any] | None] = contextvars.ContextVar(
    "custom_context", default=None
)

_NAMED = {"run_id": _run_id, "command": _command, "stage": _stage}


class LogContext:
    """Context manager for binding logging context."""

    def __init__(self, **kwargs: Any) -> None:
        """Initialize context with key-value pairs.

        Args:
            **kwargs: Context variables to bind
        """
        self.context_data = kwargs
        self._tokens: dict[str, contextvars.Token] = {}

    def __enter__(self) -> LogContext:
        """Bind context variables."""
        custom: dict[str, Any] = {}
        for key, value in self.context_data.items():
            if key in _NAMED:
                self._tokens[key] = _NAMED[key].set(value)
            else:
                custom[key] = value
        if custom:
            merged = dict(_custom_context.get() or {})
            merged.update(custom)
            self._tokens["custom"] = _custom_context.set(merged)
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        """Restore context variables."""
        for key, token in reversed(list(self._tokens.items())):
            if key == "custom":
                _custom_context.reset(token)
            else:
                _NAMED[key].reset(token)


def bind_context(**kwargs: Any) -> LogContext:
    """Create a context manager for binding logging context.

    Example:
        with bind_context(run_id="3f2a9c0e11b4d7aa", command="train-detector"):
            logger.info("Starting training")
    """
    return LogContext(**kwargs)


def stage(name: str) -> LogContext:
    """Create a context manager that binds the pipeline stage."""
    return LogContext(stage=name)


def clear_context() -> None:
    """Clear all context variables."""
    for var in _NAMED.values():
        var.set(None)
    _custom_context.set(None)


def get_context() -> dict[str, Any]:
    """Get current context data.

    Returns:
        Dictionary containing the bound context variables
    """
    context: dict[str, Any] = {}
    for key, var in _NAMED.items():
        value = var.get()
        if value is not None:
            context[key] = value

    custom_context = _custom_context.get()
    if custom_context:
        context.update(custom_context)

    return context
