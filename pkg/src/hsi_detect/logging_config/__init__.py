"""Rich-based logging configuration for hsi-detect.

Console output goes through Rich; run logs are written as JSON lines with the
bound run context attached to every record.
"""

from .config import JsonFormatter
from .config import get_logger
from .config import log_operation_error
from .config import log_operation_start
from .config import log_operation_success
from .config import log_startup_info
from .config import setup_logging
from .context import LogContext
from .context import bind_context
from .context import clear_context
from .context import get_context
from .context import stage

__all__ = [
    "setup_logging",
    "get_logger",
    "JsonFormatter",
    "log_startup_info",
    "log_operation_start",
    "log_operation_success",
    "log_operation_error",
    "bind_context",
    "clear_context",
    "get_context",
    "stage",
    "LogContext",
]
