"""
Logging configuration for odgae.
"""
import logging
import logging.handlers
import os
from typing import Any, Dict, List, Optional

# Custom log level below DEBUG, used for per-batch training chatter
TRACE_LEVEL_NUM = 5

LOG_FILE_NAME = "odgae.log"


def _install_trace_level() -> None:
    if hasattr(logging, "TRACE"):
        return
    logging.addLevelName(TRACE_LEVEL_NUM, "TRACE")

    def trace(self, message, *args, **kws):
        if self.isEnabledFor(TRACE_LEVEL_NUM):
            self._log(TRACE_LEVEL_NUM, message, args, **kws)

    logging.Logger.trace = trace  # type: ignore[attr-defined]
    logging.TRACE = TRACE_LEVEL_NUM  # type: ignore[attr-defined]


_install_trace_level()


def setup_logging(config: Dict[str, Any]) -> logging.Logger:
    """Configure logging based on the run configuration.

    Args:
        config: Run configuration; reads ``log_level`` and ``log_dir``.
            An empty or missing ``log_dir`` disables the file handler.

    Returns:
        The ``odgae`` logger.
    """
    log_level_str = str(config.get("log_level", "INFO")).upper()
    if log_level_str == "TRACE":
        log_level = TRACE_LEVEL_NUM
    else:
        log_level = getattr(logging, log_level_str, logging.INFO)
        if not isinstance(log_level, int):
            log_level = logging.INFO

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    # Console handler (stderr)
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    log_dir = config.get("log_dir", "logs")
    if log_dir:
        log_dir = os.path.expanduser(str(log_dir))
        try:
            os.makedirs(log_dir, exist_ok=True)
            # 10MB per file, keep 5 backups
            file_handler = logging.handlers.RotatingFileHandler(
                os.path.join(log_dir, LOG_FILE_NAME),
                maxBytes=10 * 1024 * 1024,
                backupCount=5,
                encoding="utf-8",
            )
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)
        except OSError as e:
            root_logger.warning("File logging disabled (%s); logging to console only", e)

    logger = logging.getLogger("odgae")
    logger.info("Logging initialized at level %s", logging.getLevelName(log_level))
    logger.debug("Debug logging enabled")
    logger.trace("Trace logging enabled")  # type: ignore[attr-defined]
    return logger


def get_logger(name: str) -> logging.Logger:
    """Get a logger below the ``odgae`` namespace.

    Args:
        name: Short module name, e.g. ``"training"``.
    """
    if name == "odgae" or name.startswith("odgae."):
        return logging.getLogger(name)
    return logging.getLogger(f"odgae.{name}")


class LogCapture:
    """Context manager for capturing log records during tests."""

    def __init__(self, logger_name: Optional[str] = "odgae", level: int = logging.DEBUG):
        self.logger = logging.getLogger(logger_name)
        self.level = level
        self.original_level = self.logger.level
        self.handler: Optional[_LogCaptureHandler] = None
        self.records: List[logging.LogRecord] = []

    def __enter__(self) -> "LogCapture":
        self.original_level = self.logger.level
        self.logger.setLevel(self.level)
        self.handler = _LogCaptureHandler(self.records)
        self.handler.setLevel(self.level)
        self.logger.addHandler(self.handler)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.handler:
            self.logger.removeHandler(self.handler)
        self.logger.setLevel(self.original_level)

    @property
    def output(self) -> str:
        """Captured messages joined by newlines."""
        return "\n".join(record.getMessage() for record in self.records)

    def messages_at(self, level: int) -> List[str]:
        return [r.getMessage() for r in self.records if r.levelno == level]


class _LogCaptureHandler(logging.Handler):
    """Handler that appends records to a list."""

    def __init__(self, records: List[logging.LogRecord]):
        super().__init__()
        self.records = records

    def emit(self, record: logging.LogRecord) -> None:
        self.records.append(record)
