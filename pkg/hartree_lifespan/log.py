import os
import logging

from logzero import setup_logger  # type: ignore[import]

DEFAULT_LEVEL = logging.INFO
LEVEL_ENV = "HARTREE_LIFESPAN_LOGS"

# global access to the logger
logger: logging.Logger


def env_level() -> int:
    """
    HARTREE_LIFESPAN_LOGS as a logging level; accepts numbers (10, 20) or names (debug, WARNING)
    """
    raw = os.environ.get(LEVEL_ENV, "").strip()
    if not raw:
        return DEFAULT_LEVEL
    if raw.isdigit():
        return int(raw)
    level = logging.getLevelName(raw.upper())
    if not isinstance(level, int):
        raise ValueError(f"{LEVEL_ENV}: unknown logging level {raw!r}")
    return level


# logzero reconfigures the existing handlers, so this can be called again
def setup(level: int | None = None) -> logging.Logger:
    lgr: logging.Logger = setup_logger(name=__package__, level=level or env_level())
    return lgr


logger = setup()
