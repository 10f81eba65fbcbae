"""Initializes logging
"""

from logging import INFO, Handler, Logger, getLevelName, getLogger
from logging.config import dictConfig
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

from src.config import config

# global logger
LOGGER: Logger = getLogger(config.get("project_name", "koopman_qlearning"))


def resolve_level(loglevel: Union[int, str, None]) -> int:
    """Accepts 10, "DEBUG" or "debug"; falls back to INFO"""

    if isinstance(loglevel, int):
        return loglevel
    if loglevel:
        level = getLevelName(str(loglevel).upper())
        if isinstance(level, int):
            return level
    return INFO


def setup_logger(loglevel: Union[int, str, None] = None) -> Optional[Handler]:
    """
    Applies the dictConfig from config.yaml and sets the project logger level
    (KQL_LOG overrides the configured default).

    Returns:
        The rotating file handler, to be passed to close_handler at exit.
    """

    logging_config = config.get("logging")
    if logging_config:
        logfile = logging_config.get("handlers", {}).get("logfile")
        if logfile:
            Path(logfile["filename"]).parent.mkdir(parents=True, exist_ok=True)
        if hasattr(logging_config, "to_dict"):
            logging_config = logging_config.to_dict()
        dictConfig(logging_config)

    if loglevel is None:
        loglevel = config.get("log")
    LOGGER.setLevel(resolve_level(loglevel))

    return next(
        (h for h in LOGGER.handlers if isinstance(h, RotatingFileHandler)), None
    )


def close_handler(handler: Optional[Handler]) -> None:
    """
    Closes logger handler
    """

    if handler is None:
        return
    handler.close()
    LOGGER.removeHandler(handler)
