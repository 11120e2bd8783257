"""Config-file loading, flag overrides and environment settings."""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values, load_dotenv

from core.exceptions import ParameterError
from models.config import TrainConfig

logger = logging.getLogger(__name__)

THREADS_ENV = "IBINET_THREADS"


def read_config_file(path: Optional[Union[str, Path]]) -> Dict[str, Any]:
    """Flat `key=value` pairs from a config file; an absent path means no values."""
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"Config file {path} does not exist")
    values = dotenv_values(path, encoding="utf-8")
    empty = [key for key, value in values.items() if value is None or value == ""]
    if empty:
        raise ParameterError(f"{path}: keys without a value: {', '.join(empty)}")
    return dict(values)


def resolve_train_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> TrainConfig:
    """
    Merge the config file with command-line overrides.

    Overrides that are None were not given on the command line and leave the
    file value (or the model default) in place.
    """
    values = read_config_file(path)
    values.update({key: value for key, value in overrides.items() if value is not None})
    config = TrainConfig.from_flat(values)
    logger.debug(f"Resolved training config: {config.to_flat()}")
    return config


def thread_count(env_file: Optional[Union[str, Path]] = None) -> int:
    """Worker-thread cap from IBINET_THREADS (optionally loaded from a .env file); default 1."""
    load_dotenv(env_file, override=False)
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError as e:
        raise ParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}") from e
    if threads < 1:
        raise ParameterError(f"{THREADS_ENV} must be >= 1, got {threads}")
    return threads
