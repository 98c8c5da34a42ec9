"""
Logging setup for GeoSeg sessions
"""

import logging
import logging.config
from pathlib import Path
from typing import Optional, Union

import yaml

from .config import settings

DEFAULT_LOGGING_CONFIG = Path(__file__).parent / "configs" / "logging.yml"


def configure_logging(
    level: Optional[str] = None, config_path: Optional[Union[str, Path]] = None
) -> None:
    """Load the YAML logging configuration and apply the requested root level."""
    path = Path(config_path or settings.log_config or DEFAULT_LOGGING_CONFIG)
    with open(path, encoding="utf-8") as f:
        logging.config.dictConfig(yaml.safe_load(f))

    root_level = (level or settings.log_level).upper()
    logging.getLogger().setLevel(root_level)
    if root_level == "DEBUG":
        logging.getLogger("geoseg").setLevel(logging.DEBUG)
        logging.getLogger("geoseg.autodiff").setLevel(logging.DEBUG)
        logging.getLogger("geoseg.harness").setLevel(logging.DEBUG)

    logging.getLogger(__name__).debug("Logging configured from %s", path)
