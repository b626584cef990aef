"""
Logging setup for the command-line entry point.

Library modules only create `logging.getLogger(__name__)` loggers; the
handlers are attached once here.
"""

import logging
import sys
from typing import Optional

from ..config import settings


def configure_logging(level: Optional[str] = None) -> None:
    """stderr always, plus settings.log_file when configured."""
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.log_file:
        handlers.append(logging.FileHandler(settings.log_file))
    logging.basicConfig(
        level=getattr(logging, (level or settings.log_level).upper()),
        format=settings.log_format,
        handlers=handlers,
        force=True,
    )
