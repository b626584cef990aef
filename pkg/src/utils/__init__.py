# src/utils/__init__.py
"""Utilities module"""

from .helper import write_csv, write_json, write_text_atomic
from .logging import configure_logging
from .rng import block_generator, path_blocks

__all__ = [
    "write_csv",
    "write_json",
    "write_text_atomic",
    "configure_logging",
    "block_generator",
    "path_blocks",
]
