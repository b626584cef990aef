"""File output helpers: atomic writes, CSV tables and JSON documents."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Optional, Union

import pandas as pd

PathLike = Union[str, Path]


def write_text_atomic(path: PathLike, text: str) -> Path:
    """Write to a temp file next to `path`, then rename over it."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")


def write_csv(path: Optional[PathLike], frame: pd.DataFrame) -> str:
    """CSV text of the frame, written atomically when a path is given."""
    text = frame_to_csv(frame)
    if path is not None:
        write_text_atomic(path, text)
    return text


def dump_json(document: Any) -> str:
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def write_json(path: Optional[PathLike], document: Any) -> str:
    text = dump_json(document)
    if path is not None:
        write_text_atomic(path, text)
    return text
