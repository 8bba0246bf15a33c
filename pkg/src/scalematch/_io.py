"""Small file helpers: atomic text writes and deterministic JSON."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj: Any) -> str:
    # sort_keys + repr floats -> byte-identical output for identical input
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=True) + "\n"


def write_json(path: str | os.PathLike, obj: Any) -> None:
    atomic_write_text(path, dumps(obj))


def id_sort_key(value: Any) -> tuple:
    """Order ints before strings so mixed identifier spaces still sort."""
    return (isinstance(value, str), value)


def plain_number(value: float) -> int | float:
    value = float(value)
    return int(value) if value.is_integer() else value
