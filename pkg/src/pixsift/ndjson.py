"""Minimal NDJSON helpers used by every ingestion path."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import IoError, ParseError


def iter_ndjson(path: str | Path) -> Iterator[dict]:
    """Yield one parsed object per non-empty line of an NDJSON file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise ParseError(f"{path}:{lineno}: expected an object, got {type(obj).__name__}")
        yield obj


def write_ndjson(path: str | Path, objects: Iterable[dict]) -> None:
    """Write objects one per line. Key order inside each object is preserved."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as fh:
            for obj in objects:
                fh.write(json.dumps(obj, ensure_ascii=False, allow_nan=False))
                fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def require_keys(obj: dict, keys: Iterable[str], where: str) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise ParseError(f"{where}: missing keys {missing}")


def as_finite_float(value: Any, where: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: not a number: {value!r}") from exc
    if out != out or out in (float("inf"), float("-inf")):
        raise ParseError(f"{where}: non-finite value")
    return out
