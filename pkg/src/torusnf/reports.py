"""Deterministic report and CSV emission with atomic writes."""

from __future__ import annotations

import os
import tempfile

__all__ = ["write_atomic", "format_float", "csv_lines"]


def format_float(v: float) -> str:
    return f"{float(v):.17g}"


def write_atomic(path, text: str) -> None:
    """Write text via a temporary file and rename, so partial files never appear."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def csv_lines(header: str, rows) -> str:
    """Join header and iterable of pre-formatted row strings."""
    return header + "\n" + "\n".join(rows) + "\n"
