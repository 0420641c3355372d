"""Deterministic file output: atomic writes, versioned schemas.

All floats are serialized with 17 significant digits, so identical
experiment configurations produce byte-identical artifacts.  Files are
written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Iterable

SCHEMA_PREFIX = "speciesmc"


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    if value is None:
        return ""
    return str(value)


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, payload: dict, schema: str) -> None:
    doc = dict(payload)
    doc.setdefault("schema", f"{SCHEMA_PREFIX}/{schema}")
    atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_csv(path: str, header: list[str], rows: Iterable[Iterable], schema: str) -> None:
    lines = [f"# schema: {SCHEMA_PREFIX}/{schema}", ",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path: str) -> tuple[str, list[str], list[list[str]]]:
    """(schema line, header, rows) of a package CSV."""
    with open(path) as fh:
        schema = fh.readline().strip().removeprefix("# schema: ")
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return schema, header, rows
