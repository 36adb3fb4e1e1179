"""Run configuration files and atomic CSV/JSON output."""
from __future__ import annotations

import json
import math
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

SCHEMA_FILE = "reports.schema.json"


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` text, UTF-8, ``#`` starts a comment.

    Keys are normalised to underscores so ``grid-t`` and ``grid_t`` agree.
    """
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def atomic_write_text(path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        atomic_write_text(path, text)


def table_csv(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def table_json(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    data = {"columns": list(columns), "rows": [[_jsonable(v) for v in row] for row in rows]}
    return json.dumps(data, indent=1) + "\n"


def write_table(path, columns, rows, fmt: str = "csv") -> None:
    rows = [list(r) for r in rows]
    emit(path, table_csv(columns, rows) if fmt == "csv" else table_json(columns, rows))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    columns = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return columns, data.reshape(-1, len(columns))


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def load_schema() -> dict:
    return json.loads(resources.files("bzpiii").joinpath("schemas", SCHEMA_FILE).read_text(encoding="utf-8"))
