"""
Plot-ready delimited text: `# key=value` header lines, then comma-separated
rows with floats in `%.10e`. Nothing in a data row depends on the clock.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigIOError, ParseError

FLOAT_FORMAT = "%.10e"


def format_float(value: float) -> str:
    if not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return FLOAT_FORMAT % value


def format_header_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if value is None:
        return "none"
    return str(value)


@dataclass(frozen=True)
class Table:
    columns: Sequence[str]
    data: np.ndarray  # (rows, len(columns))
    header: Dict[str, str] = field(default_factory=dict)

    def column(self, index: int) -> np.ndarray:
        return self.data[:, index]


def render_table(columns: Sequence[str], data, header: Mapping[str, object] | None = None,
                 comments: Sequence[str] = ()) -> str:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise ValueError(f"data shape {data.shape} does not match {len(columns)} columns")
    lines = [f"# {c}" for c in comments]
    lines += [f"# {k}={format_header_value(v)}" for k, v in (header or {}).items()]
    lines.append(",".join(columns))
    lines += [",".join(format_float(float(x)) for x in row) for row in data]
    return "\n".join(lines) + "\n"


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise ConfigIOError(path, e.strerror or str(e)) from e
    return path


def write_table(path: Path, columns: Sequence[str], data, header: Mapping[str, object] | None = None,
                comments: Sequence[str] = ()) -> Path:
    return write_text(path, render_table(columns, data, header, comments))


def read_table(path: Path, min_columns: int = 2) -> Table:
    """
    Numeric rows separated by commas or whitespace. `key=value` comment lines
    fill the header; a first non-numeric row is taken as column names.
    Any later row that does not parse raises ParseError with its line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigIOError(path, e.strerror or str(e)) from e

    header: Dict[str, str] = {}
    columns: Optional[list[str]] = None
    rows: list[list[float]] = []
    for line_no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                header[key.strip()] = value.strip()
            continue
        fields = [f for f in stripped.replace(",", " ").split()]
        try:
            values = [float(f) for f in fields]
        except ValueError:
            if columns is None and not rows:
                columns = fields
                continue
            raise ParseError(str(path), line_no, line) from None
        if len(values) < min_columns or (rows and len(values) != len(rows[0])):
            raise ParseError(str(path), line_no, line)
        rows.append(values)

    if not rows:
        raise ParseError(str(path), 0, "<no numeric rows>")
    data = np.asarray(rows, dtype=float)
    if columns is None or len(columns) != data.shape[1]:
        columns = [f"col{i}" for i in range(data.shape[1])]
    return Table(columns, data, header)
