"""Deterministic JSON and CSV rendering.

Field order follows dict insertion order and floats are printed with 17
significant digits, so rerunning a command with the same inputs produces
byte-identical output.
"""

from __future__ import annotations

import json
import math

import numpy as np

__all__ = ["format_float", "render_json", "write_csv", "read_csv"]


def format_float(x: float) -> str:
    if isinstance(x, float) and not math.isfinite(x):
        raise ValueError("refusing to serialize a non-finite float")
    return format(float(x), ".17g")


def _render(obj, indent: int, out: list) -> None:
    pad = "  " * indent
    if obj is None or obj is True or obj is False:
        out.append("null" if obj is None else ("true" if obj is True else "false"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (key, value) in enumerate(items):
            if not isinstance(key, str):
                raise TypeError("JSON object keys must be strings")
            out.append(pad + "  " + json.dumps(key, ensure_ascii=False) + ": ")
            _render(value, indent + 1, out)
            out.append(",\n" if i + 1 < len(items) else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for i, value in enumerate(seq):
            out.append(pad + "  ")
            _render(value, indent + 1, out)
            out.append(",\n" if i + 1 < len(seq) else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def render_json(obj) -> str:
    out: list[str] = []
    _render(obj, 0, out)
    out.append("\n")
    return "".join(out)


def write_csv(matrix: np.ndarray, columns, path_or_handle) -> None:
    """Write a float matrix with a header row; floats use 17 significant digits."""
    matrix = np.asarray(matrix, dtype=float)
    columns = list(columns)
    if matrix.ndim != 2 or matrix.shape[1] != len(columns):
        raise ValueError("column names must match matrix width")
    lines = [",".join(columns)]
    for row in matrix:
        lines.append(",".join(format_float(v) for v in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_handle, "write"):
        path_or_handle.write(text)
    else:
        with open(path_or_handle, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def read_csv(path) -> tuple[np.ndarray, list[str]]:
    """Read a numeric CSV with a header row."""
    import csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float), [h.strip() for h in header]
