"""Compositional count-table ingestion.

Turns a delimited table of per-sample counts into log-relative abundances
against a reference column: columns observed in too few samples are dropped,
every retained count is offset by a pseudocount, divided by the reference
count and logged, and rows are sorted by a covariate (e.g. age).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyAfterFilter,
    MissingColumn,
    ReferenceHasZeros,
    UserInputError,
)

__all__ = ["IngestConfig", "IngestResult", "ingest"]


@dataclass(frozen=True)
class IngestConfig:
    """Ingestion settings.

    Every column other than ``sort_by`` is treated as a count column; the
    reference column must be strictly positive in every sample and is
    excluded from the output.
    """

    input: str
    reference_column: str
    sort_by: str
    prevalence_threshold: float = 0.35
    pseudocount: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.prevalence_threshold <= 1.0:
            raise UserInputError("prevalence threshold must lie in (0, 1]")
        if self.pseudocount < 0.0:
            raise UserInputError("pseudocount must be nonnegative")
        if self.reference_column == self.sort_by:
            raise UserInputError("reference and sort columns must differ")


@dataclass(frozen=True)
class IngestResult:
    matrix: np.ndarray          # samples x retained columns, log ratios
    columns: list[str]          # retained count columns (reference excluded)
    sort_values: np.ndarray     # covariate values in output row order
    dropped: list[str]          # count columns removed by the prevalence filter

    def metadata(self, cfg: IngestConfig) -> dict:
        return {
            "samples": int(self.matrix.shape[0]),
            "columns": int(self.matrix.shape[1]),
            "reference_column": cfg.reference_column,
            "sort_by": cfg.sort_by,
            "prevalence_threshold": cfg.prevalence_threshold,
            "pseudocount": cfg.pseudocount,
            "dropped_columns": len(self.dropped),
        }


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise UserInputError(f"{path}: empty file") from None
            rows = [row for row in reader if row]
    except OSError as exc:
        raise UserInputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise UserInputError(f"{path}: no data rows")
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise UserInputError(f"{path}: row {i + 2} has {len(row)} fields, expected {width}")
    return header, rows


def ingest(cfg: IngestConfig) -> IngestResult:
    """Load, filter and log-ratio-transform a count table.

    Raises :class:`MissingColumn` when the reference or sort column is
    absent, :class:`ReferenceHasZeros` when the reference is not strictly
    positive everywhere, and :class:`EmptyAfterFilter` when no count column
    survives the prevalence filter.
    """
    header, raw_rows = _read_table(cfg.input)
    for name in (cfg.reference_column, cfg.sort_by):
        if name not in header:
            raise MissingColumn(f"column {name!r} not found in {cfg.input}")
    col_index = {name: i for i, name in enumerate(header)}

    def _parse(row: list[str], name: str) -> float:
        text = row[col_index[name]]
        try:
            return float(text)
        except ValueError:
            raise UserInputError(f"non-numeric value {text!r} in column {name!r}") from None

    count_names = [h for h in header if h != cfg.sort_by]
    n = len(raw_rows)
    counts = np.array([[_parse(row, name) for name in count_names] for row in raw_rows])
    sort_values = np.array([_parse(row, cfg.sort_by) for row in raw_rows])

    ref_pos = count_names.index(cfg.reference_column)
    ref = counts[:, ref_pos]
    if np.any(ref <= 0.0):
        bad = int(np.flatnonzero(ref <= 0.0)[0])
        raise ReferenceHasZeros(
            f"reference column {cfg.reference_column!r} is not positive in sample {bad + 1}"
        )

    prevalence = (counts > 0.0).mean(axis=0)
    keep = [
        i for i, name in enumerate(count_names)
        if name != cfg.reference_column and prevalence[i] >= cfg.prevalence_threshold
    ]
    dropped = [
        count_names[i] for i in range(len(count_names))
        if i != ref_pos and i not in keep
    ]
    if not keep:
        raise EmptyAfterFilter(
            f"no count columns reach prevalence {cfg.prevalence_threshold:g} in {n} samples"
        )

    with np.errstate(divide="raise"):
        z = np.log((counts[:, keep] + cfg.pseudocount) / (ref[:, None] + cfg.pseudocount))

    order = np.argsort(sort_values, kind="stable")
    return IngestResult(
        matrix=z[order],
        columns=[count_names[i] for i in keep],
        sort_values=sort_values[order],
        dropped=dropped,
    )
