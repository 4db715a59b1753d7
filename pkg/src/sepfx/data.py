"""Dataset containers and CSV ingestion for four-arm and two-arm designs.

A four-arm dataset carries two binary treatment columns: one routed to the
outcome (``a_y``) and one routed to the mediators (``a_m``).  A two-arm
dataset carries a single binary treatment that plays both roles.  Loaders
are strict: every cell must parse as a finite number, treatments must be
exactly 0 or 1, and missing values are rejected rather than imputed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    EmptyDataset,
    EmptySubset,
    MissingColumn,
    NonBinaryTreatment,
    NonNumericCell,
)

DEFAULT_MIN_CELL = 20


@dataclass(frozen=True)
class ColumnMap:
    """Mapping from logical roles to CSV column names.

    Mediator and covariate columns are discovered by prefix unless explicit
    name lists are given.  Prefix discovery skips the named special columns,
    so a treatment column called ``aM`` is never mistaken for a mediator.
    """

    outcome: str = "y"
    a_y: str = "aY"
    a_m: str = "aM"
    a: str = "a"
    mediator_prefix: str = "m"
    covariate_prefix: str = "x"
    mediators: tuple[str, ...] | None = None
    covariates: tuple[str, ...] | None = None

    def special_names(self, design: str) -> tuple[str, ...]:
        if design == "four-arm":
            return (self.outcome, self.a_y, self.a_m)
        return (self.outcome, self.a)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


def _check_binary(values: np.ndarray, name: str) -> np.ndarray:
    bad = ~np.isin(values, (0, 1))
    if bad.any():
        idx = int(np.nonzero(bad)[0][0])
        raise NonBinaryTreatment(
            f"column {name!r} must contain only 0/1; row {idx} has {values[idx]!r}"
        )
    return values.astype(np.int64)


def _check_matrix(arr: np.ndarray, name: str, n: int) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape[0] != n:
        raise DataError(f"{name} has {arr.shape[0]} rows, expected {n}")
    if not np.isfinite(arr).all():
        raise NonNumericCell(f"{name} contains non-finite values")
    return arr


def _default_names(prefix: str, count: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{j + 1}" for j in range(count))


@dataclass(frozen=True)
class FourArmDataset:
    """Immutable four-arm dataset with separate outcome/mediator treatments."""

    y: np.ndarray
    a_y: np.ndarray
    a_m: np.ndarray
    m: np.ndarray
    x: np.ndarray
    outcome_name: str = "y"
    a_y_name: str = "aY"
    a_m_name: str = "aM"
    mediator_names: tuple[str, ...] = ()
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        n = y.shape[0]
        if n == 0:
            raise EmptyDataset("dataset has no rows")
        if not np.isfinite(y).all():
            raise NonNumericCell("outcome contains non-finite values")
        a_y = _check_binary(np.asarray(self.a_y).ravel(), self.a_y_name)
        a_m = _check_binary(np.asarray(self.a_m).ravel(), self.a_m_name)
        if a_y.shape[0] != n or a_m.shape[0] != n:
            raise DataError("treatment columns must match outcome length")
        m = _check_matrix(self.m, "mediator block", n)
        x = _check_matrix(self.x, "covariate block", n)
        med_names = self.mediator_names or _default_names("m", m.shape[1])
        cov_names = self.covariate_names or _default_names("x", x.shape[1])
        if len(med_names) != m.shape[1] or len(cov_names) != x.shape[1]:
            raise DataError("column name lists must match matrix widths")
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "a_y", _freeze(a_y))
        object.__setattr__(self, "a_m", _freeze(a_m))
        object.__setattr__(self, "m", _freeze(m))
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "mediator_names", tuple(med_names))
        object.__setattr__(self, "covariate_names", tuple(cov_names))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_mediators(self) -> int:
        return self.m.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.x.shape[1]

    def arm_counts(self) -> dict[tuple[int, int], int]:
        return {
            (i, j): int(np.sum((self.a_y == i) & (self.a_m == j)))
            for i in (0, 1)
            for j in (0, 1)
        }

    def column_names(self) -> tuple[str, ...]:
        return (
            self.outcome_name,
            self.a_y_name,
            self.a_m_name,
            *self.mediator_names,
            *self.covariate_names,
        )


@dataclass(frozen=True)
class TwoArmDataset:
    """Immutable two-arm dataset: one treatment feeds outcome and mediators."""

    y: np.ndarray
    a: np.ndarray
    m: np.ndarray
    x: np.ndarray
    outcome_name: str = "y"
    a_name: str = "a"
    mediator_names: tuple[str, ...] = ()
    covariate_names: tuple[str, ...] = ()
    source_rows: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        n = y.shape[0]
        if n == 0:
            raise EmptyDataset("dataset has no rows")
        if not np.isfinite(y).all():
            raise NonNumericCell("outcome contains non-finite values")
        a = _check_binary(np.asarray(self.a).ravel(), self.a_name)
        if a.shape[0] != n:
            raise DataError("treatment column must match outcome length")
        m = _check_matrix(self.m, "mediator block", n)
        x = _check_matrix(self.x, "covariate block", n)
        med_names = self.mediator_names or _default_names("m", m.shape[1])
        cov_names = self.covariate_names or _default_names("x", x.shape[1])
        if len(med_names) != m.shape[1] or len(cov_names) != x.shape[1]:
            raise DataError("column name lists must match matrix widths")
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "a", _freeze(a))
        object.__setattr__(self, "m", _freeze(m))
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "mediator_names", tuple(med_names))
        object.__setattr__(self, "covariate_names", tuple(cov_names))
        if self.source_rows is not None:
            rows = np.asarray(self.source_rows, dtype=np.int64).ravel()
            if rows.shape[0] != n:
                raise DataError("source_rows must match dataset length")
            object.__setattr__(self, "source_rows", _freeze(rows))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_mediators(self) -> int:
        return self.m.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.x.shape[1]

    def arm_counts(self) -> dict[int, int]:
        return {level: int(np.sum(self.a == level)) for level in (0, 1)}

    def column_names(self) -> tuple[str, ...]:
        return (
            self.outcome_name,
            self.a_name,
            *self.mediator_names,
            *self.covariate_names,
        )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`: counts and human-readable warnings."""

    schema_ok: bool
    arm_counts: dict
    warnings: tuple[str, ...] = ()


def _read_table(source) -> tuple[list[str], list[list[str]]]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            return _read_table(handle)
    if isinstance(source, (bytes, bytearray)):
        return _read_table(io.StringIO(source.decode("utf-8")))
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyDataset("input has no header row") from None
    header = [name.strip() for name in header]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(cell.strip() == "" for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(
                f"line {lineno}: expected {len(header)} fields, found {len(row)}"
            )
        rows.append([cell.strip() for cell in row])
    if not rows:
        raise EmptyDataset("input has a header but no data rows")
    return header, rows


def _parse_column(rows: list[list[str]], col: int, name: str) -> np.ndarray:
    out = np.empty(len(rows), dtype=np.float64)
    for i, row in enumerate(rows):
        cell = row[col]
        try:
            value = float(cell)
        except ValueError:
            raise NonNumericCell(
                f"row {i + 1}, column {name!r}: cannot parse {cell!r}"
            ) from None
        if not np.isfinite(value):
            raise NonNumericCell(
                f"row {i + 1}, column {name!r}: non-finite value {cell!r}"
            )
        out[i] = value
    return out


def _resolve_columns(
    header: list[str], schema: ColumnMap, design: str
) -> tuple[dict[str, int], list[str], list[str]]:
    special = schema.special_names(design)
    positions = {}
    for name in special:
        if name not in header:
            raise MissingColumn(f"required column {name!r} not found in header")
        positions[name] = header.index(name)

    def discover(prefix: str, explicit: tuple[str, ...] | None, role: str) -> list[str]:
        if explicit is not None:
            for name in explicit:
                if name not in header:
                    raise MissingColumn(f"{role} column {name!r} not found in header")
            return list(explicit)
        found = [c for c in header if c.startswith(prefix) and c not in special]
        if not found:
            raise MissingColumn(
                f"no {role} columns found (prefix {prefix!r}); "
                f"pass explicit names to override"
            )
        return found

    mediators = discover(schema.mediator_prefix, schema.mediators, "mediator")
    covariates = discover(schema.covariate_prefix, schema.covariates, "covariate")
    overlap = set(mediators) & set(covariates)
    if overlap:
        raise DataError(f"columns claimed as both mediator and covariate: {sorted(overlap)}")
    return positions, mediators, covariates


def load_four_arm(source, schema: ColumnMap | None = None) -> FourArmDataset:
    """Load a four-arm dataset from a CSV path, byte string, or file object.

    Parameters
    ----------
    source:
        Path, UTF-8 byte string, or text file object positioned at a header
        row.
    schema:
        Column mapping; defaults expect ``y``, ``aY``, ``aM``, mediator
        columns starting with ``m`` and covariate columns starting with
        ``x``.

    Raises
    ------
    MissingColumn, NonBinaryTreatment, NonNumericCell, EmptyDataset
    """
    schema = schema or ColumnMap()
    header, rows = _read_table(source)
    positions, mediators, covariates = _resolve_columns(header, schema, "four-arm")
    y = _parse_column(rows, positions[schema.outcome], schema.outcome)
    a_y = _parse_column(rows, positions[schema.a_y], schema.a_y)
    a_m = _parse_column(rows, positions[schema.a_m], schema.a_m)
    for name, col in ((schema.a_y, a_y), (schema.a_m, a_m)):
        _check_binary(col, name)
    m = np.column_stack([_parse_column(rows, header.index(c), c) for c in mediators])
    x = np.column_stack([_parse_column(rows, header.index(c), c) for c in covariates])
    return FourArmDataset(
        y=y,
        a_y=a_y.astype(np.int64),
        a_m=a_m.astype(np.int64),
        m=m,
        x=x,
        outcome_name=schema.outcome,
        a_y_name=schema.a_y,
        a_m_name=schema.a_m,
        mediator_names=tuple(mediators),
        covariate_names=tuple(covariates),
    )


def load_two_arm(source, schema: ColumnMap | None = None) -> TwoArmDataset:
    """Load a two-arm dataset; same contract as :func:`load_four_arm`."""
    schema = schema or ColumnMap()
    header, rows = _read_table(source)
    positions, mediators, covariates = _resolve_columns(header, schema, "two-arm")
    y = _parse_column(rows, positions[schema.outcome], schema.outcome)
    a = _parse_column(rows, positions[schema.a], schema.a)
    _check_binary(a, schema.a)
    m = np.column_stack([_parse_column(rows, header.index(c), c) for c in mediators])
    x = np.column_stack([_parse_column(rows, header.index(c), c) for c in covariates])
    return TwoArmDataset(
        y=y,
        a=a.astype(np.int64),
        m=m,
        x=x,
        outcome_name=schema.outcome,
        a_name=schema.a,
        mediator_names=tuple(mediators),
        covariate_names=tuple(covariates),
    )


def _format_value(value: float) -> str:
    # repr of a Python float is the shortest string that round-trips exactly
    return repr(float(value))


def save_four_arm(ds: FourArmDataset, target) -> None:
    """Write a four-arm dataset as CSV; values round-trip bit-exactly."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            save_four_arm(ds, handle)
        return
    writer = csv.writer(target)
    writer.writerow(ds.column_names())
    for i in range(ds.n):
        writer.writerow(
            [
                _format_value(ds.y[i]),
                str(int(ds.a_y[i])),
                str(int(ds.a_m[i])),
                *(_format_value(v) for v in ds.m[i]),
                *(_format_value(v) for v in ds.x[i]),
            ]
        )


def save_two_arm(ds: TwoArmDataset, target) -> None:
    """Write a two-arm dataset as CSV; values round-trip bit-exactly."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            save_two_arm(ds, handle)
        return
    writer = csv.writer(target)
    writer.writerow(ds.column_names())
    for i in range(ds.n):
        writer.writerow(
            [
                _format_value(ds.y[i]),
                str(int(ds.a[i])),
                *(_format_value(v) for v in ds.m[i]),
                *(_format_value(v) for v in ds.x[i]),
            ]
        )


def restrict_to_two_arm(ds: FourArmDataset) -> TwoArmDataset:
    """Keep the rows whose two treatments agree, collapsing them to one arm.

    The returned dataset records the original row indices in
    ``source_rows`` so per-row quantities can be mapped back to the
    four-arm sample.

    Raises
    ------
    EmptySubset
        If no row has matching treatment assignments.
    """
    keep = np.nonzero(ds.a_y == ds.a_m)[0]
    if keep.size == 0:
        raise EmptySubset("no rows with matching treatment assignments")
    return TwoArmDataset(
        y=ds.y[keep],
        a=ds.a_y[keep],
        m=ds.m[keep],
        x=ds.x[keep],
        outcome_name=ds.outcome_name,
        a_name=ds.a_y_name,
        mediator_names=ds.mediator_names,
        covariate_names=ds.covariate_names,
        source_rows=keep,
    )


def validate(
    ds: FourArmDataset | TwoArmDataset, min_cell: int = DEFAULT_MIN_CELL
) -> ValidationReport:
    """Report arm counts and warn about empty or thin cells; never raises."""
    counts = ds.arm_counts()
    warnings: list[str] = []
    for cell, count in sorted(counts.items()):
        label = f"arm {cell}" if isinstance(cell, int) else f"arm {cell!r}"
        if count == 0:
            warnings.append(f"{label} is empty")
        elif count < min_cell:
            warnings.append(f"{label} has only {count} rows (min {min_cell})")
    return ValidationReport(
        schema_ok=True, arm_counts=counts, warnings=tuple(warnings)
    )
