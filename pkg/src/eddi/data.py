"""CSV ingestion, seeded splits, and train-statistic scaling.

Continuous columns are min-max scaled to [0, 1] using statistics computed
from the training split only; the fitted ranges are written back into the
schema (each variable's lo/hi) so raw-unit values can be scaled and
unscaled later, e.g. by the questionnaire service. Test rows never touch
the statistics; test values falling outside the training range are
clipped to the unit interval.

Missing cells are empty strings in CSV and NaN in memory.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, IngestionError
from .model import KINDS, Variable, VariableSchema
from .rng import TAG_SPLIT, SeedKey


@dataclass(frozen=True)
class Provenance:
    path: str
    seed: int
    role: str  # "train" or "test"
    test_fraction: float


@dataclass(frozen=True)
class Dataset:
    schema: VariableSchema
    rows: np.ndarray  # (N, D), NaN marks missing
    provenance: Provenance

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2 or rows.shape[1] != self.schema.n_variables:
            raise DataError(
                f"data shape {rows.shape} does not match the {self.schema.n_variables}-variable schema"
            )
        if rows.shape[0] < 1:
            raise DataError("dataset has no rows")
        present = ~np.isnan(rows)
        for j in self.schema.continuous_indices:
            vals = rows[present[:, j], j]
            if vals.size and (vals.min() < -1e-9 or vals.max() > 1.0 + 1e-9):
                raise DataError(
                    f"column {self.schema.variables[j].name!r} has values outside [0, 1] after scaling"
                )
        for j in self.schema.binary_indices:
            vals = rows[present[:, j], j]
            if vals.size and not np.all((vals == 0.0) | (vals == 1.0)):
                raise DataError(
                    f"binary column {self.schema.variables[j].name!r} has non 0/1 values"
                )

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])


def load_schema(path: str | Path) -> VariableSchema:
    try:
        raw = json.loads(Path(path).read_text())
        return VariableSchema.from_json_dict(raw)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a schema file ({exc})") from exc


def save_schema(schema: VariableSchema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_json_dict(), indent=1, sort_keys=True))


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train, test) row indices; same seed, same split."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test fraction must lie strictly between 0 and 1")
    perm = SeedKey(seed, TAG_SPLIT).generator().permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _read_table(path: str | Path, schema: VariableSchema) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        names = [v.name for v in schema.variables]
        known = set(names)
        for col in header:
            if col not in known:
                raise IngestionError(f"{path}: unknown column {col!r}")
        missing = [n for n in names if n not in header]
        if missing:
            raise IngestionError(f"{path}: columns {missing} absent from header")
        order = [header.index(n) for n in names]
        rows = []
        for line_no, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise IngestionError(f"{path}: row {line_no} has {len(record)} cells")
            out = np.empty(len(names))
            for j, src in enumerate(order):
                cell = record[src].strip()
                if cell == "":
                    out[j] = np.nan
                    continue
                try:
                    out[j] = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path}: row {line_no}, column {names[j]!r}: non-numeric cell {cell!r}"
                    ) from None
            rows.append(out)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    return np.array(rows)


def ingest_csv(
    path: str | Path,
    schema: VariableSchema,
    test_fraction: float = 0.10,
    seed: int = 0,
) -> tuple[Dataset, Dataset | None]:
    """Read, split, fit scaling on the training split, scale both splits.

    Returns (train, test); test is None when the rounded test count is 0.
    Both datasets share a schema whose continuous lo/hi are the fitted
    training ranges.
    """
    raw = _read_table(path, schema)
    train_idx, test_idx = split_indices(raw.shape[0], test_fraction, seed)
    names = [v.name for v in schema.variables]

    fitted = []
    for j, var in enumerate(schema.variables):
        if var.kind != "continuous":
            fitted.append(var)
            continue
        vals = raw[train_idx, j]
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            raise IngestionError(f"{path}: column {names[j]!r} has no training values")
        lo, hi = float(vals.min()), float(vals.max())
        if hi <= lo:
            raise IngestionError(f"{path}: constant continuous column {names[j]!r}")
        fitted.append(dataclasses.replace(var, lo=lo, hi=hi))
    scaled_schema = VariableSchema(tuple(fitted))

    scaled = raw.copy()
    for j, var in enumerate(scaled_schema.variables):
        col = raw[:, j]
        present = ~np.isnan(col)
        if var.kind == "continuous":
            scaled[present, j] = np.clip((col[present] - var.lo) / (var.hi - var.lo), 0.0, 1.0)
        else:
            bad = present & ~((col == 0.0) | (col == 1.0))
            if bad.any():
                line = int(np.flatnonzero(bad)[0]) + 2
                raise IngestionError(
                    f"{path}: row {line}, column {names[j]!r}: binary cell must be 0 or 1"
                )

    train = Dataset(
        scaled_schema,
        scaled[train_idx],
        Provenance(str(path), seed, "train", test_fraction),
    )
    test = None
    if test_idx.size:
        test = Dataset(
            scaled_schema,
            scaled[test_idx],
            Provenance(str(path), seed, "test", test_fraction),
        )
    return train, test


def scale_rows(raw: np.ndarray, schema: VariableSchema) -> np.ndarray:
    """Scale raw-unit rows with the ranges already fitted into a schema.

    Used when evaluating new data against a trained model: the model's
    lo/hi are authoritative, out-of-range values clip to [0, 1].
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != schema.n_variables:
        raise DataError(
            f"data shape {raw.shape} does not match the {schema.n_variables}-variable schema"
        )
    scaled = raw.copy()
    for j, var in enumerate(schema.variables):
        col = raw[:, j]
        present = ~np.isnan(col)
        if var.kind == "continuous":
            scaled[present, j] = np.clip((col[present] - var.lo) / (var.hi - var.lo), 0.0, 1.0)
        elif not np.all((col[present] == 0.0) | (col[present] == 1.0)):
            raise DataError(f"binary column {var.name!r} has non 0/1 values")
    return scaled


def export_csv(dataset: Dataset, path: str | Path) -> None:
    """Write rows back in raw units; missing values become empty cells."""
    schema = dataset.schema
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([v.name for v in schema.variables])
        for row in dataset.rows:
            record = []
            for j, var in enumerate(schema.variables):
                if np.isnan(row[j]):
                    record.append("")
                elif var.kind == "continuous":
                    record.append(repr(float(var.lo + row[j] * (var.hi - var.lo))))
                else:
                    record.append(repr(float(row[j])))
            writer.writerow(record)


def write_raw_csv(path: str | Path, schema: VariableSchema, rows: np.ndarray) -> None:
    """Write an unscaled (raw-unit) table for later ingestion."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([v.name for v in schema.variables])
        for row in np.asarray(rows):
            writer.writerow(["" if np.isnan(v) else repr(float(v)) for v in row])
