"""Covariate/response datasets: schema, CSV round trip, encoding, splits.

A dataset is a pair of float64 matrices (X for covariates, Y for
responses) plus a column schema describing what each original CSV
column was.  Categorical covariates are carried as level indices until
:func:`one_hot` expands them to indicator columns; responses must be
continuous.  Every dataset carries a provenance string so downstream
code can refuse to mix estimates and truths from different sources.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .ioutil import atomic_write_text

__all__ = [
    "ColumnSchema",
    "PairedDataset",
    "load_schema",
    "save_schema",
    "schema_from_dict",
    "schema_to_dict",
    "load_csv",
    "save_csv",
    "one_hot",
    "split",
]

KINDS = ("continuous", "categorical")
ROLES = ("covariate", "response")

# Tokens rejected in numeric cells no matter how the float parser feels
# about them.
_NON_FINITE_TOKENS = {"nan", "inf", "-inf", "+inf", "infinity", "-infinity", "+infinity"}


@dataclass(frozen=True)
class ColumnSchema:
    """One CSV column: name, kind, role, and levels when categorical.

    ``encoded`` marks a categorical column whose dataset representation
    has already been expanded to one indicator column per level.
    """

    name: str
    kind: str
    role: str
    levels: tuple[str, ...] | None = None
    encoded: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise ValueError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind == "categorical":
            if not self.levels:
                raise ValueError(f"categorical column {self.name!r} needs levels")
            object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
            if len(set(self.levels)) != len(self.levels):
                raise ValueError(f"categorical column {self.name!r} has duplicate levels")
            if self.role == "response":
                raise ValueError(f"response column {self.name!r} must be continuous")
        else:
            if self.levels is not None:
                raise ValueError(f"continuous column {self.name!r} must not list levels")
            if self.encoded:
                raise ValueError(f"continuous column {self.name!r} cannot be encoded")

    @property
    def width(self) -> int:
        """Number of matrix columns this schema column occupies."""
        if self.kind == "categorical" and self.encoded:
            return len(self.levels)
        return 1


def _role_width(schema: tuple[ColumnSchema, ...], role: str) -> int:
    return sum(c.width for c in schema if c.role == role)


@dataclass(frozen=True)
class PairedDataset:
    """n paired observations: X is (n, d) covariates, Y is (n, q) responses."""

    X: np.ndarray
    Y: np.ndarray
    schema: tuple[ColumnSchema, ...]
    provenance: str

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "schema", tuple(self.schema))
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("X and Y must be 2-D arrays")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"row counts differ: X has {X.shape[0]}, Y has {Y.shape[0]}")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
            raise ValueError("dataset contains non-finite entries")
        want_d = _role_width(self.schema, "covariate")
        want_q = _role_width(self.schema, "response")
        if X.shape[1] != want_d:
            raise ValueError(f"X has {X.shape[1]} columns, schema implies {want_d}")
        if Y.shape[1] != want_q:
            raise ValueError(f"Y has {Y.shape[1]} columns, schema implies {want_q}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]


# ---------------------------------------------------------------------------
# Schema sidecar (JSON).

def schema_to_dict(schema: tuple[ColumnSchema, ...]) -> dict:
    cols = []
    for c in schema:
        entry = {"name": c.name, "kind": c.kind, "role": c.role}
        if c.kind == "categorical":
            entry["levels"] = list(c.levels)
        cols.append(entry)
    return {"columns": cols}


def schema_from_dict(payload: dict) -> tuple[ColumnSchema, ...]:
    try:
        cols = payload["columns"]
    except (KeyError, TypeError):
        raise ValueError("schema JSON must contain a 'columns' list") from None
    out = []
    for entry in cols:
        out.append(
            ColumnSchema(
                name=entry["name"],
                kind=entry["kind"],
                role=entry["role"],
                levels=tuple(entry["levels"]) if "levels" in entry else None,
            )
        )
    return tuple(out)


def save_schema(schema: tuple[ColumnSchema, ...], path: str) -> None:
    atomic_write_text(path, json.dumps(schema_to_dict(schema), indent=2) + "\n")


def load_schema(path: str) -> tuple[ColumnSchema, ...]:
    with open(path, "r", encoding="utf-8") as fh:
        return schema_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# CSV round trip.

def load_csv(path: str, schema: tuple[ColumnSchema, ...], provenance: str | None = None) -> PairedDataset:
    """Read a CSV whose header matches the schema column names in order.

    Continuous cells must parse as finite floats; categorical cells must
    be one of the declared levels (stored as the level index).  All
    offending cells are reported with their line and column.
    """
    schema = tuple(schema)
    if any(c.encoded for c in schema):
        raise ValueError("cannot load a CSV against an already-encoded schema")
    names = [c.name for c in schema]
    problems: list[str] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if [h.strip() for h in header] != names:
            raise ValueError(
                f"{path}: header {header!r} does not match schema columns {names!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(schema):
                problems.append(f"line {line_no}: expected {len(schema)} cells, got {len(row)}")
                continue
            parsed = []
            for col, cell in zip(schema, row):
                cell = cell.strip()
                if col.kind == "categorical":
                    if cell not in col.levels:
                        problems.append(
                            f"line {line_no}, column {col.name!r}: "
                            f"{cell!r} is not one of {list(col.levels)}"
                        )
                        parsed.append(math.nan)
                    else:
                        parsed.append(float(col.levels.index(cell)))
                else:
                    bad = cell.lower() in _NON_FINITE_TOKENS
                    value = math.nan
                    if not bad:
                        try:
                            value = float(cell)
                        except ValueError:
                            bad = True
                    if bad or not math.isfinite(value):
                        problems.append(
                            f"line {line_no}, column {col.name!r}: "
                            f"cannot use {cell!r} as a finite number"
                        )
                    parsed.append(value)
            rows.append(parsed)
    if problems:
        shown = "; ".join(problems[:10])
        more = "" if len(problems) <= 10 else f" (+{len(problems) - 10} more)"
        raise ValueError(f"{path}: {shown}{more}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    matrix = np.asarray(rows, dtype=np.float64)
    x_idx = [i for i, c in enumerate(schema) if c.role == "covariate"]
    y_idx = [i for i, c in enumerate(schema) if c.role == "response"]
    return PairedDataset(
        X=matrix[:, x_idx],
        Y=matrix[:, y_idx],
        schema=schema,
        provenance=provenance if provenance is not None else f"csv:{os.path.basename(path)}",
    )


def save_csv(ds: PairedDataset, path: str) -> None:
    """Write the dataset back to CSV; inverse of load_csv for unencoded data."""
    lines = [",".join(c.name for c in _expanded_names(ds.schema))]
    columns: list[np.ndarray] = []
    owners: list[ColumnSchema] = []
    xi = yi = 0
    for c in ds.schema:
        if c.role == "covariate":
            block = ds.X[:, xi:xi + c.width]
            xi += c.width
        else:
            block = ds.Y[:, yi:yi + c.width]
            yi += c.width
        for k in range(block.shape[1]):
            columns.append(block[:, k])
            owners.append(c)
    for r in range(ds.n):
        cells = []
        for c, col in zip(owners, columns):
            if c.kind == "categorical" and not c.encoded:
                cells.append(c.levels[int(col[r])])
            else:
                cells.append(repr(float(col[r])))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _expanded_names(schema: tuple[ColumnSchema, ...]) -> list[ColumnSchema]:
    """Schema columns repeated per matrix column, renaming encoded levels."""
    out = []
    for c in schema:
        if c.kind == "categorical" and c.encoded:
            for lv in c.levels:
                out.append(replace(c, name=f"{c.name}={lv}", kind="continuous",
                                   levels=None, encoded=False))
        else:
            out.append(c)
    return out


# ---------------------------------------------------------------------------
# Encoding and splitting.

def one_hot(ds: PairedDataset) -> PairedDataset:
    """Expand every categorical covariate into one indicator column per level.

    A column with L levels becomes L 0/1 columns (no reference level is
    dropped).  Raises if there is nothing to encode.
    """
    targets = [c for c in ds.schema if c.role == "covariate"
               and c.kind == "categorical" and not c.encoded]
    if not targets:
        raise ValueError("dataset has no categorical covariate columns to encode")
    blocks = []
    new_schema = []
    xi = 0
    for c in ds.schema:
        if c.role != "covariate":
            new_schema.append(c)
            continue
        block = ds.X[:, xi:xi + c.width]
        xi += c.width
        if c.kind == "categorical" and not c.encoded:
            idx = block[:, 0].astype(np.int64)
            if np.any(idx < 0) or np.any(idx >= len(c.levels)):
                raise ValueError(f"column {c.name!r} holds level indices outside its levels")
            expanded = np.zeros((ds.n, len(c.levels)))
            expanded[np.arange(ds.n), idx] = 1.0
            blocks.append(expanded)
            new_schema.append(replace(c, encoded=True))
        else:
            blocks.append(block)
            new_schema.append(c)
    return PairedDataset(
        X=np.hstack(blocks),
        Y=ds.Y,
        schema=tuple(new_schema),
        provenance=ds.provenance + ":onehot",
    )


def split(ds: PairedDataset, train_fraction: float, seed: int) -> tuple[PairedDataset, PairedDataset]:
    """Random train/test split: floor(fraction * n) rows go to train.

    The permutation is drawn from the given seed, so the split is
    reproducible; the first floor(f * n) permuted rows form the train
    set.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_train = int(math.floor(train_fraction * ds.n))
    if n_train == 0 or n_train == ds.n:
        raise ValueError(f"split of {ds.n} rows at fraction {train_fraction} leaves a side empty")
    tr, te = perm[:n_train], perm[n_train:]
    make = lambda idx, tag: PairedDataset(
        X=ds.X[idx], Y=ds.Y[idx], schema=ds.schema,
        provenance=f"{ds.provenance}:{tag}(f={train_fraction},seed={seed})",
    )
    return make(tr, "train"), make(te, "test")

