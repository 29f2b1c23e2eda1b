"""Datasets, column roles, CSV ingestion and run configuration."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ROLES = ("assignment", "treatment", "outcome", "covariate")
KINDS = ("binary", "ordinal", "continuous", "categorical")
MISSING_TOKENS = {"", "na", "nan", "null", "none", "."}


class DataError(ValueError):
    """Input data violates a dataset invariant."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str
    kind: str = "continuous"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")

    @classmethod
    def from_dict(cls, d):
        return cls(name=str(d["name"]), role=str(d["role"]), kind=str(d.get("kind", "continuous")))

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Transform:
    """Affine standardization ``(x - center) / scale`` applied to one column."""

    center: float
    scale: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of covariates ``x`` with binary ``z``, ``w``, ``y``.

    ``column_specs`` describes the columns of ``x`` after categorical
    expansion (indicator columns have kind ``binary``); ``role_names`` keeps
    the source names of the assignment, treatment and outcome columns.
    """

    x: np.ndarray
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    column_specs: tuple[ColumnSpec, ...]
    role_names: tuple[str, str, str] = ("z", "w", "y")
    transforms: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        z = np.array(self.z, dtype=np.int8, copy=True)
        w = np.array(self.w, dtype=np.int8, copy=True)
        y = np.array(self.y, dtype=np.int8, copy=True)
        n, p = x.shape
        if n < 1 or p < 1:
            raise DataError(f"dataset needs n >= 1 and p >= 1, got n={n}, p={p}")
        for name, v, raw in (("z", z, self.z), ("w", w, self.w), ("y", y, self.y)):
            if v.shape != (n,):
                raise DataError(f"{name} has shape {v.shape}, expected ({n},)")
            if not np.array_equal(np.asarray(raw, dtype=float), v.astype(float)) or np.any((v != 0) & (v != 1)):
                raise DataError(f"{name} must be binary 0/1")
        if not np.all(np.isfinite(x)):
            raise DataError("covariates contain missing or non-finite values")
        specs = tuple(self.column_specs)
        if len(specs) != p:
            raise DataError(f"{len(specs)} column specs for {p} covariate columns")
        for a in (x, z, w, y):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "column_specs", specs)
        object.__setattr__(self, "transforms", dict(self.transforms))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.column_specs]

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.names.index(name)]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.x[rows], self.z[rows], self.w[rows], self.y[rows],
                       self.column_specs, self.role_names, self.transforms)

    def with_covariate(self, name: str, values, kind: str = "continuous") -> "Dataset":
        x = np.column_stack([self.x, np.asarray(values, dtype=float)])
        specs = self.column_specs + (ColumnSpec(name, "covariate", kind),)
        return Dataset(x, self.z, self.w, self.y, specs, self.role_names, self.transforms)

    def with_treatment(self, z=None, w=None, y=None) -> "Dataset":
        return Dataset(self.x, self.z if z is None else z, self.w if w is None else w,
                       self.y if y is None else y, self.column_specs, self.role_names, self.transforms)

    def export_specs(self) -> list[ColumnSpec]:
        """Specs that re-ingest a CSV written by :func:`write_csv`."""
        zn, wn, yn = self.role_names
        return [ColumnSpec(zn, "assignment", "binary"), ColumnSpec(wn, "treatment", "binary"),
                ColumnSpec(yn, "outcome", "binary"), *self.column_specs]

    def equals(self, other: "Dataset") -> bool:
        return (np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z)
                and np.array_equal(self.w, other.w) and np.array_equal(self.y, other.y)
                and self.column_specs == other.column_specs and self.role_names == other.role_names)


def _is_missing(s: str) -> bool:
    return s.strip().lower() in MISSING_TOKENS


def _parse_number(s: str, row: int, col: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {s!r} as a number") from None
    if not math.isfinite(v):
        raise DataError(f"row {row}, column {col!r}: non-finite value {s!r}")
    return v


def _parse_binary(s: str, row: int, col: str) -> int:
    v = _parse_number(s, row, col)
    if v not in (0.0, 1.0):
        raise DataError(f"row {row}, column {col!r}: value {s!r} is not binary (0/1)")
    return int(v)


def _check_specs(specs: Sequence[ColumnSpec]):
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DataError("duplicate column names in specs")
    for role in ("assignment", "treatment", "outcome"):
        k = sum(s.role == role for s in specs)
        if k != 1:
            raise DataError(f"exactly one {role} column required, got {k}")
    if not any(s.role == "covariate" for s in specs):
        raise DataError("at least one covariate column required")


def ingest_csv(path, specs: Sequence[ColumnSpec]) -> Dataset:
    """Read a CSV with a header row into a :class:`Dataset`.

    Rows are numbered from 1 (the first data row). Categorical covariates are
    expanded into indicator columns over their sorted levels, dropping the
    first level as reference. Ordinal covariates must be integer codes.
    """
    specs = [s if isinstance(s, ColumnSpec) else ColumnSpec.from_dict(s) for s in specs]
    _check_specs(specs)
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [s.name for s in specs if s.name not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        pos = {s.name: header.index(s.name) for s in specs}
        raw: dict[str, list] = {s.name: [] for s in specs}
        nrow = 0
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            nrow += 1
            if len(rec) != len(header):
                raise DataError(f"row {r}: expected {len(header)} fields, got {len(rec)}")
            for s in specs:
                cell = rec[pos[s.name]].strip()
                if _is_missing(cell):
                    raise DataError(f"row {r}, column {s.name!r}: missing value")
                if s.role != "covariate" or s.kind == "binary":
                    raw[s.name].append(_parse_binary(cell, r, s.name))
                elif s.kind == "categorical":
                    raw[s.name].append(cell)
                elif s.kind == "ordinal":
                    v = _parse_number(cell, r, s.name)
                    if v != int(v):
                        raise DataError(f"row {r}, column {s.name!r}: ordinal value {cell!r} is not an integer code")
                    raw[s.name].append(v)
                else:
                    raw[s.name].append(_parse_number(cell, r, s.name))
    if nrow == 0:
        raise DataError(f"{path}: no data rows")

    by_role = {s.role: s.name for s in specs if s.role != "covariate"}
    cols: list[np.ndarray] = []
    out_specs: list[ColumnSpec] = []
    for s in specs:
        if s.role != "covariate":
            continue
        if s.kind == "categorical":
            values = raw[s.name]
            levels = sorted(set(values))
            for lev in levels[1:]:
                cols.append(np.array([v == lev for v in values], dtype=float))
                out_specs.append(ColumnSpec(f"{s.name}={lev}", "covariate", "binary"))
        else:
            cols.append(np.asarray(raw[s.name], dtype=float))
            out_specs.append(s)
    if not cols:
        raise DataError("categorical covariates with a single level leave no covariate columns")
    x = np.column_stack(cols)
    return Dataset(x, raw[by_role["assignment"]], raw[by_role["treatment"]], raw[by_role["outcome"]],
                   tuple(out_specs), (by_role["assignment"], by_role["treatment"], by_role["outcome"]))


def read_column(path, name: str) -> list[str]:
    """Raw string values of one column of a CSV file (e.g. a site label)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if name not in header:
            raise DataError(f"{path}: missing column {name!r}")
        k = header.index(name)
        return [rec[k].strip() for rec in reader if rec and any(c.strip() for c in rec)]


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 2**53 else repr(float(v))


def write_csv(d: Dataset, path) -> None:
    """Write a dataset so that ``ingest_csv(path, d.export_specs())`` restores it."""
    specs = d.export_specs()
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([s.name for s in specs])
        for i in range(d.n):
            wr.writerow([int(d.z[i]), int(d.w[i]), int(d.y[i]), *(_fmt(v) for v in d.x[i])])


def standardize_covariates(d: Dataset) -> tuple[Dataset, list[str]]:
    """Center and scale continuous covariates; returns the dataset and warnings.

    Already-standardized columns are left alone, so the operation is a fixed
    point. Zero-variance continuous columns are left untouched and reported.
    """
    x = d.x.copy()
    transforms = dict(d.transforms)
    warnings = []
    for j, s in enumerate(d.column_specs):
        if s.kind != "continuous" or s.name in transforms:
            continue
        col = x[:, j]
        center = float(col.mean())
        scale = float(col.std())
        if not scale > 0:
            warnings.append(f"column {s.name!r} has zero variance; left unstandardized")
            continue
        x[:, j] = (col - center) / scale
        transforms[s.name] = Transform(center, scale)
    return Dataset(x, d.z, d.w, d.y, d.column_specs, d.role_names, transforms), warnings


@dataclass(frozen=True)
class RunConfig:
    chains: int = 20
    iterations: int = 250
    burn_in: int = 100
    trees_m: int = 200
    k: float = 2.0
    alpha: float = 0.95
    beta: float = 2.0
    seed: int = 20240917
    backend: str = "bart"
    dependence: str = "independent"
    link: str = "probit"
    prior_scale: float = 2.5
    threads: int = 1
    propensity_burn_in: int = 50
    propensity_draws: int = 100

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.trees_m < 1:
            raise ValueError("trees_m must be >= 1")
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.backend not in ("bart", "linear"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.dependence not in ("independent", "dependent"):
            raise ValueError(f"unknown dependence {self.dependence!r}")
        if self.link not in ("probit", "logit"):
            raise ValueError(f"unknown link {self.link!r}")
        if self.propensity_burn_in < 0 or self.propensity_draws < 1:
            raise ValueError("propensity fit needs burn_in >= 0 and draws >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def retained(self) -> int:
        return self.iterations - self.burn_in

    def replace(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown run config field(s): {sorted(unknown)}")
        return cls(**d)


def load_config(path) -> dict:
    """Parse a JSON run document: ``columns``, optional ``run``, ``segments``."""
    doc = json.loads(Path(path).read_text())
    if "columns" not in doc:
        raise DataError(f"{path}: config needs a 'columns' list")
    doc["columns"] = [ColumnSpec.from_dict(c) for c in doc["columns"]]
    doc["run"] = RunConfig.from_dict(doc.get("run", {}))
    doc.setdefault("segments", [])
    return doc
