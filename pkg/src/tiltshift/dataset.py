"""Observational data container, CSV ingestion, standardization, and fold assignment.

All randomness in this package flows through numpy's PCG64 generator
(``numpy.random.default_rng``); every stochastic operation takes an explicit
64-bit seed so repeated runs are bit-identical within one build.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "SchemaError",
    "ParseError",
    "CsvSchema",
    "Standardization",
    "Dataset",
    "FoldAssignment",
    "load_csv",
    "standardize",
    "destandardize",
    "delta_to_raw_scale",
    "assign_folds",
]


class SchemaError(ValueError):
    """Column roles do not match the file header or each other."""


class ParseError(ValueError):
    """A cell could not be interpreted as a finite number."""


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for :func:`load_csv`; the three groups must be disjoint."""

    covariates: tuple[str, ...]
    exposures: tuple[str, ...]
    outcome: str
    delimiter: str = ","

    def __post_init__(self):
        cov = tuple(self.covariates)
        exp = tuple(self.exposures)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "exposures", exp)
        names = list(cov) + list(exp) + [self.outcome]
        if len(set(names)) != len(names):
            raise SchemaError("covariate, exposure and outcome columns must be disjoint")
        if not cov or not exp:
            raise SchemaError("need at least one covariate and one exposure column")


@dataclass(frozen=True)
class Standardization:
    """Per-column location/scale applied to X and W (Y is never touched)."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    w_mean: np.ndarray
    w_scale: np.ndarray

    def __post_init__(self):
        for name in ("x_mean", "x_scale", "w_mean", "w_scale"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        if np.any(self.x_scale <= 0) or np.any(self.w_scale <= 0):
            raise ValueError("standardization scales must be positive")


@dataclass(frozen=True)
class Dataset:
    """n observations of (X covariates, W exposures, Y outcome).

    Immutable after construction; arrays are validated to be finite with
    n >= 2, p >= 1, q >= 1.
    """

    X: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    covariate_names: tuple[str, ...] | None = None
    exposure_names: tuple[str, ...] | None = None
    outcome_name: str | None = None
    standardization: Standardization | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if X.shape[0] != W.shape[0] or X.shape[0] != Y.shape[0]:
            raise ValueError("X, W, Y must share the number of rows")
        if X.shape[0] < 2:
            raise ValueError("need at least two observations")
        if X.shape[1] < 1 or W.shape[1] < 1:
            raise ValueError("need p >= 1 covariates and q >= 1 exposures")
        for name, arr in (("X", X), ("W", W), ("Y", Y)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "X", _freeze(X))
        object.__setattr__(self, "W", _freeze(W))
        object.__setattr__(self, "Y", _freeze(Y))
        if self.covariate_names is not None:
            object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if self.exposure_names is not None:
            object.__setattr__(self, "exposure_names", tuple(self.exposure_names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class FoldAssignment:
    """Deterministic K-fold partition: every fold nonempty, sizes within one."""

    fold_of: np.ndarray
    n_folds: int

    def __post_init__(self):
        fold_of = np.asarray(self.fold_of, dtype=int)
        fold_of.flags.writeable = False
        object.__setattr__(self, "fold_of", fold_of)
        sizes = np.bincount(fold_of, minlength=self.n_folds)
        if np.any(sizes == 0):
            raise ValueError("every fold must be nonempty")
        if sizes.max() - sizes.min() > 1:
            raise ValueError("fold sizes must differ by at most one")

    def indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def train_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != k)


def load_csv(path, schema: CsvSchema, non_finite: str = "reject") -> Dataset:
    """Read a delimited text file into a :class:`Dataset`.

    Parameters
    ----------
    path : str or Path
        File with a header row naming the columns in ``schema``.
    schema : CsvSchema
        Which columns play which role.
    non_finite : {"reject", "drop"}
        ``reject`` raises on the first row containing a non-finite value;
        ``drop`` silently removes such rows.
    """
    if non_finite not in ("reject", "drop"):
        raise ValueError("non_finite must be 'reject' or 'drop'")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty data (no header row)") from None
        header = [h.strip() for h in header]
        col_index = {}
        for name in list(schema.covariates) + list(schema.exposures) + [schema.outcome]:
            if name not in header:
                raise SchemaError(f"{path}: column {name!r} not found in header {header}")
            col_index[name] = header.index(name)

        rows_x, rows_w, rows_y = [], [], []
        n_dropped = 0
        for r, row in enumerate(reader, start=2):  # header is line 1
            if not row or all(not cell.strip() for cell in row):
                continue
            values = {}
            for name, j in col_index.items():
                if j >= len(row):
                    raise ParseError(f"{path}: line {r}: missing value for column {name!r}")
                cell = row[j].strip()
                try:
                    values[name] = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: line {r}, column {name!r}: non-numeric cell {cell!r}"
                    ) from None
            if not all(math.isfinite(v) for v in values.values()):
                if non_finite == "reject":
                    bad = [k for k, v in values.items() if not math.isfinite(v)]
                    raise ParseError(
                        f"{path}: line {r}: non-finite value in column(s) {bad}"
                    )
                n_dropped += 1
                continue
            rows_x.append([values[c] for c in schema.covariates])
            rows_w.append([values[c] for c in schema.exposures])
            rows_y.append(values[schema.outcome])
    if not rows_y:
        raise ParseError(f"{path}: empty data (header only)")
    return Dataset(
        X=np.array(rows_x, dtype=float),
        W=np.array(rows_w, dtype=float),
        Y=np.array(rows_y, dtype=float),
        covariate_names=schema.covariates,
        exposure_names=schema.exposures,
        outcome_name=schema.outcome,
    )


def _column_stats(M: np.ndarray, names, what: str) -> tuple[np.ndarray, np.ndarray]:
    mean = M.mean(axis=0)
    scale = M.std(axis=0, ddof=1)
    bad = np.flatnonzero(scale <= 0)
    if bad.size:
        label = names[bad[0]] if names is not None else f"{what}[{bad[0]}]"
        raise ValueError(f"constant column {label!r}: zero sample standard deviation")
    return mean, scale


def standardize(d: Dataset) -> Dataset:
    """Center and scale each X and W column to sample mean 0, sample sd 1.

    Y is untouched. The transform is recorded on the returned dataset so it
    can be inverted (:func:`destandardize`) and so tilt vectors can be mapped
    back to the raw exposure scale (:func:`delta_to_raw_scale`).
    """
    if d.standardization is not None:
        raise ValueError("dataset is already standardized")
    x_mean, x_scale = _column_stats(d.X, d.covariate_names, "X")
    w_mean, w_scale = _column_stats(d.W, d.exposure_names, "W")
    rec = Standardization(x_mean, x_scale, w_mean, w_scale)
    return replace(
        d,
        X=(d.X - x_mean) / x_scale,
        W=(d.W - w_mean) / w_scale,
        standardization=rec,
    )


def destandardize(d: Dataset) -> Dataset:
    """Invert :func:`standardize`; round-trips within 1e-10."""
    rec = d.standardization
    if rec is None:
        raise ValueError("dataset carries no standardization record")
    return replace(
        d,
        X=d.X * rec.x_scale + rec.x_mean,
        W=d.W * rec.w_scale + rec.w_mean,
        standardization=None,
    )


def delta_to_raw_scale(delta: np.ndarray, rec: Standardization) -> np.ndarray:
    """Map a tilt vector from the standardized exposure scale to the raw scale.

    exp(delta' W_std) differs from exp((delta/s)' W_raw) only by a factor
    constant in W, which the tilt normalizer absorbs, so the two tilts define
    the same intervention.
    """
    return np.asarray(delta, dtype=float) / rec.w_scale


def assign_folds(n: int, n_folds: int, seed: int) -> FoldAssignment:
    """Seeded-shuffle round-robin assignment of n rows to ``n_folds`` folds."""
    if n_folds < 2 or n_folds > n:
        raise ValueError(f"need 2 <= n_folds <= n, got n_folds={n_folds}, n={n}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % n_folds
    return FoldAssignment(fold_of=fold_of, n_folds=n_folds)
