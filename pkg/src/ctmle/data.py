"""Data model, CSV ingestion, outcome scaling, and cross-validation folds.

Everything downstream operates on an immutable :class:`Dataset` holding the
covariate matrix ``W``, the binary treatment vector ``A`` and the outcome
``Y``.  Bounded continuous outcomes are mapped into [0, 1] before any
logit-scale work and estimates are mapped back at the reporting boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "OutcomeScaler",
    "FoldAssignment",
    "DataError",
    "load_csv",
    "scale_outcome",
    "unscale_ate",
    "make_folds",
]


class DataError(ValueError):
    """Raised when an input file or dataset violates the data contract."""


@dataclass(frozen=True)
class Dataset:
    """An (W, A, Y) sample of n units with p named baseline covariates.

    Parameters
    ----------
    W : ndarray, shape (n, p)
        Covariate matrix.  May have p = 0 columns.
    A : ndarray, shape (n,)
        Treatment indicator, every entry 0 or 1.
    Y : ndarray, shape (n,)
        Outcome; either {0, 1} valued or bounded continuous.
    covariate_names : tuple of str
        Unique label per column of W.
    outcome_kind : str
        "binary" or "bounded-continuous".
    """

    W: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    covariate_names: tuple
    outcome_kind: str

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        A = np.asarray(self.A, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if W.ndim != 2:
            raise DataError("W must be a 2-d array")
        n = W.shape[0]
        if n < 1:
            raise DataError("dataset must contain at least one row")
        if A.shape != (n,) or Y.shape != (n,):
            raise DataError("A and Y must be length-n vectors")
        if not np.all(np.isfinite(W)) or not np.all(np.isfinite(A)) or not np.all(np.isfinite(Y)):
            raise DataError("dataset contains missing or non-finite entries")
        if not np.all((A == 0) | (A == 1)):
            bad = int(np.flatnonzero((A != 0) & (A != 1))[0])
            raise DataError(f"treatment must be 0/1; offending row {bad + 1}")
        if self.outcome_kind not in ("binary", "bounded-continuous"):
            raise DataError(f"unknown outcome_kind {self.outcome_kind!r}")
        if self.outcome_kind == "binary" and not np.all((Y == 0) | (Y == 1)):
            bad = int(np.flatnonzero((Y != 0) & (Y != 1))[0])
            raise DataError(f"binary outcome must be 0/1; offending row {bad + 1}")
        names = tuple(str(c) for c in self.covariate_names)
        if len(names) != W.shape[1]:
            raise DataError("covariate_names length must match number of columns of W")
        if len(set(names)) != len(names):
            raise DataError("covariate_names must be unique")
        for arr in (W, A, Y):
            arr.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]

    def with_outcome(self, Y, outcome_kind=None) -> "Dataset":
        """Copy of the dataset with a replaced outcome vector."""
        return Dataset(self.W, self.A, np.asarray(Y, dtype=float),
                       self.covariate_names, outcome_kind or self.outcome_kind)

    def subset(self, rows) -> "Dataset":
        """Row subset (used for cross-validation training splits)."""
        rows = np.asarray(rows)
        return Dataset(self.W[rows], self.A[rows], self.Y[rows],
                       self.covariate_names, self.outcome_kind)


@dataclass(frozen=True)
class OutcomeScaler:
    """Affine map of a bounded outcome onto [0, 1] and back."""

    y_min: float
    y_max: float

    def __post_init__(self):
        if not self.y_max > self.y_min:
            raise DataError("outcome scaler requires y_max > y_min")

    @property
    def span(self) -> float:
        return self.y_max - self.y_min

    def scale(self, y):
        return (np.asarray(y, dtype=float) - self.y_min) / self.span

    def unscale(self, y_scaled):
        return np.asarray(y_scaled, dtype=float) * self.span + self.y_min

    def unscale_ate(self, psi_scaled: float) -> float:
        return float(psi_scaled) * self.span


@dataclass(frozen=True)
class FoldAssignment:
    """A V-fold partition of {0, ..., n-1}; fold labels run 1..V."""

    V: int
    fold_of: np.ndarray = field(repr=False)

    def __post_init__(self):
        fold_of = np.asarray(self.fold_of, dtype=int)
        if self.V < 2:
            raise DataError("at least 2 folds required")
        counts = np.bincount(fold_of, minlength=self.V + 1)[1:]
        if len(counts) != self.V or np.any(counts == 0):
            raise DataError("every fold must be nonempty")
        if fold_of.min() < 1 or fold_of.max() > self.V:
            raise DataError("fold labels must lie in 1..V")
        fold_of.setflags(write=False)
        object.__setattr__(self, "fold_of", fold_of)

    @property
    def n(self) -> int:
        return len(self.fold_of)

    def val_indices(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == v)

    def train_indices(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != v)


def load_csv(path, treatment_col: str, outcome_col: str) -> Dataset:
    """Read a comma-separated file into a Dataset.

    All columns other than the named treatment and outcome columns become
    covariates, in file order.  Every cell must be numeric; violations are
    reported with their row and column location (1-based, header = row 1).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        for col in (treatment_col, outcome_col):
            if col not in header:
                raise DataError(f"{path}: required column {col!r} not found in header")
        if treatment_col == outcome_col:
            raise DataError("treatment and outcome columns must differ")
        a_idx = header.index(treatment_col)
        y_idx = header.index(outcome_col)
        cov_idx = [j for j in range(len(header)) if j not in (a_idx, y_idx)]
        cov_names = [header[j] for j in cov_idx]
        if len(set(cov_names)) != len(cov_names):
            raise DataError(f"{path}: duplicate covariate column names")

        rows = []
        for r, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r} has {len(rec)} cells, expected {len(header)}")
            vals = []
            for j, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {r}, column {header[j]!r}"
                    ) from None
                if not np.isfinite(v):
                    raise DataError(f"{path}: non-finite value at row {r}, column {header[j]!r}")
                vals.append(v)
            if vals[a_idx] not in (0.0, 1.0):
                raise DataError(
                    f"{path}: treatment value {vals[a_idx]!r} outside {{0,1}} at row {r}"
                )
            rows.append(vals)

    if not rows:
        raise DataError(f"{path}: no data rows")
    M = np.asarray(rows, dtype=float)
    A = M[:, a_idx]
    Y = M[:, y_idx]
    W = M[:, cov_idx] if cov_idx else np.empty((len(rows), 0))
    kind = "binary" if np.all((Y == 0) | (Y == 1)) else "bounded-continuous"
    return Dataset(W, A, Y, tuple(cov_names), kind)


def scale_outcome(ds: Dataset, y_min=None, y_max=None):
    """Map the outcome into [0, 1].

    Binary outcomes pass through with the identity scaler (0, 1).  Continuous
    outcomes use the empirical min/max unless explicit bounds are supplied.

    Returns
    -------
    (Dataset, OutcomeScaler)
        The scaled dataset and the scaler needed to undo the map.
    """
    if ds.outcome_kind == "binary":
        return ds, OutcomeScaler(0.0, 1.0)
    lo = float(ds.Y.min()) if y_min is None else float(y_min)
    hi = float(ds.Y.max()) if y_max is None else float(y_max)
    if hi <= lo:
        raise DataError("degenerate continuous outcome: y_max must exceed y_min")
    if ds.Y.min() < lo or ds.Y.max() > hi:
        raise DataError("outcome values fall outside the supplied [y_min, y_max] bounds")
    scaler = OutcomeScaler(lo, hi)
    return ds.with_outcome(scaler.scale(ds.Y)), scaler


def unscale_ate(psi_scaled: float, scaler: OutcomeScaler) -> float:
    """Back-transform an ATE computed on the [0, 1] scale to the raw scale."""
    return scaler.unscale_ate(psi_scaled)


def make_folds(n: int, V: int, seed: int) -> FoldAssignment:
    """Simple random V-fold partition; fold sizes differ by at most one."""
    if V < 2 or V > n:
        raise DataError(f"fold count V={V} must satisfy 2 <= V <= n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = (np.arange(n) % V) + 1
    return FoldAssignment(V, fold_of)
