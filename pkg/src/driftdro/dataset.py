"""Data containers and the CSV formats used by the CLI.

Actions are 0-based everywhere inside the library.  The on-disk CSV
formats use 1-based action indices; conversion happens only here.

Dataset CSV:              x1,...,xd,a,y
PotentialOutcomeTable CSV: x1,...,xd,y1,...,yM[,mu1,...,muM,sigma1,...,sigmaM]

Floats are written with 17 significant digits so that a re-run with the
same seed reproduces files byte for byte.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "Dataset",
    "PotentialOutcomeTable",
    "read_dataset_csv",
    "write_dataset_csv",
    "read_outcome_table_csv",
    "write_outcome_table_csv",
]

_FMT = "%.17g"


def _as_float_matrix(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in {name}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Logged interaction data: covariates, chosen action, realized reward."""

    x: np.ndarray        # (n, d) float64
    action: np.ndarray   # (n,) int, 0-based
    reward: np.ndarray   # (n,) float64
    n_actions: int

    def __post_init__(self):
        x = _as_float_matrix(self.x, "covariates")
        a = np.asarray(self.action, dtype=np.int64)
        y = np.asarray(self.reward, dtype=np.float64)
        if a.ndim != 1 or y.ndim != 1 or len(a) != len(x) or len(y) != len(x):
            raise ValueError("covariates, actions and rewards must have matching length")
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite rewards")
        if self.n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        if len(a) and (a.min() < 0 or a.max() >= self.n_actions):
            raise ValueError("action index out of range")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "action", a)
        object.__setattr__(self, "reward", y)

    @property
    def n(self) -> int:
        return len(self.reward)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.action[idx], self.reward[idx], self.n_actions)


@dataclass(frozen=True)
class PotentialOutcomeTable:
    """Test-only data carrying all potential outcomes per row.

    ``mu`` and ``sigma`` (per row and arm) describe the Gaussian law each
    outcome was drawn from; they are required by the KL-sphere
    perturbation and optional otherwise.
    """

    x: np.ndarray         # (n, d)
    outcomes: np.ndarray  # (n, M)
    mu: Optional[np.ndarray] = None      # (n, M)
    sigma: Optional[np.ndarray] = None   # (n, M)

    def __post_init__(self):
        x = _as_float_matrix(self.x, "covariates")
        ys = _as_float_matrix(self.outcomes, "outcomes")
        if len(ys) != len(x):
            raise ValueError("covariates and outcomes must have matching length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "outcomes", ys)
        for name in ("mu", "sigma"):
            val = getattr(self, name)
            if val is not None:
                val = _as_float_matrix(val, name)
                if val.shape != ys.shape:
                    raise ValueError(f"{name} must match outcomes shape")
                object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return len(self.outcomes)

    @property
    def n_actions(self) -> int:
        return self.outcomes.shape[1]

    @property
    def has_distribution_metadata(self) -> bool:
        return self.mu is not None and self.sigma is not None


def _fmt_row(values) -> list:
    return [_FMT % v for v in values]


def write_dataset_csv(data: Dataset, path) -> None:
    d = data.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(d)] + ["a", "y"])
        for i in range(data.n):
            w.writerow(_fmt_row(data.x[i]) + [str(int(data.action[i]) + 1), _FMT % data.reward[i]])


def read_dataset_csv(path, n_actions: Optional[int] = None) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"empty dataset file: {path}")
    header = rows[0]
    if "a" not in header or "y" not in header:
        raise ValueError(f"malformed dataset header in {path}: {header}")
    d = header.index("a")
    body = rows[1:]
    x = np.array([[float(v) for v in r[:d]] for r in body], dtype=np.float64)
    a = np.array([int(r[d]) - 1 for r in body], dtype=np.int64)
    y = np.array([float(r[d + 1]) for r in body], dtype=np.float64)
    if n_actions is None:
        n_actions = int(a.max()) + 1 if len(a) else 1
    return Dataset(x, a, y, n_actions)


def write_outcome_table_csv(table: PotentialOutcomeTable, path) -> None:
    d = table.x.shape[1]
    m = table.n_actions
    cols = [f"x{j + 1}" for j in range(d)] + [f"y{a + 1}" for a in range(m)]
    with_meta = table.has_distribution_metadata
    if with_meta:
        cols += [f"mu{a + 1}" for a in range(m)] + [f"sigma{a + 1}" for a in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(table.n):
            row = _fmt_row(table.x[i]) + _fmt_row(table.outcomes[i])
            if with_meta:
                row += _fmt_row(table.mu[i]) + _fmt_row(table.sigma[i])
            w.writerow(row)


def read_outcome_table_csv(path) -> PotentialOutcomeTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"empty table file: {path}")
    header = rows[0]
    xs = [c for c in header if re.fullmatch(r"x\d+", c)]
    ys = [c for c in header if re.fullmatch(r"y\d+", c)]
    mus = [c for c in header if re.fullmatch(r"mu\d+", c)]
    sigmas = [c for c in header if re.fullmatch(r"sigma\d+", c)]
    if not xs or not ys:
        raise ValueError(f"malformed potential-outcome header in {path}: {header}")
    mat = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    d, m = len(xs), len(ys)
    x = mat[:, :d]
    out = mat[:, d:d + m]
    mu = sigma = None
    if mus and sigmas:
        mu = mat[:, d + m:d + 2 * m]
        sigma = mat[:, d + 2 * m:d + 3 * m]
    return PotentialOutcomeTable(x, out, mu, sigma)
