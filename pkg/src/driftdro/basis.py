"""Feature maps for the sieve fits of the context-dependent dual pair.

Two families: additive cubic B-splines (default, interior knots at
empirical quintiles of the training covariates) and additive polynomials.
Every fitted basis includes a leading constant feature; degree-0
polynomial degenerates to the constant map, under which the sieve fit
collapses to the scalar dual solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.interpolate import BSpline

__all__ = ["BasisSpec", "FittedBasis", "default_basis"]

_SPLINE_DEGREE = 3


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "additive-cubic-spline"  # or "polynomial"
    degree: int = 2        # polynomial only
    n_knots: int = 4       # interior knots per coordinate, spline only

    def __post_init__(self):
        if self.kind not in ("additive-cubic-spline", "polynomial"):
            raise ValueError(f"unknown basis kind: {self.kind}")
        if self.kind == "polynomial" and self.degree < 0:
            raise ValueError("polynomial degree must be >= 0")
        if self.kind == "additive-cubic-spline" and self.n_knots < 1:
            raise ValueError("need at least one interior knot")

    def fit(self, x: np.ndarray) -> "FittedBasis":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or len(x) == 0:
            raise ValueError("x must be a non-empty (n, d) array")
        d = x.shape[1]
        if self.kind == "polynomial":
            return FittedBasis(self, d, knots=None, bounds=None)
        quantiles = np.linspace(0, 1, self.n_knots + 2)[1:-1]
        knots: List[Optional[np.ndarray]] = []
        bounds = []
        for j in range(d):
            col = x[:, j]
            lo, hi = float(col.min()), float(col.max())
            bounds.append((lo, hi))
            if hi - lo < 1e-12:
                knots.append(None)  # constant coordinate contributes nothing
                continue
            inner = np.quantile(col, quantiles)
            inner = np.unique(inner[(inner > lo) & (inner < hi)])
            knots.append(inner)
        return FittedBasis(self, d, knots=knots, bounds=bounds)


@dataclass(frozen=True)
class FittedBasis:
    spec: BasisSpec
    dim: int
    knots: Optional[list]       # per-coordinate interior knots (spline)
    bounds: Optional[list]      # per-coordinate (lo, hi) from training data

    @property
    def n_features(self) -> int:
        if self.spec.kind == "polynomial":
            return 1 + self.dim * self.spec.degree
        total = 1
        for inner in self.knots:
            if inner is not None:
                # len(t) - degree - 1 B-splines; drop one (partition of unity).
                total += len(inner) + _SPLINE_DEGREE
        return total

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} covariates, got {x.shape[1]}")
        n = len(x)
        cols = [np.ones((n, 1))]
        if self.spec.kind == "polynomial":
            for j in range(self.dim):
                col = x[:, j:j + 1]
                for k in range(1, self.spec.degree + 1):
                    cols.append(col ** k)
            return np.ascontiguousarray(np.hstack(cols))
        for j in range(self.dim):
            inner = self.knots[j]
            if inner is None:
                continue
            lo, hi = self.bounds[j]
            col = np.clip(x[:, j], lo, hi)
            t = np.r_[[lo] * (_SPLINE_DEGREE + 1), inner, [hi] * (_SPLINE_DEGREE + 1)]
            design = BSpline.design_matrix(col, t, _SPLINE_DEGREE).toarray()
            cols.append(design[:, 1:])  # first column absorbed by the constant
        return np.ascontiguousarray(np.hstack(cols))


def default_basis(dim: int) -> BasisSpec:
    """Spline sieve for moderate dimension, quadratic fallback beyond d=10."""
    if dim > 10:
        return BasisSpec(kind="polynomial", degree=2)
    return BasisSpec(kind="additive-cubic-spline", n_knots=4)
