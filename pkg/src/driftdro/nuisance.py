"""Nuisance fitting: behavior-policy propensities, the context-dependent
dual pair theta(x) = (alpha(x), eta(x)) via sieve ERM, and the
conditional-mean regression of the pointwise dual loss.

All fits are deterministic given their seed.  Propensity predictions are
smoothed onto the clipped simplex p <- (1 - M*floor)*p + floor so every
action keeps probability at least ``clip_floor`` and rows still sum to
one; this is the rule that maps a degenerate single-action fit to
1 - (M-1)*floor on the seen action and floor elsewhere.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.optimize
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor
from sklearn.linear_model import LogisticRegression

from .basis import BasisSpec, FittedBasis, default_basis
from .dataset import Dataset
from .dual import (
    DEFAULT_ALPHA_FLOOR,
    DualParams,
    SolverConfig,
    batch_loss,
    loss,
    solve_dual,
)

__all__ = [
    "NuisanceConfig",
    "PropensityModel",
    "DualFieldModel",
    "RegressionModel",
    "fit_propensity",
    "predict_propensity",
    "fit_dual_field",
    "eval_dual_field",
    "g_hat_target",
    "fit_regression",
    "derive_seed",
]

Selector = Union[int, Callable[[np.ndarray], np.ndarray]]


def derive_seed(seed, *tags) -> int:
    """Stable child seed for a (fold, action, role) slot of a pipeline."""
    ss = np.random.SeedSequence([int(seed)] + [int(t) for t in tags])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class NuisanceConfig:
    propensity_kind: str = "bagged-trees"       # or "multinomial-logistic"
    regression_kind: str = "bagged-trees"       # or "kernel-nadaraya-watson"
    clip_floor: float = 0.01
    n_bags: int = 64
    bag_depth: int = 6
    bag_min_leaf: int = 25
    min_samples: int = 25
    field_restarts: int = 2
    field_max_iter: Optional[int] = None        # default 150 * n_coefficients
    n_jobs: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not (0.0 < self.clip_floor < 0.5):
            raise ValueError("clip_floor must lie in (0, 0.5)")


_seed_int = derive_seed


@dataclass
class PropensityModel:
    kind: str
    clip_floor: float
    n_actions: int
    _impl: object
    _classes: np.ndarray

    def predict_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        raw = np.zeros((len(x), self.n_actions))
        proba = self._impl.predict_proba(x)
        for col, cls in enumerate(self._classes):
            raw[:, int(cls)] = proba[:, col]
        f = self.clip_floor
        return (1.0 - self.n_actions * f) * raw + f


def fit_propensity(data: Dataset, cfg: Optional[NuisanceConfig] = None, seed: int = 0) -> PropensityModel:
    """Fit the behavior-policy model on logged (x, a) pairs."""
    cfg = cfg or NuisanceConfig()
    if data.n == 0:
        raise ValueError("cannot fit a propensity model on an empty dataset")
    seen = np.unique(data.action)
    if len(seen) < data.n_actions:
        missing = sorted(set(range(data.n_actions)) - set(int(a) for a in seen))
        warnings.warn(
            f"actions {missing} absent from propensity training data; "
            f"predictions for them fall back to the clip floor {cfg.clip_floor}"
        )
    if cfg.propensity_kind == "bagged-trees":
        impl = RandomForestClassifier(
            n_estimators=cfg.n_bags,
            max_depth=cfg.bag_depth,
            min_samples_leaf=cfg.bag_min_leaf,
            random_state=_seed_int(seed, 0),
            n_jobs=cfg.n_jobs,
        )
    elif cfg.propensity_kind == "multinomial-logistic":
        impl = LogisticRegression(max_iter=2000)
    else:
        raise ValueError(f"unknown propensity kind: {cfg.propensity_kind}")
    if len(seen) == 1:
        impl = _SingleClassModel(int(seen[0]))
    else:
        impl.fit(data.x, data.action)
    classes = np.asarray(getattr(impl, "classes_", seen))
    return PropensityModel(cfg.propensity_kind, cfg.clip_floor, data.n_actions, impl, classes)


class _SingleClassModel:
    """Degenerate fit when only one action appears in training data."""

    def __init__(self, action: int):
        self.classes_ = np.array([action])

    def predict_proba(self, x):
        return np.ones((len(x), 1))


def predict_propensity(model: PropensityModel, x, a: int) -> float:
    """Clipped probability of action ``a`` at covariate ``x``."""
    return float(model.predict_matrix(np.atleast_2d(x))[0, int(a)])


@dataclass
class DualFieldModel:
    """Basis-expansion form of the dual pair: theta(x) from two coefficient vectors."""

    basis: FittedBasis
    coef_alpha: np.ndarray
    coef_eta: np.ndarray
    alpha_floor: float = DEFAULT_ALPHA_FLOOR
    delta: float = 0.0
    train_risk: float = math.nan

    def eval_matrix(self, x: np.ndarray):
        phi = self.basis.transform(x)
        alpha = np.maximum(phi @ self.coef_alpha, self.alpha_floor)
        eta = phi @ self.coef_eta
        return alpha, eta

    def loss_matrix(self, x: np.ndarray, ys: np.ndarray, delta: float) -> np.ndarray:
        alpha, eta = self.eval_matrix(x)
        return batch_loss(np.asarray(ys, dtype=np.float64), alpha, eta, delta)


def eval_dual_field(model: DualFieldModel, x) -> DualParams:
    alpha, eta = model.eval_matrix(np.atleast_2d(x))
    return DualParams(float(alpha[0]), float(eta[0]))


def g_hat_target(x, y: float, field_model: DualFieldModel, delta: float) -> float:
    """Pointwise dual loss at the fitted pair, l(y; theta_hat(x))."""
    return loss(y, eval_dual_field(field_model, x), delta)


def _selector_mask(data: Dataset, selector: Selector) -> np.ndarray:
    if callable(selector):
        chosen = np.asarray(selector(data.x))
        return data.action == chosen
    return data.action == int(selector)


def fit_dual_field(
    data: Dataset,
    selector: Selector,
    delta: float,
    basis: Optional[BasisSpec] = None,
    cfg: Optional[NuisanceConfig] = None,
    seed: int = 0,
) -> DualFieldModel:
    """Sieve ERM for theta(x) restricted to rows whose action matches ``selector``.

    Coefficients are optimized by Nelder-Mead, warm-started from the
    constant-basis scalar solution broadcast onto the constant feature;
    the best iterate across restarts is kept, so the empirical risk never
    increases with more restarts.
    """
    cfg = cfg or NuisanceConfig()
    mask = _selector_mask(data, selector)
    n_sel = int(mask.sum())
    if n_sel < max(cfg.min_samples, 1):
        raise ValueError(
            f"insufficient on-policy samples: {n_sel} rows match the selector "
            f"(minimum {cfg.min_samples})"
        )
    xs = data.x[mask]
    ys = data.reward[mask]
    spec = basis or default_basis(data.dim)
    fitted = spec.fit(xs)
    phi = fitted.transform(xs)
    n_feat = phi.shape[1]
    floor = cfg.solver.alpha_floor

    theta0, val0 = solve_dual(ys, None, delta, cfg.solver)
    coef_a = np.zeros(n_feat)
    coef_e = np.zeros(n_feat)
    coef_a[0] = theta0.alpha
    coef_e[0] = theta0.eta

    if n_feat == 1:
        # The sieve degenerates to the scalar dual.
        return DualFieldModel(fitted, coef_a, coef_e, floor, delta, train_risk=val0)

    delta = float(delta)

    def risk(z):
        alpha = np.maximum(phi @ z[:n_feat], floor)
        eta = phi @ z[n_feat:]
        return float(np.mean(batch_loss(ys, alpha, eta, delta)))

    z0 = np.concatenate([coef_a, coef_e])
    max_iter = cfg.field_max_iter or min(20000, 150 * 2 * n_feat)
    rng = np.random.default_rng(_seed_int(seed, 1))
    scale = np.concatenate([
        np.full(n_feat, 0.1 * max(theta0.alpha, 0.1)),
        np.full(n_feat, 0.1 * (abs(theta0.eta) + 1.0)),
    ])

    best_z, best_risk = z0, risk(z0)
    start = z0
    for _ in range(max(cfg.field_restarts, 1)):
        res = scipy.optimize.minimize(
            risk,
            start,
            method="Nelder-Mead",
            options={"maxiter": max_iter, "xatol": 1e-6, "fatol": 1e-10, "adaptive": True},
        )
        if res.fun < best_risk:
            best_risk, best_z = float(res.fun), res.x.copy()
        start = best_z + rng.normal(scale=scale)

    return DualFieldModel(
        fitted, best_z[:n_feat].copy(), best_z[n_feat:].copy(), floor, delta, train_risk=best_risk
    )


@dataclass
class RegressionModel:
    kind: str
    _impl: object = None
    _xs: Optional[np.ndarray] = None
    _ys: Optional[np.ndarray] = None
    _bandwidth: Optional[np.ndarray] = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.kind == "bagged-trees":
            return self._impl.predict(x)
        # Nadaraya-Watson with a Gaussian product kernel, in blocks to keep
        # the (n_pred, n_train, d) intermediate bounded.
        n_train, d = self._xs.shape
        block = max(1, int(2e7 // max(n_train * d, 1)))
        out = np.empty(len(x))
        for start in range(0, len(x), block):
            xb = x[start:start + block]
            z = (xb[:, None, :] - self._xs[None, :, :]) / self._bandwidth
            logw = -0.5 * np.sum(z * z, axis=2)
            logw -= logw.max(axis=1, keepdims=True)
            w = np.exp(logw)
            denom = w.sum(axis=1)
            out[start:start + block] = np.where(
                denom > 0, (w @ self._ys) / np.maximum(denom, 1e-300), self._ys.mean()
            )
        return out


def fit_regression(
    xs: np.ndarray,
    targets: Sequence[float],
    cfg: Optional[NuisanceConfig] = None,
    seed: int = 0,
) -> RegressionModel:
    """Conditional-mean model of ``targets`` given covariates."""
    cfg = cfg or NuisanceConfig()
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ys = np.asarray(targets, dtype=np.float64)
    if len(xs) == 0:
        raise ValueError("cannot fit a regression on empty data")
    if len(xs) != len(ys):
        raise ValueError("covariates and targets must have matching length")
    if cfg.regression_kind == "bagged-trees":
        impl = RandomForestRegressor(
            n_estimators=cfg.n_bags,
            max_depth=cfg.bag_depth,
            min_samples_leaf=cfg.bag_min_leaf,
            random_state=_seed_int(seed, 2),
            n_jobs=cfg.n_jobs,
        )
        impl.fit(xs, ys)
        return RegressionModel("bagged-trees", _impl=impl)
    if cfg.regression_kind == "kernel-nadaraya-watson":
        n, d = xs.shape
        sd = xs.std(axis=0)
        h = sd * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))  # Silverman
        h = np.maximum(h, 1e-12)
        return RegressionModel("kernel-nadaraya-watson", _xs=xs.copy(), _ys=ys.copy(), _bandwidth=h)
    raise ValueError(f"unknown regression kind: {cfg.regression_kind}")
