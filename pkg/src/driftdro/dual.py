"""Scalar KL worst-case machinery: dual loss, gradients, solver, and
finite-support primal oracles.

For a reward variable Y ~ P and a KL budget ``delta`` the worst-case mean
over the ball {Q : KL(Q||P) <= delta} admits the two-parameter dual

    inf_Q E_Q[Y]  =  -min_{alpha >= 0, eta}  E_P[ l(Y; alpha, eta) ],
    l(y; alpha, eta) = alpha * exp(-(y + eta)/alpha - 1) + eta + alpha*delta.

``loss``/``loss_grad`` evaluate the integrand and its exact partials,
``solve_dual`` minimizes the weighted empirical dual risk, and
``worst_case_mean_discrete`` solves the primal directly on a finite
support by exponential tilting (Q* proportional to P * exp(-y/t), with
the tilt bisected until KL(Q*||P) hits delta).  The two routes are kept
independent so each can certify the other.

Useful identity used throughout: for fixed alpha the optimal eta is

    eta*(alpha) = alpha * log E_P[exp(-Y/alpha)] - alpha,

and the profiled dual risk equals alpha*log E_P[exp(-Y/alpha)] + alpha*delta,
which is convex in alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.optimize
import scipy.special

__all__ = [
    "DEFAULT_ALPHA_FLOOR",
    "DualParams",
    "DiscreteDist",
    "SolverConfig",
    "SolverError",
    "loss",
    "loss_grad",
    "solve_dual",
    "worst_case_mean_discrete",
    "bernoulli_worst_mean",
    "binary_kl",
    "max_feasible_radius",
]

DEFAULT_ALPHA_FLOOR = 1e-3

# Exponent guard: keeps alpha*exp(z) finite (~1e217 at most) so Nelder-Mead
# sees a huge but comparable value instead of inf in bad regions.
_MAX_EXPONENT = 500.0


def _check_finite_scalar(name, value):
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"non-finite operand: {name}={value!r}")
    return v


@dataclass(frozen=True)
class DualParams:
    """The dual pair theta = (alpha, eta), in reward units."""

    alpha: float
    eta: float

    def __post_init__(self):
        a = _check_finite_scalar("alpha", self.alpha)
        e = _check_finite_scalar("eta", self.eta)
        if a < DEFAULT_ALPHA_FLOOR - 1e-12:
            raise ValueError(f"alpha={a} below floor {DEFAULT_ALPHA_FLOOR}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "eta", e)


@dataclass(frozen=True)
class DiscreteDist:
    """Finite-support distribution used by the primal oracle."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        if v.ndim != 1 or p.ndim != 1 or len(v) != len(p) or len(v) == 0:
            raise ValueError("values and probs must be equal-length non-empty vectors")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite support values")
        if np.any(p < 0):
            raise ValueError("negative probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probs sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @property
    def mean(self) -> float:
        return float(self.values @ self.probs)


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the Nelder-Mead dual solver.

    Five restarts from a deterministic (alpha, eta) grid, simplex
    tolerance 1e-9, at most 2000 iterations per restart.  ``polish``
    additionally runs an exact golden-section pass on the eta-profiled
    one-dimensional risk and keeps whichever iterate is lower.
    """

    alpha_floor: float = DEFAULT_ALPHA_FLOOR
    restarts: int = 5
    max_iter: int = 2000
    xatol: float = 1e-9
    fatol: float = 1e-9
    polish: bool = True


class SolverError(RuntimeError):
    """Raised when no restart converges; carries the best iterate found."""

    def __init__(self, message, best_params=None, best_value=None):
        super().__init__(message)
        self.best_params = best_params
        self.best_value = best_value


def loss(y: float, theta: DualParams, delta: float) -> float:
    """Pointwise dual loss l(y; theta) = alpha*e^{-(y+eta)/alpha-1} + eta + alpha*delta."""
    yv = _check_finite_scalar("y", y)
    dv = _check_finite_scalar("delta", delta)
    if dv < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    a, e = theta.alpha, theta.eta
    z = min(-(yv + e) / a - 1.0, _MAX_EXPONENT)
    return a * math.exp(z) + e + a * dv


def loss_grad(y: float, theta: DualParams, delta: float) -> Tuple[float, float]:
    """Exact partials of ``loss`` with respect to (alpha, eta).

    d/dalpha = (1 + (y+eta)/alpha) * e^{-(y+eta)/alpha - 1} + delta
    d/deta   = 1 - e^{-(y+eta)/alpha - 1}
    """
    yv = _check_finite_scalar("y", y)
    dv = _check_finite_scalar("delta", delta)
    if dv < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    a, e = theta.alpha, theta.eta
    u = (yv + e) / a
    w = math.exp(min(-u - 1.0, _MAX_EXPONENT))
    return (1.0 + u) * w + dv, 1.0 - w


def batch_loss(ys: np.ndarray, alpha, eta, delta: float) -> np.ndarray:
    """Vectorized loss; ``alpha``/``eta`` may be scalars or per-row arrays."""
    z = np.minimum(-(ys + eta) / alpha - 1.0, _MAX_EXPONENT)
    return alpha * np.exp(z) + eta + alpha * delta


def _log_mean_exp_neg(ys, weights, alpha):
    # log sum_i w_i exp(-y_i/alpha) for normalized weights, stably.
    lo = ys.min()
    inner = weights @ np.exp(-(ys - lo) / alpha)
    return -lo / alpha + math.log(inner)


def _profiled_eta(ys, weights, alpha):
    return alpha * _log_mean_exp_neg(ys, weights, alpha) - alpha


def _profiled_risk(ys, weights, alpha, delta):
    return alpha * _log_mean_exp_neg(ys, weights, alpha) + alpha * delta


def _golden_min(fun, lo, hi, iters=120):
    """Golden-section minimization of a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    xm = (a + b) / 2.0
    return xm, fun(xm)


def _alpha_search_cap(ys, delta):
    # Generous upper end for the alpha search. The optimum satisfies
    # alpha* <= O(range / sqrt(2*delta)) for well-behaved laws; the 1/delta
    # term keeps the cap safe for tiny radii where the optimum is large.
    rng = float(ys.max() - ys.min())
    return 1.0 + (rng + 1e-9) * (0.5 / math.sqrt(2.0 * delta) + 0.5 / delta)


def solve_dual(
    ys: Sequence[float],
    weights: Optional[Sequence[float]],
    delta: float,
    cfg: Optional[SolverConfig] = None,
) -> Tuple[DualParams, float]:
    """Minimize the weighted empirical dual risk over (alpha, eta).

    Returns the fitted ``DualParams`` and the attained minimum.  The
    returned value is the negated worst-case mean: callers recover the
    robust mean as ``-value``.
    """
    cfg = cfg or SolverConfig()
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim != 1 or len(ys) == 0:
        raise ValueError("ys must be a non-empty vector")
    if not np.all(np.isfinite(ys)):
        raise ValueError("non-finite operand: ys")
    if weights is None:
        w = np.full(len(ys), 1.0 / len(ys))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != ys.shape or np.any(w < 0):
            raise ValueError("weights must be non-negative and match ys")
        tot = w.sum()
        if not tot > 0:
            raise ValueError("weights must have positive sum")
        w = w / tot
    delta = float(delta)
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")

    floor = cfg.alpha_floor
    ymax_abs = float(np.abs(ys).max())

    if delta == 0.0:
        # The infimum is approached as alpha -> infinity where the risk
        # tends to -E[Y]; a huge fixed alpha with the exact profiled eta
        # is within O(var/alpha) of the limit.
        a0 = 1e6 * (float(ys.max() - ys.min()) + 1.0)
        e0 = _profiled_eta(ys, w, a0)
        theta = DualParams(a0, e0)
        val = float(w @ batch_loss(ys, a0, e0, 0.0))
        return theta, val

    cap = max(_alpha_search_cap(ys, delta), 10.0 * floor)
    eta_bound = 2.0 * (ymax_abs + 1.0) + cap

    def objective(z):
        a = max(z[0], floor)
        e = min(max(z[1], -eta_bound), eta_bound)
        return float(w @ batch_loss(ys, a, e, delta))

    # Deterministic restart grid centered on the plug-in scale sd/sqrt(2 delta).
    sd = float(np.sqrt(max(np.var(ys), 0.0)))
    center = max(sd, 1e-6 * (1.0 + ymax_abs)) / math.sqrt(2.0 * delta)
    lo = max(2.0 * floor, min(center / 8.0, cap / 2.0))
    hi = min(max(center * 8.0, lo * 4.0), cap)
    starts = np.geomspace(lo, hi, num=max(cfg.restarts, 1))

    best_theta = None
    best_val = math.inf
    n_failed = 0
    for a0 in starts:
        e0 = _profiled_eta(ys, w, a0)
        res = scipy.optimize.minimize(
            objective,
            np.array([a0, e0]),
            method="Nelder-Mead",
            options={
                "maxiter": cfg.max_iter,
                "xatol": cfg.xatol,
                "fatol": cfg.fatol,
            },
        )
        if not res.success:
            n_failed += 1
        if res.fun < best_val:
            best_val = float(res.fun)
            best_theta = (max(res.x[0], floor), min(max(res.x[1], -eta_bound), eta_bound))

    if cfg.polish:
        a_star, _ = _golden_min(
            lambda s: _profiled_risk(ys, w, math.exp(s), delta),
            math.log(floor),
            math.log(cap),
        )
        a_star = max(math.exp(a_star), floor)
        cand = (a_star, _profiled_eta(ys, w, a_star))
        cand_val = objective(cand)
        if cand_val < best_val:
            best_val, best_theta = cand_val, cand
        # Re-profile eta at the incumbent alpha; never hurts a convex risk.
        re_eta = _profiled_eta(ys, w, best_theta[0])
        re_val = objective((best_theta[0], re_eta))
        if re_val < best_val:
            best_val, best_theta = re_val, (best_theta[0], re_eta)
    elif n_failed == len(starts):
        raise SolverError(
            f"Nelder-Mead failed to converge in all {len(starts)} restarts",
            best_params=DualParams(*best_theta),
            best_value=best_val,
        )

    theta = DualParams(best_theta[0], min(max(best_theta[1], -eta_bound), eta_bound))
    return theta, float(best_val)


def binary_kl(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q)."""
    if not (0 <= p <= 1) or not (0 < q < 1):
        raise ValueError(f"invalid Bernoulli parameters p={p}, q={q}")
    out = 0.0
    if p > 0:
        out += p * math.log(p / q)
    if p < 1:
        out += (1 - p) * math.log((1 - p) / (1 - q))
    return out


def bernoulli_worst_mean(q: float, delta: float) -> float:
    """Smallest p with KL(Bern(p)||Bern(q)) <= delta (0 if the constraint allows it)."""
    q = float(q)
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must lie strictly inside (0, 1), got {q}")
    delta = float(delta)
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if delta == 0.0:
        return q
    if delta >= -math.log(1.0 - q):
        return 0.0
    lo, hi = 0.0, q
    for _ in range(100):
        mid = (lo + hi) / 2.0
        if binary_kl(mid, q) > delta:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def max_feasible_radius(dist: DiscreteDist) -> float:
    """-log(mass at the minimum): radii at or above this reach the essential infimum."""
    vmin = dist.values.min()
    p_min = dist.probs[dist.values == vmin].sum()
    if p_min >= 1.0:
        return math.inf
    return -math.log(p_min)


def _tilted(dist: DiscreteDist, t: float):
    # Q* proportional to P * exp(-y/t); shift by the minimum for stability.
    logw = np.log(np.maximum(dist.probs, 1e-300)) - (dist.values - dist.values.min()) / t
    logw -= scipy.special.logsumexp(logw)
    qs = np.exp(logw)
    mask = dist.probs > 0
    kl = float(np.sum(qs[mask] * (logw[mask] - np.log(dist.probs[mask]))))
    return qs, kl


def worst_case_mean_discrete(dist: DiscreteDist, delta: float) -> float:
    """Exact primal worst-case mean on a finite support.

    Bisects the tilt t of Q* proportional to P*exp(-y/t) until
    KL(Q*||P) = delta.  Radii at or beyond -log(mass at min) return the
    essential infimum exactly; that degenerate law is inside the ball.
    """
    delta = float(delta)
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if delta == 0.0:
        return dist.mean
    dmax = max_feasible_radius(dist)
    if delta >= dmax - 1e-15:
        return float(dist.values.min())

    lo, hi = math.log(1e-8), math.log(1e8)
    _, kl_hi = _tilted(dist, math.exp(hi))
    if kl_hi >= delta:
        # Radius below the resolution of the largest tilt: the mean moves
        # by less than ~range*1e-8, so the mildest tilt is the answer.
        qs, _ = _tilted(dist, math.exp(hi))
        return float(qs @ dist.values)
    for _ in range(200):
        mid = (lo + hi) / 2.0
        _, kl = _tilted(dist, math.exp(mid))
        if kl > delta:
            lo = mid
        else:
            hi = mid
    qs, _ = _tilted(dist, math.exp((lo + hi) / 2.0))
    return float(qs @ dist.values)
