"""Closed-form and numerical predictors for the rightmost particle.

All functions are pure; the only state is the :class:`ModelParams` triple.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, UnsupportedRegimeError

THETA_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Jump rate ``lam`` (each direction), breeding coefficient ``beta`` and
    breeding exponent ``p`` of the potential ``beta * |x| ** p``.

    Zero ``lam`` or ``beta`` is accepted for degenerate checks (no motion,
    no branching); operations that need them positive say so.
    """

    lam: float
    beta: float
    p: float

    def __post_init__(self):
        for name in ("lam", "beta", "p"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")

    def branch_rate(self, x):
        """beta * |x|**p, with the rate at x = 0 exactly 0 when p > 0."""
        ax = np.abs(np.asarray(x, dtype=float))
        if self.p == 0:
            return self.beta * np.ones_like(ax)
        return self.beta * ax ** self.p

    def as_dict(self) -> dict:
        return {"lam": self.lam, "beta": self.beta, "p": self.p}


class Regime(enum.Enum):
    P_ZERO = "p_zero"
    P_IN_0_1 = "p_in_0_1"
    P_ONE = "p_one"
    EXPLOSIVE = "explosive"


def regime(p: float) -> Regime:
    if p == 0:
        return Regime.P_ZERO
    if p < 1:
        return Regime.P_IN_0_1
    if p == 1:
        return Regime.P_ONE
    return Regime.EXPLOSIVE


@dataclass(frozen=True)
class AsymptoticPrediction:
    regime: Regime
    theta_hat: Optional[float] = None
    speed: Optional[float] = None
    b_hat: Optional[float] = None
    c_hat: Optional[float] = None
    exp_rate: Optional[float] = None


def g(theta: float) -> float:
    """(theta - 1/theta) log theta - (theta + 1/theta) + 2."""
    if not theta > 0:
        raise DomainError(f"g needs theta > 0, got {theta!r}")
    inv = 1.0 / theta
    return (theta - inv) * math.log(theta) - (theta + inv) + 2.0


def solve_theta_hat(params: ModelParams) -> float:
    """Unique root of g(theta) = beta/lam on [1, inf), by bisection.

    The upper bracket starts at 2 and doubles until g exceeds the target.
    beta = 0 gives theta_hat = 1 (speed 0).
    """
    if params.lam <= 0:
        raise DomainError("lam must be > 0 here")
    target = params.beta / params.lam
    if target == 0:
        return 1.0
    lo, hi = 1.0, 2.0
    while g(hi) <= target:
        lo, hi = hi, 2.0 * hi
    while hi - lo > THETA_TOL * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rate_function(x, lam: float):
    """Large-deviation cost of the walk travelling at speed x >= 0.

    Evaluated as ``x asinh(x/2lam) - x^2/(2lam + sqrt(x^2 + 4lam^2))``, which is
    algebraically the textbook form but has no cancellation near x = 0.
    """
    if lam <= 0:
        raise DomainError("lam must be > 0")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("rate_function is defined on x >= 0")
    root = np.sqrt(arr * arr + 4.0 * lam * lam)
    out = arr * np.arcsinh(arr / (2.0 * lam)) - arr * arr / (2.0 * lam + root)
    return float(out) if np.ndim(out) == 0 else out


def rate_function_derivative(x, lam: float):
    arr = np.asarray(x, dtype=float)
    out = np.arcsinh(arr / (2.0 * lam))
    return float(out) if np.ndim(out) == 0 else out


def rate_function_inverse(y: float, lam: float) -> float:
    """The unique x >= 0 with rate_function(x) = y (Newton, bisection fallback)."""
    if lam <= 0:
        raise DomainError("lam must be > 0")
    if not y >= 0:
        raise DomainError(f"rate_function_inverse needs y >= 0, got {y!r}")
    if y == 0:
        return 0.0
    if math.isinf(y):
        return math.inf
    tol = 1e-10 * max(1.0, y)
    if y > 2.0 * lam:
        x = y / max(math.log(y), 1.0)
    else:
        # near 0 the cost is x^2/(4 lam); start on the convex side of the root
        x = max(y / rate_function_derivative(1.0, lam), 2.0 * math.sqrt(lam * y))
    for _ in range(100):
        fx = rate_function(x, lam) - y
        dfx = rate_function_derivative(x, lam)
        if dfx <= 0:
            break
        step = fx / dfx
        x_new = x - step
        if x_new <= 0:
            x_new = 0.5 * x
        if abs(x_new - x) <= 1e-15 * x:
            x = x_new
            if abs(rate_function(x, lam) - y) <= tol:
                return x
            break
        x = x_new
    return _inverse_bisect(y, lam, tol)


def _inverse_bisect(y: float, lam: float, tol: float) -> float:
    lo, hi = 0.0, 1.0
    while rate_function(hi, lam) < y:
        lo, hi = hi, 2.0 * hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if rate_function(mid, lam) < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def predict(params: ModelParams) -> AsymptoticPrediction:
    """Regime and constants of the rightmost-particle law for ``params``."""
    r = regime(params.p)
    if r is Regime.P_ZERO:
        th = solve_theta_hat(params)
        return AsymptoticPrediction(r, theta_hat=th, speed=params.lam * (th - 1.0 / th))
    if r is Regime.P_IN_0_1:
        b = 1.0 / (1.0 - params.p)
        c = (params.beta * (1.0 - params.p) ** 2 / params.p) ** b
        return AsymptoticPrediction(r, b_hat=b, c_hat=c)
    if r is Regime.P_ONE:
        return AsymptoticPrediction(r, exp_rate=math.sqrt(2.0 * params.beta))
    return AsymptoticPrediction(r)


def limit_constant(params: ModelParams) -> float:
    """The almost-sure limit of the regime's normalised rightmost position:
    the speed for p = 0, c_hat for 0 < p < 1, sqrt(2 beta) for p = 1."""
    pred = predict(params)
    if pred.regime is Regime.P_ZERO:
        return pred.speed
    if pred.regime is Regime.P_IN_0_1:
        return pred.c_hat
    if pred.regime is Regime.P_ONE:
        return pred.exp_rate
    raise UnsupportedRegimeError("no rightmost-particle limit for p > 1")


def normalise_rightmost(params: ModelParams, t, rightmost):
    """Map R_t onto the scale on which it converges to ``limit_constant``.

    p = 0: R_t / t;  0 < p < 1: (log t / t)^b_hat R_t;  p = 1: log R_t / sqrt t,
    with R_t floored at 1 before the logarithm.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(rightmost, dtype=float)
    reg = regime(params.p)
    if reg is Regime.P_ZERO:
        return r / t
    if reg is Regime.P_IN_0_1:
        b = 1.0 / (1.0 - params.p)
        return (np.log(t) / t) ** b * r
    if reg is Regime.P_ONE:
        return np.log(np.maximum(r, 1.0)) / np.sqrt(t)
    raise UnsupportedRegimeError("no rightmost-particle limit for p > 1")


def predict_rightmost(params: ModelParams, t: float) -> float:
    """Leading-order rightmost position at time t."""
    pred = predict(params)
    if pred.regime is Regime.EXPLOSIVE:
        raise UnsupportedRegimeError("p > 1 explodes in finite time")
    if pred.regime is Regime.P_ZERO:
        return pred.speed * t
    if pred.regime is Regime.P_IN_0_1:
        if t <= math.e:
            raise DomainError("the 0 < p < 1 prediction needs t > e")
        return pred.c_hat * (t / math.log(t)) ** pred.b_hat
    return math.exp(pred.exp_rate * math.sqrt(t))


def optimal_path(params: ModelParams, t_grid: Sequence[float], f0: float = 1.0,
                 tol: float = 1e-8) -> np.ndarray:
    """Integrate f' = rate_function_inverse(beta f^p) from f(t_grid[0]) = f0.

    Classical RK4 with step doubling; the local error allowed per step is
    ``tol * h * max(1, |f|)``.
    """
    if params.p > 1:
        raise UnsupportedRegimeError("optimal paths blow up for p > 1")
    if not f0 > 0:
        raise DomainError("f0 must be > 0 (the zero path is a degenerate solution)")
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] <= 0 or np.any(np.diff(grid) < 0):
        raise DomainError("t_grid must be ascending with t_grid[0] > 0")

    lam, beta, p = params.lam, params.beta, params.p

    def rhs(f):
        if beta == 0:
            return 0.0
        return rate_function_inverse(beta * max(f, 0.0) ** p, lam)

    def rk4(f, h):
        k1 = rhs(f)
        k2 = rhs(f + 0.5 * h * k1)
        k3 = rhs(f + 0.5 * h * k2)
        k4 = rhs(f + h * k3)
        return f + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

    out = np.empty_like(grid)
    out[0] = f0
    t, f = grid[0], f0
    h = min(1e-2, max(grid[-1] - grid[0], 1e-12))
    for i in range(1, grid.size):
        target = grid[i]
        while t < target:
            h = min(h, target - t)
            full = rk4(f, h)
            half = rk4(rk4(f, 0.5 * h), 0.5 * h)
            err = abs(half - full) / 15.0
            allowed = tol * h * max(1.0, abs(half))
            if err <= allowed or h < 1e-12:
                t += h
                if target - t <= 1e-13 * target:
                    t = target
                f = half + (half - full) / 15.0
                grow = 2.0 if err < allowed / 32.0 else 1.0
                h *= grow
            else:
                h *= 0.5
        out[i] = f
    return out
