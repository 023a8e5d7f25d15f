"""Homogeneous and time-inhomogeneous Poisson processes.

Rate functions are small immutable objects with a vectorised ``__call__``,
the integrated rate ``cumulative(t)`` and its inverse. Jump times are sampled
by pushing unit-rate arrivals through the inverse integrated rate, which
works for the singular ``(T - s)^-c`` family where thinning has no finite
majorant.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError
from .rng import SeedLike, as_generator

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_TABLE_CELLS = 1024


class RateFunction:
    """Nonnegative, locally integrable rate on ``[0, horizon)``."""

    horizon: float = math.inf

    def __call__(self, s):
        raise NotImplementedError

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t >= self.horizon) or np.any(np.isnan(t)):
            raise DomainError(f"t outside [0, {self.horizon}) for {self!r}")
        return t

    def cumulative(self, t):
        """Integrated rate from 0 to t."""
        t = self._check(t)
        out = self._cumulative(t)
        return float(out) if np.ndim(out) == 0 else out

    def _cumulative(self, t):
        return _vectorise(lambda u: _cached_quad(self, u), t)

    def inverse_cumulative(self, y, t_max: float):
        """Smallest t in [0, t_max] with cumulative(t) = y, for y <= cumulative(t_max)."""
        y = np.asarray(y, dtype=float)
        return self._inverse(y, float(t_max))

    def _inverse(self, y, t_max):
        return _NumericInverse.get(self, t_max)(y)

    def log(self, s):
        with np.errstate(divide="ignore"):
            return np.log(self(s))


def _vectorise(fn, t):
    if np.ndim(t) == 0:
        return fn(float(t))
    return np.array([fn(float(u)) for u in np.ravel(t)]).reshape(np.shape(t))


def _quad(rate, a, b):
    if b <= a:
        return 0.0
    val, _ = integrate.quad(rate, a, b, epsrel=1e-10, epsabs=0.0, limit=200)
    return val


@functools.lru_cache(maxsize=4096)
def _cached_quad(rate, t):
    # rate objects are frozen and hashable; repeated compensators reuse the integral
    return _quad(rate, 0.0, t)


@dataclass(frozen=True)
class Constant(RateFunction):
    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise DomainError("constant rate must be >= 0")

    def __call__(self, s):
        return np.full(np.shape(s), self.rate, dtype=float) if np.ndim(s) else self.rate

    def _cumulative(self, t):
        return self.rate * t

    def _inverse(self, y, t_max):
        if self.rate == 0:
            return np.zeros_like(y)
        return y / self.rate


@dataclass(frozen=True)
class PowerSingular(RateFunction):
    """(T - s)^(-c) on [0, T): the explosion-time tilt."""

    T: float
    c: float

    def __post_init__(self):
        if not (self.T > 0 and self.c > 0):
            raise DomainError("PowerSingular needs T > 0 and c > 0")

    @property
    def horizon(self):
        return self.T

    def __call__(self, s):
        return (self.T - np.asarray(s, dtype=float)) ** (-self.c)

    def log(self, s):
        return -self.c * np.log(self.T - np.asarray(s, dtype=float))

    def _cumulative(self, t):
        T, c = self.T, self.c
        if c == 1:
            return np.log(T / (T - t))
        return ((T - t) ** (1 - c) - T ** (1 - c)) / (c - 1)

    def _inverse(self, y, t_max):
        T, c = self.T, self.c
        if c == 1:
            return T - T * np.exp(-y)
        return T - (T ** (1 - c) + (c - 1) * y) ** (1.0 / (1 - c))


@dataclass(frozen=True)
class CaseB(RateFunction):
    """c / (lam (1 - p)) * s^(b-1) / log(s + 2)^b with b = 1 / (1 - p)."""

    c: float
    lam: float
    p: float

    def __post_init__(self):
        if not (self.c > 0 and self.lam > 0 and 0 < self.p < 1):
            raise DomainError("CaseB needs c > 0, lam > 0, 0 < p < 1")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        b = 1.0 / (1.0 - self.p)
        out = self.c / (self.lam * (1.0 - self.p)) * s ** (b - 1.0) / np.log(s + 2.0) ** b
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CaseC(RateFunction):
    """exp(alpha sqrt(s))."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError("CaseC needs alpha > 0")

    def __call__(self, s):
        out = np.exp(self.alpha * np.sqrt(np.asarray(s, dtype=float)))
        return float(out) if out.ndim == 0 else out

    def log(self, s):
        return self.alpha * np.sqrt(np.asarray(s, dtype=float))

    def _cumulative(self, t):
        # substitute u = sqrt(s): int_0^sqrt(t) 2u e^{alpha u} du
        a = self.alpha
        u = np.sqrt(t)
        return 2.0 * (np.exp(a * u) * (u / a - 1.0 / a ** 2) + 1.0 / a ** 2)


@dataclass(frozen=True)
class UpperCaseC(RateFunction):
    """exp(alpha sqrt(s)) / sqrt(s + 1), the tilt used for the p = 1 upper bound."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError("UpperCaseC needs alpha > 0")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.exp(self.alpha * np.sqrt(s)) / np.sqrt(s + 1.0)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Reciprocal(RateFunction):
    base: RateFunction

    @property
    def horizon(self):
        return self.base.horizon

    def __call__(self, s):
        with np.errstate(divide="ignore"):
            return 1.0 / self.base(s)

    def log(self, s):
        return -self.base.log(s)

    def _cumulative(self, t):
        if isinstance(self.base, Constant):
            return t / self.base.rate
        if isinstance(self.base, PowerSingular):
            T, c = self.base.T, self.base.c
            return (T ** (c + 1) - (T - t) ** (c + 1)) / (c + 1)
        out = super()._cumulative(t)
        if not np.all(np.isfinite(out)):
            raise DomainError("reciprocal rate is not integrable here")
        return out


@dataclass(frozen=True)
class Scaled(RateFunction):
    """factor * base(s); used for the jump rates lam * theta(s)."""

    base: RateFunction
    factor: float

    @property
    def horizon(self):
        return self.base.horizon

    def __call__(self, s):
        return self.factor * self.base(s)

    def _cumulative(self, t):
        return self.factor * self.base._cumulative(t)

    def _inverse(self, y, t_max):
        if self.factor == 0:
            return np.zeros_like(y)
        return self.base._inverse(y / self.factor, t_max)


class _NumericInverse:
    """Tabulated integrated rate plus safeguarded Newton inside each cell.

    Cell integrals come from adaptive quadrature; partial integrals inside a
    cell use fixed Gauss-Legendre, which is exact to rounding for the smooth
    families shipped here.
    """

    _cache: dict = {}

    def __init__(self, rate: RateFunction, t_max: float):
        self.rate = rate
        self.nodes = np.linspace(0.0, t_max, _TABLE_CELLS + 1)
        cells = [_quad(rate, a, b) for a, b in zip(self.nodes[:-1], self.nodes[1:])]
        self.table = np.concatenate([[0.0], np.cumsum(cells)])

    @classmethod
    def get(cls, rate, t_max):
        key = (rate, t_max)
        inv = cls._cache.get(key)
        if inv is None:
            if len(cls._cache) > 64:
                cls._cache.clear()
            inv = cls._cache[key] = cls(rate, t_max)
        return inv

    def _partial(self, a, t):
        half = 0.5 * (t - a)
        pts = a[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
        return half * (self.rate(pts) * _GL_WEIGHTS[None, :]).sum(axis=1)

    def __call__(self, y):
        shape = np.shape(y)
        y = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
        if np.any(y < 0) or np.any(y > self.table[-1] * (1 + 1e-12)):
            raise DomainError("value outside the integrated-rate range")
        k = np.clip(np.searchsorted(self.table, y, side="left") - 1, 0, _TABLE_CELLS - 1)
        lo = self.nodes[k].copy()
        hi = self.nodes[k + 1].copy()
        base = self.table[k]
        frac = (y - base) / np.maximum(self.table[k + 1] - base, 1e-300)
        x = lo + (hi - lo) * np.clip(frac, 0, 1)
        for _ in range(60):
            f = base + self._partial(self.nodes[k], x) - y
            lo = np.where(f < 0, x, lo)
            hi = np.where(f >= 0, x, hi)
            r = self.rate(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_new = x - f / r
            bad = ~np.isfinite(x_new) | (x_new <= lo) | (x_new >= hi)
            x_new = np.where(bad, 0.5 * (lo + hi), x_new)
            done = np.abs(x_new - x) <= 1e-13 * (1.0 + np.abs(x))
            x = x_new
            if np.all(done):
                break
        return x.reshape(shape) if shape else float(x[0])


def cumulative_rate(spec: RateFunction, t):
    return spec.cumulative(t)


@dataclass(frozen=True)
class JumpPath:
    """Strictly ascending jump times on ``[0, horizon)``."""

    jump_times: np.ndarray
    horizon: float = math.inf

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        object.__setattr__(self, "jump_times", jt)
        if jt.size:
            if np.any(np.diff(jt) <= 0):
                raise DomainError("jump times must be strictly ascending")
            if jt[0] < 0 or jt[-1] >= self.horizon:
                raise DomainError("jump times must lie in [0, horizon)")

    def count(self, t):
        """Y_t, the number of jumps at times <= t."""
        out = np.searchsorted(self.jump_times, t, side="right")
        return int(out) if np.ndim(out) == 0 else out


def _arrivals(rng: np.random.Generator, total: float) -> np.ndarray:
    """Unit-rate Poisson arrival epochs in [0, total)."""
    chunks = []
    last = 0.0
    n = max(16, int(total + 6 * math.sqrt(total) + 16))
    while True:
        epochs = last + np.cumsum(rng.standard_exponential(n))
        inside = epochs[epochs < total]
        chunks.append(inside)
        if inside.size < n:
            break
        last = epochs[-1]
    return np.concatenate(chunks) if chunks else np.empty(0)


def sample_inhomogeneous_poisson(spec: RateFunction, t_max: float, seed: SeedLike) -> JumpPath:
    """Jump times on [0, t_max] of a Poisson process with rate ``spec``."""
    rng = as_generator(seed, "ipp")
    if not 0 <= t_max < spec.horizon:
        raise DomainError("t_max outside the rate's domain")
    total = spec.cumulative(t_max)
    epochs = _arrivals(rng, total)
    times = spec.inverse_cumulative(epochs, t_max) if epochs.size else epochs
    times = np.atleast_1d(np.asarray(times, dtype=float))
    times = np.minimum(times, t_max)
    # inversion rounding can create exact ties in extremely dense stretches
    times = np.unique(times)
    return JumpPath(times, horizon=spec.horizon)


@dataclass
class JumpPaths:
    """Many jump paths stored flat: path i is ``times[offsets[i]:offsets[i+1]]``."""

    times: np.ndarray
    offsets: np.ndarray
    horizon: float = math.inf
    path_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.path_index = np.repeat(np.arange(len(self)), np.diff(self.offsets))

    def __len__(self):
        return self.offsets.size - 1

    def __getitem__(self, i) -> JumpPath:
        return JumpPath(self.times[self.offsets[i]:self.offsets[i + 1]], self.horizon)

    def count(self, t) -> np.ndarray:
        return np.bincount(self.path_index[self.times <= t], minlength=len(self))

    def stieltjes(self, f: Callable, t: float) -> np.ndarray:
        mask = self.times <= t
        return np.bincount(self.path_index[mask], weights=f(self.times[mask]), minlength=len(self))


def sample_many(spec: RateFunction, t_max: float, n_paths: int, seed: SeedLike) -> JumpPaths:
    """``n_paths`` independent paths on [0, t_max].

    Uses the order-statistics form of the same construction: the number of
    unit-rate arrivals below cumulative(t_max) is Poisson, and given the
    count they are sorted uniforms.
    """
    rng = as_generator(seed, "ipp-many")
    total = spec.cumulative(t_max)
    counts = rng.poisson(total, size=n_paths)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    epochs = rng.uniform(0.0, total, size=offsets[-1])
    idx = np.repeat(np.arange(n_paths), counts)
    order = np.lexsort((epochs, idx))
    epochs = epochs[order]
    times = spec.inverse_cumulative(epochs, t_max) if epochs.size else epochs
    return JumpPaths(np.atleast_1d(np.asarray(times, dtype=float)), offsets, spec.horizon)


def sample_counts(spec: RateFunction, times: Sequence[float], n_paths: int,
                  seed: SeedLike) -> np.ndarray:
    """Y at each of the ascending ``times`` for ``n_paths`` paths, via
    independent Poisson increments of the integrated rate."""
    rng = as_generator(seed, "ipp-counts")
    cum = np.asarray(spec.cumulative(np.asarray(times, dtype=float)), dtype=float)
    inc = np.diff(np.concatenate([[0.0], cum]))
    return np.cumsum(rng.poisson(inc, size=(n_paths, inc.size)), axis=1)


def stieltjes_integral(f: Callable, path: JumpPath, t: float) -> float:
    """Sum of f over the jump times <= t."""
    jt = path.jump_times[path.jump_times <= t]
    if jt.size == 0:
        return 0.0
    return float(np.sum(f(jt)))


def log_exponential_martingale(theta: RateFunction, lam: float, path: JumpPath, t: float) -> float:
    jt = path.jump_times[path.jump_times <= t]
    with np.errstate(divide="ignore"):
        s = float(np.sum(theta.log(jt))) if jt.size else 0.0
    return s + lam * (t - theta.cumulative(t))


def exponential_martingale(theta: RateFunction, lam: float, path: JumpPath, t: float) -> float:
    """prod theta(J_i) * exp(lam * int_0^t (1 - theta)); 0 if theta vanishes at a jump."""
    return math.exp(log_exponential_martingale(theta, lam, path, t))


def exponential_martingale_many(theta: RateFunction, lam: float, paths: JumpPaths,
                                t: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logs = paths.stieltjes(theta.log, t)
    return np.exp(logs + lam * (t - theta.cumulative(t)))
