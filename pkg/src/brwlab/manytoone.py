"""Single-path Feynman-Kac oracle for expected population functionals.

E[sum over particles of F(path)] equals the expectation over one lam-walk of
F(path) * exp(beta * int_0^t |X_s|^p ds). The integral is exact because the
walk is piecewise constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .analytics import ModelParams, optimal_path
from .errors import DomainError, InfiniteExpectationError
from .rng import as_generator

CHUNK = 100_000


@dataclass(frozen=True)
class WeightedPathEstimate:
    mean: float
    standard_error: float
    replicas: int
    max_weight: float
    hits: Optional[int] = None

    def interval(self, n_se: float = 3.0):
        return self.mean - n_se * self.standard_error, self.mean + n_se * self.standard_error

    def overlaps(self, other: "WeightedPathEstimate", n_se: float = 3.0) -> bool:
        lo1, hi1 = self.interval(n_se)
        lo2, hi2 = other.interval(n_se)
        return lo1 <= hi2 and lo2 <= hi1


@dataclass
class WalkChunk:
    """``n`` walk paths on [0, t], flattened by constancy interval: interval
    k of path ``path[k]`` is [left[k], right[k]) at position ``pos[k]``."""

    n: int
    path: np.ndarray
    left: np.ndarray
    right: np.ndarray
    pos: np.ndarray


def walk_chunks(lam: float, t: float, replicas: int, seed: int, start: int = 0,
                chunk: int = CHUNK) -> Iterator[WalkChunk]:
    """Rate-lam-each-way walks, in chunks; chunk j uses stream (seed, "walk", j).

    The jump count is Poisson(2 lam t) and, given the count, jump times are
    sorted uniforms and directions fair coin flips.
    """
    for j, lo in enumerate(range(0, replicas, chunk)):
        n = min(chunk, replicas - lo)
        rng = as_generator(seed, "walk", j)
        counts = rng.poisson(2.0 * lam * t, size=n)
        total = int(counts.sum())
        owner = np.repeat(np.arange(n), counts)
        u = rng.uniform(0.0, t, size=total)
        steps = np.where(rng.random(total) < 0.5, 1, -1)
        order = np.lexsort((u, owner))
        u = u[order]
        # each path has counts[i] + 1 intervals
        n_int = counts + 1
        first = np.concatenate([[0], np.cumsum(n_int)[:-1]])
        path = np.repeat(np.arange(n), n_int)
        left = np.zeros(total + n)
        right = np.full(total + n, float(t))
        is_first = np.zeros(total + n, bool)
        is_first[first] = True
        jump_slots = np.flatnonzero(~is_first)
        left[jump_slots] = u
        right[jump_slots - 1] = u
        inc = np.zeros(total + n, np.int64)
        inc[jump_slots] = steps
        csum = np.cumsum(inc)
        pos = start + csum - np.repeat(csum[first], n_int)
        yield WalkChunk(n, path, left, right, pos)


def _log_weights(params: ModelParams, ch: WalkChunk) -> np.ndarray:
    dur = ch.right - ch.left
    rate = params.branch_rate(ch.pos)
    return np.bincount(ch.path, weights=rate * dur, minlength=ch.n)


def _finish(weights_sum: float, sq_sum: float, n: int, max_w: float, hits=None):
    mean = weights_sum / n
    var = max(sq_sum / n - mean * mean, 0.0) * n / (n - 1) if n > 1 else 0.0
    return WeightedPathEstimate(mean, math.sqrt(var / n), n, max_w, hits)


def _check(params: ModelParams, t: float, replicas: int):
    if params.p > 1:
        raise InfiniteExpectationError("E|N_t| is infinite for every t > 0 when p > 1")
    if not t > 0:
        raise DomainError("t must be > 0")
    if replicas < 1:
        raise DomainError("replicas must be >= 1")


def path_weights(params: ModelParams, t: float, replicas: int, seed: int, start: int = 0):
    """Per-replica weights exp(int_0^t beta |X_s|^p ds)."""
    _check(params, t, replicas)
    return np.concatenate([np.exp(_log_weights(params, ch))
                           for ch in walk_chunks(params.lam, t, replicas, seed, start)])


def expected_population(params: ModelParams, t: float, replicas: int, seed: int,
                        start: int = 0) -> WeightedPathEstimate:
    """Monte Carlo estimate of E|N_t|."""
    _check(params, t, replicas)
    sums, sqs, mx = [], [], 0.0
    for ch in walk_chunks(params.lam, t, replicas, seed, start):
        w = np.exp(_log_weights(params, ch))
        sums.append(np.sum(w))
        sqs.append(np.sum(w * w))
        mx = max(mx, float(w.max()))
    return _finish(math.fsum(sums), math.fsum(sqs), replicas, mx)


def corridor_indicator(ch: WalkChunk, f: Callable, delta: float,
                       critical_points: Sequence[float] = ()) -> np.ndarray:
    """Per path: True if |X_s - f(s)| <= delta on the whole interval.

    Position is constant on each interval, so it is enough to check f at the
    interval ends and at any interior extremum of f (``critical_points``).
    """
    ok = (np.abs(ch.pos - f(ch.left)) <= delta) & (np.abs(ch.pos - f(ch.right)) <= delta)
    for c in critical_points:
        inside = (ch.left < c) & (c < ch.right)
        ok &= ~inside | (np.abs(ch.pos - f(np.full(ch.pos.size, c))) <= delta)
    bad = np.bincount(ch.path, weights=(~ok).astype(float), minlength=ch.n)
    return bad == 0


def corridor_weights(params: ModelParams, f: Callable, delta: float, t: float, replicas: int,
                     seed: int, start: int = 0, critical_points: Sequence[float] = ()):
    """Per-replica indicator * weight, on the same streams as :func:`path_weights`."""
    _check(params, t, replicas)
    out = []
    for ch in walk_chunks(params.lam, t, replicas, seed, start):
        ind = corridor_indicator(ch, f, delta, critical_points)
        out.append(np.where(ind, np.exp(_log_weights(params, ch)), 0.0))
    return np.concatenate(out)


def corridor_expectation(params: ModelParams, f: Callable, delta: float, t: float,
                         replicas: int, seed: int, start: int = 0,
                         critical_points: Sequence[float] = ()) -> WeightedPathEstimate:
    """Expected number of particles whose path stays within delta of f on [0, t].

    ``hits`` counts the sampled paths that stayed inside; zero hits means the
    estimate is uninformative, not that the expectation is zero.
    """
    if not delta > 0:
        raise DomainError("delta must be > 0")
    _check(params, t, replicas)
    sums, sqs, mx, hits = [], [], 0.0, 0
    for ch in walk_chunks(params.lam, t, replicas, seed, start):
        ind = corridor_indicator(ch, f, delta, critical_points)
        w = np.where(ind, np.exp(_log_weights(params, ch)), 0.0)
        sums.append(np.sum(w))
        sqs.append(np.sum(w * w))
        hits += int(ind.sum())
        if ind.any():
            mx = max(mx, float(w.max()))
    return _finish(math.fsum(sums), math.fsum(sqs), replicas, mx, hits)


def optimal_path_function(params: ModelParams, t_max: float, f0: float = 1e-9,
                          t0: float = 1e-9, points: int = 2001) -> Callable:
    """The optimal path as a callable on [0, t_max], by linear interpolation
    of the ODE solution on a uniform grid; constant f0 before t0."""
    grid = np.linspace(t0, t_max, points)
    vals = optimal_path(params, grid, f0=f0)
    return lambda s: np.interp(s, grid, vals, left=f0)
