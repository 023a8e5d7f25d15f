"""Tilted (spine) measures, the additive martingale and the spine decomposition.

Under the tilted law the distinguished line of descent jumps up at rate
lam * up(t) and down at rate lam * down(t) and splits at the doubled rate
2 beta |x|^p; each split sheds an ordinary untilted subtree. The additive
martingale weights each particle u alive at t by

    exp( sum log up(J) over u's up-jumps + sum log down(J) over down-jumps
         + lam * int_0^t (2 - up - down) - beta * int_0^t |X_u|^p ),

inheriting the ancestors' path before u's birth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numba import njit

from . import poisson
from .analytics import ModelParams, Regime, predict, regime
from .errors import DomainError, PreconditionError, UnsupportedRegimeError
from .poisson import (CaseB, CaseC, Constant, JumpPath, PowerSingular, RateFunction,
                      Reciprocal, UpperCaseC)
from .rng import SeedLike, as_generator
from .simulator.core import (DEFAULT_EVENT_CAP, DEFAULT_POPULATION_CAP, Termination, TreeRecord,
                             simulate_tree)


@dataclass(frozen=True)
class ThetaSchedule:
    up: RateFunction
    down: RateFunction
    family: str = "custom"

    @property
    def horizon(self) -> float:
        return min(self.up.horizon, self.down.horizon)

    @classmethod
    def identity(cls):
        return cls(Constant(1.0), Constant(1.0), "identity")

    @classmethod
    def case_a(cls, theta0: float):
        if not theta0 > 0:
            raise DomainError("theta0 must be > 0")
        return cls(Constant(theta0), Constant(1.0 / theta0), "case_a")

    @classmethod
    def case_b(cls, c: float, params: ModelParams):
        return cls(CaseB(c, params.lam, params.p), Constant(1.0), "case_b")

    @classmethod
    def case_b_upper(cls, c: float, params: ModelParams):
        # 1/theta_B ~ s^(1 - b) near 0, integrable only for b < 2
        if params.p >= 0.5:
            raise DomainError("the reciprocal case B tilt is not integrable at 0 for p >= 1/2")
        up = CaseB(c, params.lam, params.p)
        return cls(up, Reciprocal(up), "case_b_upper")

    @classmethod
    def case_c(cls, alpha: float):
        return cls(CaseC(alpha), Constant(1.0), "case_c")

    @classmethod
    def case_c_upper(cls, alpha: float):
        up = UpperCaseC(alpha)
        return cls(up, Reciprocal(up), "case_c_upper")

    @classmethod
    def explosion(cls, T: float, c: float):
        return cls(PowerSingular(T, c), Constant(1.0), "explosion")

    def compensator(self, lam: float, t):
        """lam * int_0^t (2 - up - down)."""
        return lam * (2.0 * np.asarray(t, dtype=float)
                      - self.up.cumulative(t) - self.down.cumulative(t))

    def describe(self) -> dict:
        return {"family": self.family, "up": repr(self.up), "down": repr(self.down)}


def critical_value(params: ModelParams, family: str) -> float:
    """The tilt parameter separating the uniformly integrable and degenerate
    regimes: theta_hat (case A, p = 0), c_hat (case B), sqrt(2 beta) (case C)."""
    pred = predict(params)
    if family == "case_a":
        if pred.regime is not Regime.P_ZERO:
            raise UnsupportedRegimeError("case A tilts go with p = 0")
        return pred.theta_hat
    if family == "case_b":
        if pred.regime is not Regime.P_IN_0_1:
            raise UnsupportedRegimeError("case B tilts go with 0 < p < 1")
        return pred.c_hat
    if family == "case_c":
        if pred.regime is not Regime.P_ONE:
            raise UnsupportedRegimeError("case C tilts go with p = 1")
        return pred.exp_rate
    raise DomainError(f"no critical value for family {family!r}")


@dataclass
class SpineRecord:
    up_jumps: JumpPath
    down_jumps: JumpPath
    birth_times: np.ndarray
    start: int
    t_max: float
    # merged jump sequence, kept for fast position lookups
    jump_times: np.ndarray = field(repr=False, default=None)
    jump_steps: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.jump_times is None:
            self.jump_times, self.jump_steps = _merge(self.up_jumps, self.down_jumps)

    def position(self, t):
        """xi_t = start + up-count(t) - down-count(t)."""
        k = np.searchsorted(self.jump_times, t, side="right")
        csum = np.concatenate([[0], np.cumsum(self.jump_steps)])
        out = self.start + csum[k]
        return int(out) if np.ndim(out) == 0 else out

    def birth_count(self, t) -> int:
        return int(np.searchsorted(self.birth_times, t, side="right"))

    def birth_positions(self) -> np.ndarray:
        return np.asarray(self.position(self.birth_times), dtype=np.int64)


def _merge(up: JumpPath, down: JumpPath):
    times = np.concatenate([up.jump_times, down.jump_times])
    steps = np.concatenate([np.ones(up.jump_times.size, np.int64),
                            -np.ones(down.jump_times.size, np.int64)])
    order = np.argsort(times, kind="stable")
    return times[order], steps[order]


def _potential_cumulative(params: ModelParams, start, times, steps, t_max):
    """Interval edges, the fission rate 2 beta |xi|^p on each interval and its
    running integral at the edges."""
    edges = np.concatenate([[0.0], times, [t_max]])
    pos = start + np.concatenate([[0], np.cumsum(steps)])
    rate = 2.0 * params.branch_rate(pos)
    cum = np.concatenate([[0.0], np.cumsum(rate * np.diff(edges))])
    return edges, rate, cum


def simulate_spine(params: ModelParams, theta: ThetaSchedule, t_max: float, seed: SeedLike,
                   start: int = 0) -> SpineRecord:
    """Spine path and its fission times on [0, t_max].

    Fission times form a Cox process driven by the realised path; since the
    path is piecewise constant its integrated intensity is piecewise linear
    and is inverted exactly.
    """
    if not 0 <= t_max < theta.horizon:
        raise DomainError("t_max must lie in [0, theta.horizon)")
    rng = as_generator(seed, "spine")
    lam = params.lam
    up = poisson.sample_inhomogeneous_poisson(poisson.Scaled(theta.up, lam), t_max,
                                              as_generator(int(rng.integers(2 ** 63)), "up"))
    down = poisson.sample_inhomogeneous_poisson(poisson.Scaled(theta.down, lam), t_max,
                                                as_generator(int(rng.integers(2 ** 63)), "down"))
    times, steps = _merge(up, down)
    edges, rate, cum = _potential_cumulative(params, start, times, steps, t_max)
    births = poisson._arrivals(rng, cum[-1])
    if births.size:
        # left search lands on an interval with positive rate even after flat stretches
        k = np.clip(np.searchsorted(cum, births, side="left") - 1, 0, rate.size - 1)
        births = edges[k] + (births - cum[k]) / rate[k]
        births = np.unique(np.minimum(births, t_max))
    return SpineRecord(up, down, births, int(start), float(t_max), times, steps)


def spine_birth_count(params: ModelParams, theta: ThetaSchedule, t: float, seed: SeedLike,
                      start: int = 0) -> int:
    """n_t for one spine, without materialising the fission times: given the
    path, n_t is Poisson with mean int_0^t 2 beta |xi|^p."""
    rng = as_generator(seed, "spine-count")
    lam = params.lam
    up = poisson.sample_inhomogeneous_poisson(poisson.Scaled(theta.up, lam), t,
                                              as_generator(int(rng.integers(2 ** 63)), "up"))
    down = poisson.sample_inhomogeneous_poisson(poisson.Scaled(theta.down, lam), t,
                                                as_generator(int(rng.integers(2 ** 63)), "down"))
    times, steps = _merge(up, down)
    _, _, cum = _potential_cumulative(params, start, times, steps, t)
    return int(rng.poisson(cum[-1]))


@dataclass
class Subtree:
    birth_time: float
    birth_pos: int
    tree: TreeRecord
    terminated_reason: Termination


@dataclass
class TiltedTree:
    """Spine plus one untilted subtree per fission. ``merged()`` gives the
    whole population as a single :class:`TreeRecord` with the spine as
    particle 0."""

    params: ModelParams
    spine: SpineRecord
    subtrees: List[Subtree]

    @property
    def capped(self) -> bool:
        return any(s.terminated_reason is not Termination.HORIZON for s in self.subtrees)

    def merged(self) -> TreeRecord:
        sp = self.spine
        parents = [np.array([-1], np.int64)]
        births = [np.array([0.0])]
        bpos = [np.array([sp.start], np.int64)]
        counts = [np.array([sp.jump_times.size], np.int64)]
        jt = [sp.jump_times]
        js = [sp.jump_steps]
        base = 1
        for st in self.subtrees:
            tr = st.tree
            par = tr.parent.copy()
            par[par >= 0] += base
            par[par < 0] = 0
            parents.append(par)
            births.append(tr.birth_time)
            bpos.append(tr.birth_pos)
            counts.append(np.diff(tr.jump_offsets))
            jt.append(tr.jump_times)
            js.append(tr.jump_steps)
            base += tr.size
        counts = np.concatenate(counts)
        return TreeRecord(np.concatenate(parents), np.concatenate(births), np.concatenate(bpos),
                          np.concatenate([[0], np.cumsum(counts)]), np.concatenate(jt),
                          np.concatenate(js), sp.t_max)

    def rightmost(self, t: float) -> int:
        tr = self.merged()
        return int(tr.positions(t)[tr.alive(t)].max())


def grow_subtrees(params: ModelParams, spine: SpineRecord, seed: SeedLike,
                  population_cap: int = DEFAULT_POPULATION_CAP,
                  event_cap: int = DEFAULT_EVENT_CAP) -> List[Subtree]:
    """One independent untilted subtree per fission time, run to the spine's horizon."""
    out = []
    positions = spine.birth_positions()
    for n, (s, x) in enumerate(zip(spine.birth_times, positions)):
        traj, tree = simulate_tree(params, spine.t_max - s, as_generator(seed, "subtree", n),
                                   start=int(x), population_cap=population_cap,
                                   event_cap=event_cap, birth_offset=float(s))
        out.append(Subtree(float(s), int(x), tree, traj.terminated_reason))
    return out


def simulate_tilted(params: ModelParams, theta: ThetaSchedule, t_max: float, seed: int,
                    start: int = 0, population_cap: int = DEFAULT_POPULATION_CAP,
                    event_cap: int = DEFAULT_EVENT_CAP) -> TiltedTree:
    spine = simulate_spine(params, theta, t_max, as_generator(seed, "tilted", "spine"), start)
    subs = grow_subtrees(params, spine, as_generator(seed, "tilted", "subtrees"),
                         population_cap, event_cap)
    return TiltedTree(params, spine, subs)


def resample_subtrees(tree: TiltedTree, seed: SeedLike, **caps) -> TiltedTree:
    """Same spine, fresh subtrees."""
    return TiltedTree(tree.params, tree.spine, grow_subtrees(tree.params, tree.spine, seed, **caps))


@njit(cache=True)
def _exponents_at_birth(parent, birth_time, birth_pos, offsets, jt, js, log_theta, beta, p):
    n = parent.size
    at_birth = np.zeros(n)
    for u in range(n):
        if parent[u] >= 0:
            at_birth[u] = at_birth[parent[u]] + _own(parent[u], birth_time[u], birth_time,
                                                     birth_pos, offsets, jt, js, log_theta,
                                                     beta, p)
    return at_birth


@njit(cache=True)
def _log_weights(parent, birth_time, birth_pos, offsets, jt, js, log_theta, beta, p, times):
    """Per-particle path exponent (without the common compensator) at each of
    ``times``; -inf for particles not yet born."""
    at_birth = _exponents_at_birth(parent, birth_time, birth_pos, offsets, jt, js, log_theta,
                                   beta, p)
    out = np.full((times.size, parent.size), -np.inf)
    for u in range(parent.size):
        for k in range(times.size):
            if birth_time[u] <= times[k]:
                out[k, u] = at_birth[u] + _own(u, times[k], birth_time, birth_pos, offsets, jt,
                                               js, log_theta, beta, p)
    return out


@njit(cache=True)
def _log_sum_weights(parent, birth_time, birth_pos, offsets, jt, js, log_theta, beta, p, times):
    """log of the sum over born particles of exp(exponent), at each of ``times``,
    accumulated with a running maximum so no particle-by-time array is built."""
    at_birth = _exponents_at_birth(parent, birth_time, birth_pos, offsets, jt, js, log_theta,
                                   beta, p)
    top = np.full(times.size, -np.inf)
    acc = np.zeros(times.size)
    for u in range(parent.size):
        for k in range(times.size):
            if birth_time[u] <= times[k]:
                e = at_birth[u] + _own(u, times[k], birth_time, birth_pos, offsets, jt, js,
                                       log_theta, beta, p)
                if e == -np.inf:
                    continue
                if e > top[k]:
                    acc[k] = acc[k] * math.exp(top[k] - e) + 1.0
                    top[k] = e
                else:
                    acc[k] += math.exp(e - top[k])
    out = np.full(times.size, -np.inf)
    for k in range(times.size):
        if acc[k] > 0:
            out[k] = top[k] + math.log(acc[k])
    return out


@njit(cache=True)
def _own(u, s, birth_time, birth_pos, offsets, jt, js, log_theta, beta, p):
    """Contribution of u's own life on [birth, s]."""
    x = birth_pos[u]
    last = birth_time[u]
    acc = 0.0
    for j in range(offsets[u], offsets[u + 1]):
        if jt[j] > s:
            break
        acc += log_theta[j]
        if p == 0.0:
            acc -= beta * (jt[j] - last)
        elif x != 0:
            acc -= beta * abs(x) ** p * (jt[j] - last)
        x += js[j]
        last = jt[j]
    if p == 0.0:
        acc -= beta * (s - last)
    elif x != 0:
        acc -= beta * abs(x) ** p * (s - last)
    return acc


def _weight_inputs(tree: TreeRecord, theta: ThetaSchedule, params: ModelParams, times):
    if tree is None or tree.jump_offsets is None:
        raise PreconditionError("per-particle jump histories are required")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times > tree.t_end + 1e-12):
        raise PreconditionError("histories only reach t_end")
    up = tree.jump_steps > 0
    with np.errstate(divide="ignore"):
        log_theta = np.where(up, theta.up.log(tree.jump_times), theta.down.log(tree.jump_times))
    args = (tree.parent, tree.birth_time, tree.birth_pos, tree.jump_offsets, tree.jump_times,
            tree.jump_steps, np.asarray(log_theta, dtype=float), float(params.beta),
            float(params.p), times)
    return args, np.atleast_1d(theta.compensator(params.lam, times))


def log_particle_weights(tree: TreeRecord, theta: ThetaSchedule, params: ModelParams,
                         times) -> np.ndarray:
    """(len(times), tree.size) array of log path weights; -inf where unborn."""
    args, comp = _weight_inputs(tree, theta, params, times)
    return _log_weights(*args) + comp[:, None]


def log_additive_martingale(tree, theta: ThetaSchedule, params: ModelParams, times) -> np.ndarray:
    if isinstance(tree, TiltedTree):
        tree = tree.merged()
    args, comp = _weight_inputs(tree, theta, params, times)
    return _log_sum_weights(*args) + comp


def additive_martingale(tree, theta: ThetaSchedule, params: ModelParams, t):
    """M_theta at t (scalar) or at each entry of t."""
    out = np.exp(log_additive_martingale(tree, theta, params, t))
    return float(out[0]) if np.ndim(t) == 0 else out


def log_spine_term(spine: SpineRecord, theta: ThetaSchedule, params: ModelParams, times):
    """Log path weight of the spine itself at each of ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    with np.errstate(divide="ignore"):
        lt = np.where(spine.jump_steps > 0, theta.up.log(spine.jump_times),
                      theta.down.log(spine.jump_times))
    csum_log = np.concatenate([[0.0], np.cumsum(lt)])
    edges = np.concatenate([[0.0], spine.jump_times])
    pos = spine.start + np.concatenate([[0], np.cumsum(spine.jump_steps)])
    rate = params.branch_rate(pos)
    cum_pot = np.concatenate([[0.0], np.cumsum(rate[:-1] * np.diff(edges))])
    k = np.searchsorted(spine.jump_times, times, side="right")
    pot = cum_pot[k] + rate[k] * (times - edges[k])
    return csum_log[k] - pot + np.atleast_1d(theta.compensator(params.lam, times))


def spine_decomposition(spine: SpineRecord, theta: ThetaSchedule, params: ModelParams, t: float):
    """(spine term, sum term): the spine's weight at t and the sum of its
    weights at the fission times up to t."""
    if t > spine.t_max + 1e-12:
        raise DomainError("t beyond the spine record")
    s_term = float(np.exp(log_spine_term(spine, theta, params, t)[0]))
    bt = spine.birth_times[spine.birth_times <= t]
    sum_term = float(np.sum(np.exp(log_spine_term(spine, theta, params, bt)))) if bt.size else 0.0
    return s_term, sum_term


@dataclass
class SupStatistic:
    t_grid: np.ndarray
    log_martingale: np.ndarray  # (replicas, len(t_grid))
    capped: np.ndarray  # replicas whose subtrees hit a cap

    @property
    def sups(self) -> np.ndarray:
        return np.exp(self.log_martingale.max(axis=1))

    def sups_up_to(self, horizon: float) -> np.ndarray:
        m = self.t_grid <= horizon + 1e-12
        return np.exp(self.log_martingale[:, m].max(axis=1))

    def value_at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.t_grid - t)))
        return np.exp(self.log_martingale[:, k])


def regime_sup_statistic(params: ModelParams, theta: ThetaSchedule, t_grid: Sequence[float],
                         replicas: int, seed: int, population_cap: int = DEFAULT_POPULATION_CAP,
                         event_cap: int = DEFAULT_EVENT_CAP) -> SupStatistic:
    """M_theta along ``t_grid`` for ``replicas`` tilted trees.

    Replica i uses seed stream (seed, "regime", i). Nested horizons share
    their trees: the statistic up to a smaller horizon is read off the same
    runs.
    """
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise DomainError("t_grid must be strictly ascending")
    logs = np.empty((replicas, grid.size))
    capped = np.zeros(replicas, bool)
    for i in range(replicas):
        s = int(as_generator(seed, "regime", i).integers(2 ** 63))
        tree = simulate_tilted(params, theta, float(grid[-1]), s,
                               population_cap=population_cap, event_cap=event_cap)
        capped[i] = tree.capped
        logs[i] = log_additive_martingale(tree, theta, params, grid)
    return SupStatistic(grid, logs, capped)
