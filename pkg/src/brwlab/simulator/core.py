"""Python front end for the exact simulator: configs, trajectories, trees."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..analytics import ModelParams
from ..errors import DomainError
from ..rng import SeedLike, as_generator
from . import exact, front

DEFAULT_POPULATION_CAP = 10 ** 6
DEFAULT_EVENT_CAP = 10 ** 8


class Termination(enum.Enum):
    HORIZON = "horizon"
    POPULATION_CAP = "population_cap"
    EVENT_CAP = "event_cap"


_REASONS = {exact.HORIZON: Termination.HORIZON,
            exact.POPULATION_CAP: Termination.POPULATION_CAP,
            exact.EVENT_CAP: Termination.EVENT_CAP}


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    t_max: float
    sample_grid: Sequence[float] = ()
    seed: int = 0
    start_position: int = 0
    population_cap: int = DEFAULT_POPULATION_CAP
    event_cap: int = DEFAULT_EVENT_CAP

    def __post_init__(self):
        if not (self.t_max >= 0 and math.isfinite(self.t_max)):
            raise DomainError("t_max must be finite and >= 0")
        if self.population_cap < 1 or self.event_cap < 1:
            raise DomainError("caps must be >= 1")
        grid = np.asarray(self.sample_grid, dtype=float)
        if grid.size and (np.any(np.diff(grid) < 0) or grid[0] < 0 or grid[-1] > self.t_max):
            raise DomainError("sample_grid must be ascending inside [0, t_max]")
        object.__setattr__(self, "sample_grid", tuple(float(x) for x in grid))


@dataclass(frozen=True)
class Particle:
    id: int
    parent_id: Optional[int]
    position: int
    birth_time: float


@dataclass
class PopulationTrajectory:
    """Samples of (|N_t|, R_t, L_t) up to the termination time.

    Only grid points reached before a cap are present, so the arrays may be
    shorter than the requested grid.
    """

    sample_times: np.ndarray
    population: np.ndarray
    rightmost: np.ndarray
    leftmost: np.ndarray
    event_count: int
    terminated_reason: Termination
    stop_time: float
    cap_hit_time: Optional[float] = None
    seed: Optional[int] = None

    def rows(self):
        return zip(self.sample_times.tolist(), self.population.tolist(),
                   self.rightmost.tolist(), self.leftmost.tolist())


@dataclass
class TreeRecord:
    """Full genealogy with per-particle jump histories.

    Particle ``i`` was born at ``birth_time[i]`` at ``birth_pos[i]`` from
    ``parent[i]`` (-1 for the root) and jumped at
    ``jump_times[jump_offsets[i]:jump_offsets[i+1]]`` by the matching
    ``jump_steps`` (+1/-1). Histories are valid up to ``t_end``.
    """

    parent: np.ndarray
    birth_time: np.ndarray
    birth_pos: np.ndarray
    jump_offsets: np.ndarray
    jump_times: np.ndarray
    jump_steps: np.ndarray
    t_end: float

    @property
    def size(self) -> int:
        return self.parent.size

    def jumps(self, i):
        a, b = self.jump_offsets[i], self.jump_offsets[i + 1]
        return self.jump_times[a:b], self.jump_steps[a:b]

    def alive(self, t: float) -> np.ndarray:
        return self.birth_time <= t

    def positions(self, t: float) -> np.ndarray:
        """Positions at time t of every particle (NaN-free; unborn particles
        report their birth position)."""
        mask = self.jump_times <= t
        owner = np.repeat(np.arange(self.size), np.diff(self.jump_offsets))
        shift = np.bincount(owner[mask], weights=self.jump_steps[mask], minlength=self.size)
        return self.birth_pos + shift.astype(np.int64)

    def particles(self, t: Optional[float] = None):
        t = self.t_end if t is None else t
        pos = self.positions(t)
        return [Particle(i, None if self.parent[i] < 0 else int(self.parent[i]),
                         int(pos[i]), float(self.birth_time[i]))
                for i in np.flatnonzero(self.alive(t))]


def tree_from_log(start: int, t_end: float, n_particles: int, log_t, log_pid, log_kind,
                  log_child, log_pos, birth_offset: float = 0.0) -> TreeRecord:
    parent = np.full(n_particles, -1, np.int64)
    birth_time = np.full(n_particles, birth_offset)
    birth_pos = np.full(n_particles, start, np.int64)
    br = log_kind == exact.BRANCH
    kids = log_child[br]
    parent[kids] = log_pid[br]
    birth_time[kids] = log_t[br] + birth_offset
    birth_pos[kids] = log_pos[br]
    jm = ~br
    pid = log_pid[jm]
    order = np.argsort(pid, kind="stable")
    counts = np.bincount(pid, minlength=n_particles)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    times = log_t[jm][order] + birth_offset
    steps = np.where(log_kind[jm][order] == exact.UP, 1, -1).astype(np.int64)
    return TreeRecord(parent, birth_time, birth_pos, offsets, times, steps, t_end + birth_offset)


def _run(params: ModelParams, t_max, rng, start, pop_cap, event_cap, grid, cap_levels, record):
    return exact.run_exact(rng, float(params.lam), float(params.beta), float(params.p),
                           int(start), float(t_max), int(pop_cap), int(event_cap),
                           np.asarray(grid, dtype=np.float64),
                           np.asarray(cap_levels, dtype=np.int64), bool(record))


def _trajectory(out, grid, seed) -> PopulationTrajectory:
    pop, right, left, k, _, events, reason, stop = out[:8]
    reason = _REASONS[reason]
    return PopulationTrajectory(
        sample_times=np.asarray(grid, dtype=float)[:k], population=pop[:k],
        rightmost=right[:k], leftmost=left[:k], event_count=int(events),
        terminated_reason=reason, stop_time=float(stop),
        cap_hit_time=float(stop) if reason is Termination.POPULATION_CAP else None,
        seed=seed)


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    return as_generator(seed, "simulate", replica)


def simulate(config: SimConfig, rng: Optional[np.random.Generator] = None) -> PopulationTrajectory:
    """Exact simulation of one tree; replica 0 of ``config.seed`` unless an
    explicit generator is passed."""
    rng = replica_generator(config.seed, 0) if rng is None else rng
    out = _run(config.params, config.t_max, rng, config.start_position,
               config.population_cap, config.event_cap, config.sample_grid, (), False)
    return _trajectory(out, config.sample_grid, config.seed)


def simulate_tree(params: ModelParams, t_max: float, seed: SeedLike, start: int = 0,
                  population_cap: int = DEFAULT_POPULATION_CAP,
                  event_cap: int = DEFAULT_EVENT_CAP, sample_grid=(),
                  birth_offset: float = 0.0):
    """Simulate and keep the genealogy. Returns (trajectory, TreeRecord).

    ``birth_offset`` shifts all recorded times, for subtrees grafted onto a
    spine at a later time.
    """
    rng = as_generator(seed, "tree")
    out = _run(params, t_max, rng, start, population_cap, event_cap, sample_grid, (), True)
    traj = _trajectory(out, sample_grid, None)
    final_pos = out[8]
    tree = tree_from_log(start, traj.stop_time, final_pos.size, *out[9:14],
                         birth_offset=birth_offset)
    return traj, tree


def simulate_replicas(params: ModelParams, t_max: float, sample_grid, replicas: int,
                      seed: int, start: int = 0, population_cap: int = DEFAULT_POPULATION_CAP,
                      event_cap: int = DEFAULT_EVENT_CAP):
    """Replica i uses the stream (seed, "simulate", i)."""
    config = SimConfig(params, t_max, sample_grid, seed, start, population_cap, event_cap)
    return [simulate(config, replica_generator(seed, i)) for i in range(replicas)]


@dataclass
class FrontTrajectory:
    """Rightmost/leftmost samples from the hybrid site simulator.

    ``log_population`` is NaN when the run pruned sites behind the front.
    """

    sample_times: np.ndarray
    rightmost: np.ndarray
    leftmost: np.ndarray
    log_population: np.ndarray
    steps: int


FRONT_EPS = 0.05
FRONT_THRESHOLD = 10_000
FRONT_WINDOW = 200


def simulate_front(params: ModelParams, sample_grid, seed: SeedLike, start: int = 0,
                   eps: float = FRONT_EPS, threshold: int = FRONT_THRESHOLD,
                   window: int = FRONT_WINDOW) -> FrontTrajectory:
    """Hybrid stochastic/mean-field run for large-t rightmost statistics.

    ``window = 0`` keeps every site (and the population column).
    """
    grid = np.asarray(sample_grid, dtype=np.float64)
    if grid.size == 0 or np.any(np.diff(grid) < 0) or grid[0] < 0:
        raise DomainError("sample_grid must be non-empty, ascending and >= 0")
    if not (0 < eps <= 0.5) or threshold < 4:
        raise DomainError("need 0 < eps <= 0.5 and threshold >= 4")
    rng = as_generator(seed, "front")
    right, left, logpop, steps = front.run_front(
        rng, float(params.lam), float(params.beta), float(params.p), int(start), grid,
        float(eps), int(threshold), int(window))
    return FrontTrajectory(grid.copy(), right, left, logpop, int(steps))


def front_replicas(params: ModelParams, sample_grid, replicas: int, seed: int, start: int = 0,
                   **kw):
    """Replica i uses the stream (seed, "front", i); returns a (replicas, len(grid)) R array."""
    out = [simulate_front(params, sample_grid, as_generator(seed, "front", i), start, **kw)
           for i in range(replicas)]
    return np.array([f.rightmost for f in out])
