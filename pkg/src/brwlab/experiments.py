"""Experiment configs, runners and file output.

Each experiment turns an :class:`ExperimentConfig` into a list of CSV rows
plus scalar metadata. ``run`` writes ``<out>/<experiment>.csv`` (first line
``# {json provenance}``, no timestamps, so identical configs give identical
bytes) and ``<out>/<experiment>.json`` (config echo, library versions, wall
time).
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import io
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__, analytics, manytoone, spine
from .analytics import ModelParams
from .errors import DomainError, UnsupportedRegimeError
from .rng import as_generator
from .simulator import (SimConfig, cap_hit_scan, front_replicas, replica_generator,
                        simulate, simulate_replicas)

DEFAULT_SEED = 20240611
DEFAULT_REPLICAS = 100
DEFAULT_OUT = "brw_out"


class Experiment(enum.Enum):
    ANALYTICS = "analytics"
    SIMULATE = "simulate"
    CAP_SCAN = "cap_scan"
    RIGHTMOST_SCAN = "rightmost_scan"
    SPINE_REGIME = "spine_regime"
    MANY_TO_ONE = "many_to_one"
    CORRIDOR = "corridor"


@dataclass
class ScheduleConfig:
    """Tilt family and its parameter: case_a (theta0), case_b / case_b_upper (c),
    case_c / case_c_upper (alpha), explosion (T, c), identity."""

    family: str = "identity"
    param: Optional[float] = None
    T: Optional[float] = None

    def build(self, params: ModelParams) -> spine.ThetaSchedule:
        f = self.family
        if f == "identity":
            return spine.ThetaSchedule.identity()
        if self.param is None:
            raise DomainError(f"schedule {f!r} needs a parameter")
        if f == "case_a":
            return spine.ThetaSchedule.case_a(self.param)
        if f == "case_b":
            return spine.ThetaSchedule.case_b(self.param, params)
        if f == "case_b_upper":
            return spine.ThetaSchedule.case_b_upper(self.param, params)
        if f == "case_c":
            return spine.ThetaSchedule.case_c(self.param)
        if f == "case_c_upper":
            return spine.ThetaSchedule.case_c_upper(self.param)
        if f == "explosion":
            return spine.ThetaSchedule.explosion(self.T if self.T is not None else 1.0, self.param)
        raise DomainError(f"unknown schedule family {f!r}")


@dataclass
class ExperimentConfig:
    experiment: Experiment
    model: ModelParams
    schedule: Optional[ScheduleConfig] = None
    t_grid: List[float] = field(default_factory=lambda: [1.0])
    replicas: int = DEFAULT_REPLICAS
    seed: int = DEFAULT_SEED
    caps: List[int] = field(default_factory=lambda: [100, 1000, 10000])
    t_max: float = 1e3  # cap scans only: horizon at which a run gives up
    population_cap: int = 10 ** 6
    event_cap: int = 10 ** 8
    start: int = 0
    delta: float = 1.0
    corridor_path: str = "constant"
    method: str = "front"
    out: str = DEFAULT_OUT

    def __post_init__(self):
        if isinstance(self.experiment, str):
            try:
                self.experiment = Experiment(self.experiment.replace("-", "_"))
            except ValueError:
                raise DomainError(f"unknown experiment {self.experiment!r}") from None
        if isinstance(self.model, dict):
            self.model = ModelParams(**self.model)
        if isinstance(self.schedule, dict):
            self.schedule = ScheduleConfig(**self.schedule)
        self.t_grid = [float(x) for x in self.t_grid]
        self.caps = [int(x) for x in self.caps]
        if not self.t_grid or any(b < a for a, b in zip(self.t_grid, self.t_grid[1:])):
            raise DomainError("t_grid must be non-empty and ascending")
        if self.replicas < 1:
            raise DomainError("replicas must be >= 1")
        if self.method not in ("front", "exact"):
            raise DomainError("method must be 'front' or 'exact'")
        if self.corridor_path not in ("constant", "optimal"):
            raise DomainError("corridor_path must be 'constant' or 'optimal'")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["experiment"] = self.experiment.value
        d["model"] = self.model.as_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise DomainError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Table:
    columns: List[str]
    rows: List[list]
    meta: Dict = field(default_factory=dict)


@dataclass
class ConvergenceTable:
    """Per t: mean and median of the normalised rightmost position, the
    limit predicted by :mod:`analytics`, their ratios and the standard error
    of the mean."""

    t: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    predicted: float
    se: np.ndarray
    samples: np.ndarray  # (replicas, len(t)) normalised values

    @property
    def ratio(self) -> np.ndarray:
        return self.mean / self.predicted if self.predicted else np.full(self.t.size, np.nan)

    @property
    def median_ratio(self) -> np.ndarray:
        return self.median / self.predicted if self.predicted else np.full(self.t.size, np.nan)

    def to_table(self) -> Table:
        rows = [[float(t), float(m), float(md), float(self.predicted), float(r), float(mr),
                 float(s)]
                for t, m, md, r, mr, s in zip(self.t, self.mean, self.median, self.ratio,
                                              self.median_ratio, self.se)]
        return Table(["t", "mean", "median", "predicted", "ratio", "median_ratio", "se"], rows)


def rightmost_samples(params: ModelParams, t_grid, replicas: int, seed: int,
                      method: str = "front", start: int = 0, **kw) -> np.ndarray:
    """(replicas, len(t_grid)) array of R_t."""
    if params.p > 1:
        raise UnsupportedRegimeError("rightmost scans need p <= 1")
    grid = np.asarray(t_grid, dtype=float)
    if method == "front":
        return front_replicas(params, grid, replicas, seed, start, **kw)
    out = np.empty((replicas, grid.size), np.int64)
    for i, tr in enumerate(simulate_replicas(params, float(grid[-1]), grid, replicas, seed, start,
                                             **kw)):
        if tr.rightmost.size < grid.size:
            raise DomainError("an exact run hit a cap before the last grid time")
        out[i] = tr.rightmost
    return out


def rightmost_scan(params: ModelParams, t_grid: Sequence[float], replicas: int, seed: int,
                   method: str = "front", start: int = 0, **kw) -> ConvergenceTable:
    """Normalised R_t against its almost-sure limit, on ``t_grid``.

    For 0 < p < 1 the normalisation needs t > e.
    """
    grid = np.asarray(t_grid, dtype=float)
    reg = analytics.regime(params.p)
    if reg is analytics.Regime.P_IN_0_1 and np.any(grid <= math.e):
        raise DomainError("0 < p < 1 scans need every t > e")
    R = rightmost_samples(params, grid, replicas, seed, method, start, **kw)
    norm = np.asarray(analytics.normalise_rightmost(params, grid, R), dtype=float)
    pred = analytics.limit_constant(params)
    se = norm.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros(grid.size)
    return ConvergenceTable(grid, norm.mean(axis=0), np.median(norm, axis=0), pred, se, norm)


def _analytics(cfg: ExperimentConfig) -> Table:
    P = cfg.model
    pred = analytics.predict(P)
    rows = [["regime", pred.regime.value]]
    for name in ("theta_hat", "speed", "b_hat", "c_hat", "exp_rate"):
        v = getattr(pred, name)
        if v is not None:
            rows.append([name, repr(float(v))])
    if pred.regime is not analytics.Regime.EXPLOSIVE:
        for t in cfg.t_grid:
            if pred.regime is analytics.Regime.P_IN_0_1 and t <= math.e:
                continue
            rows.append([f"rightmost@{t!r}", repr(analytics.predict_rightmost(P, t))])
    return Table(["key", "value"], rows)


def _simulate(cfg: ExperimentConfig) -> Table:
    t_max = cfg.t_grid[-1]
    rows, reasons = [], []
    for i in range(cfg.replicas):
        sc = SimConfig(cfg.model, t_max, cfg.t_grid, cfg.seed, cfg.start, cfg.population_cap,
                       cfg.event_cap)
        tr = simulate(sc, replica_generator(cfg.seed, i))
        reasons.append(tr.terminated_reason.value)
        for t, n, r, l in tr.rows():
            rows.append([i, t, n, r, l])
    return Table(["replica", "t", "population", "rightmost", "leftmost"], rows,
                 {"termination": reasons})


def _cap_scan(cfg: ExperimentConfig) -> Table:
    res = cap_hit_scan(cfg.model, cfg.caps, cfg.replicas, cfg.seed, t_max=cfg.t_max,
                       event_cap=cfg.event_cap)
    rows = [[r.cap, r.median, r.q25, r.q75, r.hit, r.event_capped, r.horizon_reached]
            for r in res.rows]
    meta = {}
    if len(res.rows) > 1 and np.all(np.isfinite(res.medians)):
        slope, icpt, r2 = res.log_cap_fit()
        meta = {"log_cap_slope": slope, "log_cap_intercept": icpt, "log_cap_r2": r2}
    return Table(["cap", "median", "q25", "q75", "hit", "event_capped", "horizon_reached"],
                 rows, meta)


def _rightmost(cfg: ExperimentConfig) -> Table:
    kw = {}
    if cfg.method == "exact":
        kw = {"population_cap": cfg.population_cap, "event_cap": cfg.event_cap}
    tab = rightmost_scan(cfg.model, cfg.t_grid, cfg.replicas, cfg.seed, cfg.method, cfg.start,
                         **kw).to_table()
    tab.meta = {"method": cfg.method}
    return tab


def _spine_regime(cfg: ExperimentConfig) -> Table:
    P = cfg.model
    theta = (cfg.schedule or ScheduleConfig()).build(P)
    grid = np.asarray(cfg.t_grid)
    rows, capped = [], []
    for i in range(cfg.replicas):
        s = int(as_generator(cfg.seed, "regime", i).integers(2 ** 63))
        tree = spine.simulate_tilted(P, theta, float(grid[-1]), s, cfg.start,
                                     cfg.population_cap, cfg.event_cap)
        capped.append(tree.capped)
        logm = spine.log_additive_martingale(tree, theta, P, grid)
        for t, lm in zip(grid, logm):
            st, su = spine.spine_decomposition(tree.spine, theta, P, float(t))
            rows.append([i, float(t), float(np.exp(lm)), float(lm), st, su,
                         tree.spine.position(float(t))])
    return Table(["replica", "t", "martingale", "log_martingale", "spine_term", "sum_term", "xi"],
                 rows, {"schedule": theta.describe(), "capped_replicas": int(sum(capped))})


def _many_to_one(cfg: ExperimentConfig) -> Table:
    rows = []
    for t in cfg.t_grid:
        e = manytoone.expected_population(cfg.model, t, cfg.replicas, cfg.seed, cfg.start)
        rows.append([t, e.mean, e.standard_error, e.replicas, e.max_weight])
    return Table(["t", "mean", "se", "replicas", "max_weight"], rows)


def _corridor(cfg: ExperimentConfig) -> Table:
    P = cfg.model
    rows = []
    for t in cfg.t_grid:
        if cfg.corridor_path == "optimal":
            f = manytoone.optimal_path_function(P, t)
        else:
            f = lambda s, x0=cfg.start: np.full(np.shape(s), float(x0))
        e = manytoone.corridor_expectation(P, f, cfg.delta, t, cfg.replicas, cfg.seed, cfg.start)
        rows.append([t, cfg.delta, e.mean, e.standard_error, e.replicas, e.hits])
    return Table(["t", "delta", "mean", "se", "replicas", "hits"], rows)


RUNNERS: Dict[Experiment, Callable[[ExperimentConfig], Table]] = {
    Experiment.ANALYTICS: _analytics,
    Experiment.SIMULATE: _simulate,
    Experiment.CAP_SCAN: _cap_scan,
    Experiment.RIGHTMOST_SCAN: _rightmost,
    Experiment.SPINE_REGIME: _spine_regime,
    Experiment.MANY_TO_ONE: _many_to_one,
    Experiment.CORRIDOR: _corridor,
}


def execute(cfg: ExperimentConfig) -> Table:
    return RUNNERS[cfg.experiment](cfg)


def render_csv(cfg: ExperimentConfig, table: Table) -> str:
    buf = io.StringIO()
    prov = {"config_hash": cfg.config_hash(), "seed": cfg.seed,
            "experiment": cfg.experiment.value, "model": cfg.model.as_dict()}
    buf.write("# " + json.dumps(prov, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def versions() -> dict:
    import numba
    import scipy
    return {"brwlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def run(cfg: ExperimentConfig):
    """Run and write ``<out>/<experiment>.csv`` and ``.json``. Returns both paths."""
    t0 = time.perf_counter()
    table = execute(cfg)
    wall = time.perf_counter() - t0
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.experiment.value}.csv"
    json_path = out / f"{cfg.experiment.value}.json"
    csv_path.write_text(render_csv(cfg, table))
    meta = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "seed": cfg.seed,
            "versions": versions(), "wall_time_s": wall, "results": table.meta}
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return csv_path, json_path
