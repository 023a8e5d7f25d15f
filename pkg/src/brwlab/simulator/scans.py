"""Replica scans over the simulators: cap-hit times and start-position checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..analytics import ModelParams, normalise_rightmost
from ..errors import DomainError, UnsupportedRegimeError
from ..rng import as_generator
from . import core


@dataclass(frozen=True)
class CapScanRow:
    cap: int
    median: float
    q25: float
    q75: float
    hit: int
    event_capped: int
    horizon_reached: int


@dataclass
class CapScanResult:
    rows: List[CapScanRow]
    hit_times: np.ndarray  # (replicas, caps), NaN where the cap was never reached

    @property
    def caps(self) -> np.ndarray:
        return np.array([r.cap for r in self.rows])

    @property
    def medians(self) -> np.ndarray:
        return np.array([r.median for r in self.rows])

    def median_increments(self) -> np.ndarray:
        return np.diff(self.medians)

    def log_cap_fit(self):
        """Least-squares fit of median hit time on log(cap): (slope, intercept, R^2)."""
        x = np.log(self.caps.astype(float))
        y = self.medians
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        ss_tot = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
        return float(slope), float(intercept), float(r2)


def cap_hit_scan(params: ModelParams, caps: Sequence[int], replicas: int, seed: int,
                 t_max: float = 1e3, event_cap: int = core.DEFAULT_EVENT_CAP) -> CapScanResult:
    """Time for the population to first reach each cap, over ``replicas`` runs.

    One run per replica is stopped at the largest cap and the first-hit time
    of every smaller cap is read off on the way; this is the same as running
    each cap separately on the same stream, since a run stopped at a smaller
    cap is a prefix of this one. Median and quartiles use only replicas that
    reached the cap; the others are counted by the reason they stopped.
    """
    caps = np.asarray(caps, dtype=np.int64)
    if caps.size == 0 or np.any(np.diff(caps) <= 0) or caps[0] < 1:
        raise DomainError("caps must be ascending positive integers")
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    hits = np.full((replicas, caps.size), np.nan)
    reasons = []
    for i in range(replicas):
        out = core._run(params, t_max, core.replica_generator(seed, i), 0, int(caps[-1]),
                        event_cap, (), caps, False)
        hits[i] = out[4]
        reasons.append(core._REASONS[out[6]])
    reasons = np.array([r.value for r in reasons])
    rows = []
    for j, cap in enumerate(caps):
        col = hits[:, j]
        ok = ~np.isnan(col)
        missed = ~ok
        if ok.any():
            q25, med, q75 = np.percentile(col[ok], [25, 50, 75])
        else:
            q25 = med = q75 = math.nan
        rows.append(CapScanRow(
            int(cap), float(med), float(q25), float(q75), int(ok.sum()),
            int(np.sum(missed & (reasons == core.Termination.EVENT_CAP.value))),
            int(np.sum(missed & (reasons == core.Termination.HORIZON.value)))))
    return CapScanResult(rows, hits)


@dataclass
class StartComparison:
    t: float
    start_a: int
    start_b: int
    values_a: np.ndarray
    values_b: np.ndarray

    @property
    def mean_a(self) -> float:
        return float(np.mean(self.values_a))

    @property
    def mean_b(self) -> float:
        return float(np.mean(self.values_b))

    @property
    def combined_se(self) -> float:
        va = np.var(self.values_a, ddof=1) / self.values_a.size if self.values_a.size > 1 else 0.0
        vb = np.var(self.values_b, ddof=1) / self.values_b.size if self.values_b.size > 1 else 0.0
        return float(math.sqrt(va + vb))

    @property
    def difference(self) -> float:
        return self.mean_a - self.mean_b

    def agrees(self, n_se: float = 3.0) -> bool:
        se = self.combined_se
        if se == 0:
            return self.difference == 0
        return abs(self.difference) <= n_se * se


def _normalised_samples(params, start, t, replicas, seed, method, **kw):
    label = f"start{start}"
    if method == "front":
        r = np.array([core.simulate_front(params, [t], as_generator(seed, "front", label, i),
                                          start, **kw).rightmost[-1] for i in range(replicas)])
    elif method == "exact":
        r = []
        for i in range(replicas):
            out = core._run(params, t, as_generator(seed, "simulate", label, i), start,
                            kw.get("population_cap", core.DEFAULT_POPULATION_CAP),
                            kw.get("event_cap", core.DEFAULT_EVENT_CAP), [t], (), False)
            if out[3] == 0:
                raise DomainError("exact run hit a cap before t; use method='front'")
            r.append(out[1][0])
        r = np.array(r)
    else:
        raise DomainError(f"unknown method {method!r}")
    return np.asarray(normalise_rightmost(params, t, r), dtype=float)


def start_position_irrelevance_check(params: ModelParams, x: int, y: int, t: float,
                                     replicas: int, seed: int, method: str = "front",
                                     **kw) -> StartComparison:
    """Normalised R_t from starts x and y, each on its own streams.

    The streams are labelled by the start position, so x == y reproduces
    the same sample twice.
    """
    if params.p > 1:
        raise UnsupportedRegimeError("start comparison needs p <= 1")
    a = _normalised_samples(params, x, t, replicas, seed, method, **kw)
    b = _normalised_samples(params, y, t, replicas, seed, method, **kw)
    return StartComparison(float(t), int(x), int(y), a, b)
