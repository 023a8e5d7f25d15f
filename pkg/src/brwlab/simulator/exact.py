"""Exact event-driven kernel (numba).

One heap entry per particle: the particle's next event time drawn at total
rate ``2 lam + beta |y|^p`` with the event kind chosen by a categorical draw.
Heap keys are ``(time, pid, kind)`` so ties resolve deterministically.
"""

from __future__ import annotations

import heapq

import numpy as np
from numba import njit

UP, DOWN, BRANCH = 0, 1, 2
HORIZON, POPULATION_CAP, EVENT_CAP = 0, 1, 2


@njit(cache=True)
def _branch_rate(beta, p, y):
    if p == 0.0:
        return beta
    if y == 0:
        return 0.0
    return beta * abs(y) ** p


@njit(cache=True)
def _next_event(rng, lam, beta, p, y, now, pid):
    b = _branch_rate(beta, p, y)
    total = 2.0 * lam + b
    if total <= 0.0:
        return (np.inf, pid, UP)
    tau = now + rng.exponential(1.0 / total)
    u = rng.random() * total
    if u < lam:
        kind = UP
    elif u < 2.0 * lam:
        kind = DOWN
    else:
        kind = BRANCH
    return (tau, pid, kind)


@njit(cache=True)
def _grow(a, n):
    out = np.empty(max(2 * a.size, n), a.dtype)
    out[:a.size] = a
    return out


@njit(cache=True)
def run_exact(rng, lam, beta, p, start, t_max, pop_cap, event_cap, sample_times,
              cap_levels, record):
    """Simulate one tree from a single particle at ``start``.

    Returns sample arrays (population, rightmost, leftmost; -1/0 past the
    termination time), first-hit times of ``cap_levels``, the event count,
    the termination code, the stop time, the final positions and, when
    ``record`` is set, the event log ``(time, pid, kind, child, position before the event)``.
    """
    ns = sample_times.size
    pop_s = np.full(ns, -1, np.int64)
    right_s = np.zeros(ns, np.int64)
    left_s = np.zeros(ns, np.int64)
    cap_hits = np.full(cap_levels.size, np.nan)

    pos = np.empty(64, np.int64)
    pos[0] = start
    n = 1
    # site occupation, index = position - offset
    width = 64
    offset = start - width // 2
    occ = np.zeros(width, np.int64)
    occ[start - offset] = 1
    rmax = start
    lmin = start

    log_t = np.empty(64 if record else 0, np.float64)
    log_pid = np.empty(64 if record else 0, np.int64)
    log_kind = np.empty(64 if record else 0, np.int64)
    log_child = np.empty(64 if record else 0, np.int64)
    log_pos = np.empty(64 if record else 0, np.int64)
    n_log = 0

    heap = [_next_event(rng, lam, beta, p, start, 0.0, 0)]
    events = 0
    k_sample = 0
    k_cap = 0
    while k_cap < cap_levels.size and cap_levels[k_cap] <= 1:
        cap_hits[k_cap] = 0.0
        k_cap += 1
    reason = HORIZON
    now = 0.0
    while True:
        tau, pid, kind = heap[0]
        if tau > t_max:
            now = t_max
            break
        heapq.heappop(heap)
        while k_sample < ns and sample_times[k_sample] < tau:
            pop_s[k_sample] = n
            right_s[k_sample] = rmax
            left_s[k_sample] = lmin
            k_sample += 1
        now = tau
        y = pos[pid]
        child = -1
        if kind == BRANCH:
            if n == pos.size:
                pos = _grow(pos, n + 1)
            child = n
            pos[child] = y
            n += 1
            occ[y - offset] += 1
            heapq.heappush(heap, _next_event(rng, lam, beta, p, y, tau, pid))
            heapq.heappush(heap, _next_event(rng, lam, beta, p, y, tau, child))
        else:
            y_new = y + 1 if kind == UP else y - 1
            idx = y_new - offset
            if idx < 0 or idx >= occ.size:
                shift = occ.size
                bigger = np.zeros(3 * occ.size, np.int64)
                bigger[shift:shift + occ.size] = occ
                occ = bigger
                offset -= shift
                idx = y_new - offset
            occ[y - offset] -= 1
            occ[idx] += 1
            pos[pid] = y_new
            if y_new > rmax:
                rmax = y_new
            if y_new < lmin:
                lmin = y_new
            while occ[rmax - offset] == 0:
                rmax -= 1
            while occ[lmin - offset] == 0:
                lmin += 1
            heapq.heappush(heap, _next_event(rng, lam, beta, p, y_new, tau, pid))
        events += 1
        if record:
            if n_log == log_t.size:
                log_t = _grow(log_t, n_log + 1)
                log_pid = _grow(log_pid, n_log + 1)
                log_kind = _grow(log_kind, n_log + 1)
                log_child = _grow(log_child, n_log + 1)
                log_pos = _grow(log_pos, n_log + 1)
            log_t[n_log] = tau
            log_pid[n_log] = pid
            log_kind[n_log] = kind
            log_child[n_log] = child
            log_pos[n_log] = y
            n_log += 1
        while k_cap < cap_levels.size and n >= cap_levels[k_cap]:
            cap_hits[k_cap] = tau
            k_cap += 1
        if n >= pop_cap:
            reason = POPULATION_CAP
            break
        if events >= event_cap:
            reason = EVENT_CAP
            break
    if reason == HORIZON:
        while k_sample < ns and sample_times[k_sample] <= t_max:
            pop_s[k_sample] = n
            right_s[k_sample] = rmax
            left_s[k_sample] = lmin
            k_sample += 1
    return (pop_s, right_s, left_s, k_sample, cap_hits, events, reason, now,
            pos[:n].copy(), log_t[:n_log].copy(), log_pid[:n_log].copy(),
            log_kind[:n_log].copy(), log_child[:n_log].copy(), log_pos[:n_log].copy())
