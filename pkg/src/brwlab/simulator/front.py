"""Hybrid site-occupation simulator for long-horizon rightmost-particle runs.

Exact event simulation is hopeless once the population is astronomically
large, but the rightmost particle only feels the sparse leading edge. Here
each site carries either an integer particle count (sparse sites, updated
stochastically) or a log-count (dense sites, updated by their mean). A step
of length dt is a symmetric splitting: half a step of Yule growth at each
site (the exact negative binomial law), one step of walk displacement
(the Skellam law truncated at +-2), then the second half step of growth.
dt is chosen so that (2 lam + max rate) dt <= eps.

Sites switch to the dense mode at ``threshold`` particles and back below a
quarter of it; incoming dense mass at a sparse site is realised as a
Poisson count. With ``window > 0`` only sites within ``window`` of the
current maximum are kept, which leaves R_t essentially untouched (checked
against the exact simulator) but makes the population column meaningless.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _rate(beta, p, x):
    if p == 0.0:
        return beta
    if x == 0:
        return 0.0
    return beta * abs(x) ** p


@njit(cache=True)
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _bessel_i(k, z):
    term = (0.5 * z) ** k
    for j in range(1, k + 1):
        term /= j
    total = term
    q = 0.25 * z * z
    for m in range(1, 30):
        term *= q / (m * (m + k))
        total += term
        if term < 1e-17 * total:
            break
    return total


@njit(cache=True)
def _displacement_probs(mu):
    """P(D = 0), P(D = +-1), P(D = +-2) for D = Poisson(mu) - Poisson(mu),
    with the tail beyond +-2 folded into +-2."""
    z = 2.0 * mu
    e = math.exp(-z)
    q0 = e * _bessel_i(0, z)
    q1 = e * _bessel_i(1, z)
    q2 = 0.5 * (1.0 - q0 - 2.0 * q1)
    return q0, q1, q2


@njit(cache=True)
def _grow_site(rng, n, r, h):
    if n > 0 and r > 0.0:
        return n + rng.negative_binomial(n, math.exp(-r * h))
    return n


@njit(cache=True)
def _split(rng, n, prob):
    if n <= 0 or prob <= 0.0:
        return 0
    if prob >= 1.0:
        return n
    return rng.binomial(n, prob)


@njit(cache=True)
def run_front(rng, lam, beta, p, start, sample_times, eps, threshold, window):
    ns = sample_times.size
    right_s = np.zeros(ns, np.int64)
    left_s = np.zeros(ns, np.int64)
    logpop_s = np.full(ns, np.nan)

    size = 256
    offset = start - size // 2
    cnt = np.zeros(size, np.int64)
    lg = np.full(size, -np.inf)
    dense = np.zeros(size, np.bool_)
    ncnt = np.zeros(size, np.int64)
    nlg = np.full(size, -np.inf)
    cnt[start - offset] = 1
    a = start - offset
    b = a
    log_hi = math.log(threshold)
    log_lo = math.log(0.25 * threshold)

    now = 0.0
    k = 0
    steps = 0
    while k < ns:
        while k < ns and sample_times[k] <= now:
            right_s[k] = b + offset
            left_s[k] = a + offset
            if window <= 0:
                tot = -np.inf
                for i in range(a, b + 1):
                    if dense[i]:
                        tot = _logaddexp(tot, lg[i])
                    elif cnt[i] > 0:
                        tot = _logaddexp(tot, math.log(cnt[i]))
                logpop_s[k] = tot
            k += 1
        if k >= ns:
            break
        edge = max(_rate(beta, p, a + offset), _rate(beta, p, b + offset))
        dt = eps / (2.0 * lam + edge)
        if now + dt >= sample_times[k]:
            dt = sample_times[k] - now
            now = sample_times[k]
        else:
            now += dt
        steps += 1
        half = 0.5 * dt

        if a - 2 < 0 or b + 2 >= size:
            span = b - a + 1
            new_size = max(size, 4 * span + 64)
            shift = (new_size - span) // 2 - a
            c2 = np.zeros(new_size, np.int64)
            l2 = np.full(new_size, -np.inf)
            d2 = np.zeros(new_size, np.bool_)
            c2[a + shift:b + 1 + shift] = cnt[a:b + 1]
            l2[a + shift:b + 1 + shift] = lg[a:b + 1]
            d2[a + shift:b + 1 + shift] = dense[a:b + 1]
            cnt, lg, dense = c2, l2, d2
            ncnt = np.zeros(new_size, np.int64)
            nlg = np.full(new_size, -np.inf)
            offset -= shift
            a += shift
            b += shift
            size = new_size

        q0, q1, q2 = _displacement_probs(lam * dt)
        lq1 = math.log(q1) if q1 > 0 else -np.inf
        lq2 = math.log(q2) if q2 > 0 else -np.inf
        for i in range(a - 2, b + 3):
            ncnt[i] = 0
            nlg[i] = -np.inf
        for i in range(a, b + 1):
            r = _rate(beta, p, i + offset)
            if dense[i]:
                L = lg[i] + r * half
                nlg[i] = _logaddexp(nlg[i], L + math.log(q0))
                nlg[i + 1] = _logaddexp(nlg[i + 1], L + lq1)
                nlg[i - 1] = _logaddexp(nlg[i - 1], L + lq1)
                nlg[i + 2] = _logaddexp(nlg[i + 2], L + lq2)
                nlg[i - 2] = _logaddexp(nlg[i - 2], L + lq2)
            elif cnt[i] > 0:
                n = _grow_site(rng, cnt[i], r, half)
                stay = _split(rng, n, q0)
                rest = n - stay
                one = _split(rng, rest, 2.0 * q1 / (1.0 - q0))
                two = rest - one
                up1 = _split(rng, one, 0.5)
                up2 = _split(rng, two, 0.5)
                ncnt[i] += stay
                ncnt[i + 1] += up1
                ncnt[i - 1] += one - up1
                ncnt[i + 2] += up2
                ncnt[i - 2] += two - up2

        for i in range(a - 2, b + 3):
            r = _rate(beta, p, i + offset)
            c = ncnt[i]
            L = nlg[i]
            was_dense = dense[i]
            if L == -np.inf:
                if c >= threshold:
                    dense[i] = True
                    lg[i] = math.log(c) + r * half
                    cnt[i] = 0
                else:
                    dense[i] = False
                    lg[i] = -np.inf
                    cnt[i] = _grow_site(rng, c, r, half)
                continue
            total = _logaddexp(L, math.log(c)) if c > 0 else L
            if total >= log_hi or (was_dense and total >= log_lo):
                dense[i] = True
                lg[i] = total + r * half
                cnt[i] = 0
            else:
                dense[i] = False
                lg[i] = -np.inf
                cnt[i] = _grow_site(rng, c + rng.poisson(math.exp(L)), r, half)
        a -= 2
        b += 2
        while not dense[b] and cnt[b] == 0:
            b -= 1
        while not dense[a] and cnt[a] == 0:
            a += 1
        if window > 0 and a < b - window:
            for i in range(a, b - window):
                cnt[i] = 0
                lg[i] = -np.inf
                dense[i] = False
            a = b - window
            while not dense[a] and cnt[a] == 0:
                a += 1
    return right_s, left_s, logpop_s, steps
