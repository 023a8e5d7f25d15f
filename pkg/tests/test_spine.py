import math

import numpy as np
import pytest

from brwlab.analytics import ModelParams, g, solve_theta_hat
from brwlab.errors import DomainError, PreconditionError, UnsupportedRegimeError
from brwlab.poisson import JumpPath
from brwlab.simulator import TreeRecord, simulate_replicas, simulate_tree
from brwlab.spine import (SpineRecord, ThetaSchedule, additive_martingale, critical_value,
                          log_additive_martingale, log_particle_weights, log_spine_term,
                          regime_sup_statistic, resample_subtrees, simulate_spine,
                          simulate_tilted, spine_birth_count, spine_decomposition)


def _se(x):
    return np.std(x, ddof=1) / math.sqrt(len(x))


def _within(x, target, n_se=3.0):
    return abs(np.mean(x) - target) <= n_se * _se(x)


# --- schedules -------------------------------------------------------------------------

def test_schedule_families():
    P = ModelParams(1.0, 1.0, 0.5)
    a = ThetaSchedule.case_a(2.0)
    assert a.up(3.0) == 2.0 and a.down(3.0) == 0.5
    assert ThetaSchedule.explosion(1.0, 3.0).horizon == 1.0
    assert ThetaSchedule.case_c(0.5).down(7.0) == 1.0
    up = ThetaSchedule.case_c_upper(0.5)
    assert up.up(4.0) * up.down(4.0) == pytest.approx(1.0)
    Q = ModelParams(1.0, 1.0, 0.3)
    assert ThetaSchedule.case_b_upper(1.0, Q).up(2.0) == ThetaSchedule.case_b(1.0, Q).up(2.0)
    with pytest.raises(DomainError):
        ThetaSchedule.case_b_upper(1.0, P)
    with pytest.raises(DomainError):
        ThetaSchedule.case_a(0.0)


def test_compensator_formula():
    th = ThetaSchedule.case_a(2.0)
    assert th.compensator(1.5, 2.0) == pytest.approx(1.5 * (4.0 - 4.0 - 1.0))
    assert ThetaSchedule.identity().compensator(1.0, 5.0) == 0.0


def test_critical_values():
    assert critical_value(ModelParams(1.0, 1.0, 0), "case_a") == pytest.approx(
        solve_theta_hat(ModelParams(1.0, 1.0, 0)))
    assert critical_value(ModelParams(1.0, 1.0, 0.5), "case_b") == pytest.approx(0.25)
    assert critical_value(ModelParams(1.0, 2.0, 1), "case_c") == pytest.approx(2.0)
    with pytest.raises(UnsupportedRegimeError):
        critical_value(ModelParams(1.0, 1.0, 1), "case_a")


# --- spine -------------------------------------------------------------------------------

def test_spine_deterministic_and_valid():
    P, th = ModelParams(1.0, 1.0, 0.5), ThetaSchedule.case_c(0.5)
    a = simulate_spine(P, th, 5.0, 3)
    b = simulate_spine(P, th, 5.0, 3)
    assert np.array_equal(a.jump_times, b.jump_times)
    assert np.array_equal(a.birth_times, b.birth_times)
    assert np.all(np.diff(a.birth_times) > 0)
    assert np.all(np.abs(np.diff(a.position(np.linspace(0, 5, 400)))) <= 1)


def test_spine_rejects_horizon():
    with pytest.raises(DomainError):
        simulate_spine(ModelParams(1.0, 1.0, 2.0), ThetaSchedule.explosion(1.0, 3.0), 1.0, 1)


def test_spine_birth_count_poisson_given_path():
    # fissions are Cox given the path: mean count equals the mean of int 2 beta |xi|^p
    P, th, t = ModelParams(1.0, 0.5, 1.0), ThetaSchedule.case_a(1.5), 4.0
    counts = np.array([simulate_spine(P, th, t, s).birth_count(t) for s in range(3000)])
    fast = np.array([spine_birth_count(P, th, t, s) for s in range(3000)])
    assert abs(counts.mean() - fast.mean()) <= 3 * math.hypot(_se(counts), _se(fast))


def test_spine_births_absent_at_origin_with_lam_zero():
    sp = simulate_spine(ModelParams(0.0, 3.0, 0.5), ThetaSchedule.identity(), 10.0, 1)
    assert sp.birth_times.size == 0


def test_case_a_spine_speed():
    P, theta0, t = ModelParams(1.0, 0.5, 0), 1.3, 50.0
    x = np.array([simulate_spine(P, ThetaSchedule.case_a(theta0), t, s).position(t) / t
                  for s in range(1000)])
    assert _within(x, theta0 - 1 / theta0)


@pytest.mark.parametrize("theta,t", [
    (ThetaSchedule.case_a(1.7), 500.0),
    (ThetaSchedule.case_b(0.2, ModelParams(1.0, 1.0, 0.5)), 200.0),
    (ThetaSchedule.case_c(1.0), 40.0),
    (ThetaSchedule.explosion(1.0, 3.0), 1 - 1e-3),
])
def test_spine_up_jump_lln(theta, t):
    lam = 1.0
    ratios = []
    for s in range(101):
        sp = simulate_spine(ModelParams(lam, 0.0, 0), theta, t, s)
        ratios.append(sp.up_jumps.count(t) / (lam * theta.up.cumulative(t)))
    assert np.median(ratios) == pytest.approx(1.0, abs=0.02)


def test_case_a_spine_term_decays():
    P, theta0, t = ModelParams(1.0, 0.5, 0), 1.3, 50.0
    th = ThetaSchedule.case_a(theta0)
    assert theta0 < solve_theta_hat(P)
    bound = -0.5 * (P.beta - P.lam * g(theta0))
    vals = np.array([log_spine_term(simulate_spine(P, th, t, s), th, P, t)[0] / t
                     for s in range(1000)])
    assert np.mean(vals <= bound) >= 0.95


def test_spine_term_trivial():
    sp = SpineRecord(JumpPath(np.empty(0)), JumpPath(np.empty(0)), np.empty(0), 0, 3.0)
    P = ModelParams(1.0, 0.7, 0)
    s, tot = spine_decomposition(sp, ThetaSchedule.identity(), P, 3.0)
    assert s == pytest.approx(math.exp(-2.1), rel=1e-14)
    assert tot == 0.0


def test_spine_term_by_hand():
    # up at 0.5 and 1.0, down at 2.0; case A tilt, p = 1, start 0
    sp = SpineRecord(JumpPath(np.array([0.5, 1.0])), JumpPath(np.array([2.0])),
                     np.array([1.5]), 0, 3.0)
    P, th = ModelParams(2.0, 0.3, 1), ThetaSchedule.case_a(1.5)
    t = 3.0
    log_theta = 2 * math.log(1.5) + math.log(1 / 1.5)
    comp = 2.0 * (2 * t - 1.5 * t - t / 1.5)
    pot = 0.3 * (0 * 0.5 + 1 * 0.5 + 2 * 1.0 + 1 * 1.0)
    assert log_spine_term(sp, th, P, t)[0] == pytest.approx(log_theta + comp - pot, rel=1e-13)
    s, tot = spine_decomposition(sp, th, P, t)
    at_birth = 2 * math.log(1.5) + 2.0 * (3.0 - 1.5 * 1.5 - 1.5 / 1.5) - 0.3 * (0.5 + 2 * 0.5)
    assert tot == pytest.approx(math.exp(at_birth), rel=1e-12)


# --- tilted trees ---------------------------------------------------------------------------

def test_tilted_tree_structure():
    P, th = ModelParams(1.0, 1.0, 0.5), ThetaSchedule.case_c(0.5)
    tree = simulate_tilted(P, th, 2.0, 4)
    assert len(tree.subtrees) == tree.spine.birth_times.size
    for st_, s, x in zip(tree.subtrees, tree.spine.birth_times, tree.spine.birth_positions()):
        assert st_.birth_time == s and st_.birth_pos == x
        assert st_.tree.birth_time[0] == s and st_.tree.birth_pos[0] == x
    m = tree.merged()
    assert m.parent[0] == -1
    assert np.array_equal(m.positions(2.0)[:1], [tree.spine.position(2.0)])


def test_tilted_deterministic():
    P, th = ModelParams(1.0, 1.0, 0), ThetaSchedule.case_a(1.5)
    a = simulate_tilted(P, th, 2.0, 8).merged()
    b = simulate_tilted(P, th, 2.0, 8).merged()
    assert np.array_equal(a.jump_times, b.jump_times)
    assert np.array_equal(a.birth_time, b.birth_time)


def test_rightmost_dominates_spine_case_b():
    P = ModelParams(1.0, 1.0, 0.5)
    th = ThetaSchedule.case_b(0.5 * critical_value(P, "case_b"), P)
    for s in range(30):
        tree = simulate_tilted(P, th, 3.0, s)
        assert tree.rightmost(3.0) >= tree.spine.position(3.0)


def test_identity_tilt_is_size_biased():
    # identity tilt, p = 0: Q-law of |N_t| is the size-biased geometric, mean 2 e^{beta t} - 1
    P, t, n = ModelParams(1.0, 1.0, 0), 2.0, 10_000
    pop = np.array([simulate_tilted(P, ThetaSchedule.identity(), t, s).merged().size
                    for s in range(n)])
    assert _within(pop, 2 * math.exp(t) - 1)


def test_identity_tilt_reweighting_recovers_p_law():
    # E_Q[f / M_t] = E_P[f]: rightmost and population laws under P, reached through the spine
    P, t, n = ModelParams(1.0, 1.0, 0.5), 1.5, 4000
    th = ThetaSchedule.identity()
    inv_m, pop_w, right_w = [], [], []
    for s in range(n):
        tree = simulate_tilted(P, th, t, s)
        m = additive_martingale(tree, th, P, t)
        merged = tree.merged()
        inv_m.append(1 / m)
        pop_w.append(merged.size / m)
        right_w.append(merged.positions(t).max() / m)
    direct = simulate_replicas(P, t, [t], n, 77)
    pop = np.array([tr.population[-1] for tr in direct])
    right = np.array([tr.rightmost[-1] for tr in direct])
    assert _within(inv_m, 1.0)
    assert abs(np.mean(pop_w) - pop.mean()) <= 3 * math.hypot(_se(pop_w), _se(pop))
    assert abs(np.mean(right_w) - right.mean()) <= 3 * math.hypot(_se(right_w), _se(right))


@pytest.mark.xfail(strict=True, reason="the tilted law doubles the spine's branching rate, so "
                                       "the identity tilt is size-biased, not P; see ledger")
def test_identity_tilt_population_matches_untilted():
    P, t, n = ModelParams(1.0, 1.0, 0), 2.0, 10_000
    tilted = np.array([simulate_tilted(P, ThetaSchedule.identity(), t, s).merged().size
                       for s in range(n)])
    plain = np.array([tr.population[-1] for tr in simulate_replicas(P, t, [t], n, 3)])
    assert abs(tilted.mean() - plain.mean()) <= 3 * math.hypot(_se(tilted), _se(plain))


def test_resample_keeps_spine():
    P, th = ModelParams(1.0, 1.0, 0), ThetaSchedule.case_a(1.5)
    tree = simulate_tilted(P, th, 2.0, 1)
    other = resample_subtrees(tree, 99)
    assert other.spine is tree.spine
    assert len(other.subtrees) == len(tree.subtrees)


# --- additive martingale ---------------------------------------------------------------------

def test_identity_martingale_is_scaled_population():
    P = ModelParams(1.0, 0.8, 0)
    for s in range(20):
        traj, tree = simulate_tree(P, 2.0, s, sample_grid=[1.0, 2.0])
        m = additive_martingale(tree, ThetaSchedule.identity(), P, [1.0, 2.0])
        assert np.allclose(m, traj.population * np.exp(-0.8 * np.array([1.0, 2.0])), rtol=1e-12)


def test_particle_weights_sum_to_martingale():
    P, th = ModelParams(1.0, 0.6, 0.5), ThetaSchedule.case_c(0.4)
    _, tree = simulate_tree(P, 2.0, 5)
    lw = log_particle_weights(tree, th, P, [0.5, 2.0])
    lm = log_additive_martingale(tree, th, P, [0.5, 2.0])
    assert np.allclose(np.log(np.exp(lw).sum(axis=1)), lm, rtol=1e-12)


def test_particle_weight_by_hand():
    # root jumps up at 0.2, splits at 0.5; child jumps up at 0.7; evaluate at 1.0
    tree = TreeRecord(parent=np.array([-1, 0]), birth_time=np.array([0.0, 0.5]),
                      birth_pos=np.array([0, 1]), jump_offsets=np.array([0, 1, 2]),
                      jump_times=np.array([0.2, 0.7]), jump_steps=np.array([1, 1]), t_end=1.0)
    P, th = ModelParams(1.0, 0.5, 1), ThetaSchedule.case_a(2.0)
    comp = 1.0 * (2 - 2.0 - 0.5)
    root = math.log(2.0) - 0.5 * 0.8 + comp
    child = 2 * math.log(2.0) - 0.5 * (0.3 + 0.2 + 2 * 0.3) + comp
    lw = log_particle_weights(tree, th, P, 1.0)[0]
    assert lw == pytest.approx([root, child], rel=1e-13)


def test_martingale_requires_histories():
    P = ModelParams(1.0, 1.0, 0)
    _, tree = simulate_tree(P, 1.0, 1)
    with pytest.raises(PreconditionError):
        additive_martingale(tree, ThetaSchedule.identity(), P, 2.0)
    tree.jump_offsets = None
    with pytest.raises(PreconditionError):
        additive_martingale(tree, ThetaSchedule.identity(), P, 0.5)


def _p_mean(P, th, times, n, seed0):
    vals = np.array([additive_martingale(simulate_tree(P, times[-1], seed0 + s)[1], th, P, times)
                     for s in range(n)])
    return vals


@pytest.mark.parametrize("P,th,times", [
    (ModelParams(1.0, 0.5, 0), ThetaSchedule.identity(), [1.0, 3.0]),
    (ModelParams(1.0, 0.5, 0), ThetaSchedule.case_a(1.3), [1.0, 3.0]),
    (ModelParams(1.0, 1.0, 0.5), ThetaSchedule.case_b(0.1, ModelParams(1.0, 1.0, 0.5)), [1.0, 2.0]),
    (ModelParams(1.0, 1.0, 0.3), ThetaSchedule.case_b_upper(0.8, ModelParams(1.0, 1.0, 0.3)),
     [1.0, 2.0]),
    (ModelParams(1.0, 0.5, 1), ThetaSchedule.case_c(0.5), [1.0, 2.0]),
    (ModelParams(1.0, 0.5, 1), ThetaSchedule.case_c_upper(0.5), [1.0, 2.0]),
    (ModelParams(1.0, 0.5, 2), ThetaSchedule.explosion(1.0, 2.0), [0.25, 0.5]),
], ids=["identity", "case_a", "case_b", "case_b_upper", "case_c", "case_c_upper", "explosion"])
def test_martingale_mean_one_under_p(P, th, times):
    vals = _p_mean(P, th, times, 10_000, 1000)
    for k in range(len(times)):
        assert _within(vals[:, k], 1.0)


def test_case_a_supercritical_median_decreases():
    P = ModelParams(1.0, 0.1, 0)
    theta0 = 2.5
    assert theta0 > solve_theta_hat(P)
    times = [5.0, 10.0, 20.0, 40.0]
    vals = _p_mean(P, ThetaSchedule.case_a(theta0), times, 1000, 5000)
    med = np.median(vals, axis=0)
    assert np.all(np.diff(med) < 0)
    assert med[-1] < 0.05


def test_decomposition_oracle_small():
    P, th, t = ModelParams(1.0, 0.5, 0.5), ThetaSchedule.case_c(0.5), 2.0
    tree = simulate_tilted(P, th, t, 12)
    s_term, sum_term = spine_decomposition(tree.spine, th, P, t)
    vals = np.array([additive_martingale(resample_subtrees(tree, k), th, P, t)
                     for k in range(400)])
    assert _within(vals, s_term + sum_term)


# --- sup statistic ----------------------------------------------------------------------------

def test_sup_statistic_shape_and_nesting():
    P = ModelParams(1.0, 0.2, 0)
    stat = regime_sup_statistic(P, ThetaSchedule.case_a(1.2), [1.0, 2.0, 4.0], 5, 3)
    assert stat.log_martingale.shape == (5, 3)
    assert np.all(stat.sups_up_to(2.0) <= stat.sups)
    assert np.allclose(stat.value_at(4.0), np.exp(stat.log_martingale[:, -1]))
    again = regime_sup_statistic(P, ThetaSchedule.case_a(1.2), [1.0, 2.0, 4.0], 5, 3)
    assert np.array_equal(stat.log_martingale, again.log_martingale)


def test_sup_statistic_grid_validation():
    with pytest.raises(DomainError):
        regime_sup_statistic(ModelParams(1.0, 0.2, 0), ThetaSchedule.identity(), [2.0, 1.0], 1, 1)
