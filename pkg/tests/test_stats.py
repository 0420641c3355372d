"""Trajectory statistics: identities, dual forms, limit constants."""

import math

import numpy as np
import pytest
from scipy.special import polygamma

from speciesmc.engine import rng_for_replicate, simulate
from speciesmc.errors import DomainError
from speciesmc.families import (
    blackwell_macqueen,
    deterministic_rn,
    markov_family,
    point_mass,
    power_decay,
    reinforced_bm,
    reinforced_polya,
    two_param_pd_generalized,
    uniform_weights,
)
from speciesmc.stats import (
    HSpec,
    IDENTITY,
    IND_HALF,
    SQUARE,
    clt_S,
    clt_W,
    compute_series,
    default_test_functions,
    empirical_mean,
    fluctuation_increments,
    fluctuation_increments_product_form,
    get_test_function,
    limit_constants,
    partition_stats,
    predictive_mean,
    tail_ratio_sum,
)

GOS_FAMILIES = [
    lambda: blackwell_macqueen(1.0),
    lambda: reinforced_bm(1.0, uniform_weights(1.0, 3.0)),
    lambda: reinforced_polya(2, 1, uniform_weights(1.0, 2.0)),
    lambda: power_decay(1.0, 0.5),
    lambda: markov_family(),
]


def traj_for(fam, n=400, seed=(50, 0)):
    return simulate(fam.rule, fam.mu, fam.wp, n, rng_for_replicate(*seed))


# --- empirical / predictive means ---------------------------------------------

def test_empirical_mean_constant_function():
    fam = blackwell_macqueen(1.0)
    traj = traj_for(fam, 50)
    m = empirical_mean(traj, get_test_function("const:1"))
    assert np.allclose(m, 1.0)


def test_empirical_mean_identity_two_tags():
    fam = blackwell_macqueen(1.0)
    traj = traj_for(fam, 2)
    traj.tags = [0.2, 0.4]
    m = empirical_mean(traj, IDENTITY)
    assert m[1] == pytest.approx(0.3)


def test_empirical_mean_constant_tag_trajectory():
    fam = blackwell_macqueen(1.0)
    traj = traj_for(fam, 5)
    traj.tags = [0.7] * 5
    assert np.allclose(empirical_mean(traj, SQUARE), 0.49)


def test_predictive_mean_starts_at_base_mean():
    for fam in (blackwell_macqueen(1.0), reinforced_polya(1, 1, point_mass(1.0))):
        traj = traj_for(fam, 10)
        for f in default_test_functions():
            v = predictive_mean(traj, fam.rule, f, fam.mu)
            assert v[0] == pytest.approx(f.mean_under(fam.mu))


def test_predictive_mean_bm_one_step():
    # theta=1: V_1 = (1/2) f(X_1) + (1/2) E f
    fam = blackwell_macqueen(1.0)
    traj = traj_for(fam, 1)
    for f in default_test_functions():
        v = predictive_mean(traj, fam.rule, f, fam.mu)
        ef = f.mean_under(fam.mu)
        assert v[1] == pytest.approx(0.5 * f.fn(traj.tags[0]) + 0.5 * ef, abs=1e-14)


def test_predictive_mean_sum_reinforced_direct_formula():
    # dual route: the increment-based series against the closed form
    # (sum Y f + theta Ef) / (theta + sum Y)
    fam = reinforced_bm(1.3, uniform_weights(1.0, 3.0))
    traj = traj_for(fam, 300)
    for f in default_test_functions():
        v = predictive_mean(traj, fam.rule, f, fam.mu)
        fv = f.apply(traj.tags)
        ys = np.asarray(traj.ys)
        direct = (np.cumsum(ys * fv) + fam.rule.theta * f.mean_under(fam.mu)) / (
            fam.rule.theta + np.cumsum(ys))
        assert np.max(np.abs(v[1:] - direct)) < 1e-12


def test_predictive_mean_markov_matches_direct_log_form():
    # small-n oracle: p(n,i) = exp(log r_n - log r_i)(1 - r_i/r_{i-1})
    fam = markov_family()
    traj = traj_for(fam, 30)
    lr = np.concatenate(([0.0], np.asarray(traj.log_ys)))
    for f in default_test_functions():
        fv = f.apply(traj.tags)
        ef = f.mean_under(fam.mu)
        v = predictive_mean(traj, fam.rule, f, fam.mu)
        for n in range(1, 31):
            ps = [math.exp(lr[n] - lr[i]) * (1.0 - math.exp(lr[i] - lr[i - 1]))
                  for i in range(1, n + 1)]
            direct = sum(p * fv[i] for i, p in enumerate(ps)) + math.exp(lr[n]) * ef
            assert v[n] == pytest.approx(direct, abs=1e-12)


# --- pathwise identities -------------------------------------------------------

@pytest.mark.parametrize("make", GOS_FAMILIES)
def test_eq_predictive_difference_identity(make):
    # V_k - V_{k+1} = (V_k - f(X_{k+1})) Q_k with Q_k the diagonal weight
    fam = make()
    traj = traj_for(fam, 400)
    q = np.asarray(traj.p_diag)
    for f in default_test_functions():
        v = predictive_mean(traj, fam.rule, f, fam.mu)
        fv = f.apply(traj.tags)
        lhs = v[:-1] - v[1:]
        rhs = (v[:-1] - fv) * q
        assert np.max(np.abs(lhs - rhs)) < 1e-9


@pytest.mark.parametrize("make", GOS_FAMILIES)
def test_increment_dual_form(make):
    # f(X_j) - j V_j + (j-1) V_{j-1} = (1 - j p(j,j)) (f(X_j) - V_{j-1})
    fam = make()
    traj = traj_for(fam, 400)
    for f in default_test_functions():
        a = fluctuation_increments(traj, fam.rule, f, fam.mu)
        b = fluctuation_increments_product_form(traj, fam.rule, f, fam.mu)
        assert np.max(np.abs(a - b)) < 1e-9


@pytest.mark.parametrize("make", GOS_FAMILIES)
def test_increments_telescope_to_fluctuation(make):
    # sum_j Z_{n,j} = S_n where Z_{n,j} = z_j / sqrt(n)
    fam = make()
    traj = traj_for(fam, 400)
    for f in default_test_functions():
        z = fluctuation_increments(traj, fam.rule, f, fam.mu)
        for n in (1, 7, 100, 400):
            s, _ = clt_S(traj, fam.rule, f, fam.mu, n)
            assert np.sum(z[:n]) / math.sqrt(n) == pytest.approx(s, abs=1e-9)


def test_constant_function_degenerates_everything():
    fam = reinforced_bm(1.0, uniform_weights(1.0, 3.0))
    traj = traj_for(fam, 200)
    f = get_test_function("const:0.7")
    s, u = clt_S(traj, fam.rule, f, fam.mu)
    assert abs(s) < 1e-12 and abs(u) < 1e-24
    w, _ = clt_W(traj, fam.rule, f, fam.mu, 8, 200)
    assert abs(w) < 1e-12


def test_clt_s_rejects_partition_dependent_rules():
    fam = two_param_pd_generalized(1.0, 0.5, uniform_weights(0.6, 2.0))
    traj = traj_for(fam, 50)
    with pytest.raises(DomainError):
        clt_S(traj, fam.rule, IND_HALF, fam.mu)


# --- tail ratio sums -----------------------------------------------------------

def test_tail_ratio_sum_matches_trigamma_oracle():
    # r_k = theta/(theta+k) gives Q_k = 1/(theta+k+1); the truncated tail is
    # exactly the trigamma difference, and n * tail -> 1
    theta = 1.0
    fam = blackwell_macqueen(theta)
    traj = traj_for(fam, 4000)
    for n, N in ((40, 2000), (100, 4000)):
        got = tail_ratio_sum(traj, n, N)
        oracle = n * float(polygamma(1, theta + n + 1) - polygamma(1, theta + N + 1))
        assert got == pytest.approx(oracle, abs=1e-9)
    full = 1500 * float(polygamma(1, theta + 1501))
    assert full == pytest.approx(1.0, abs=1e-3)


def test_clt_w_requires_separated_horizons():
    fam = blackwell_macqueen(1.0)
    traj = traj_for(fam, 100)
    with pytest.raises(DomainError):
        clt_W(traj, fam.rule, IND_HALF, fam.mu, 100, 100)


# --- block-count statistics ----------------------------------------------------

def test_partition_stats_degenerate_all_new():
    fam = deterministic_rn(lambda k: 1.0)
    traj = traj_for(fam, 64)
    ps = partition_stats(traj, HSpec("power", 0.5))
    n = 64
    assert ps.L[-1] == n
    assert ps.R[-1] == pytest.approx(n)           # r_j = 1 for all j
    assert ps.sigma2[-1] == pytest.approx(0.0)
    assert ps.t[-1] == pytest.approx(1.0 / math.sqrt(math.sqrt(n)))
    assert ps.t_centered[-1] == pytest.approx(0.0, abs=1e-12)


def test_partition_stats_centering_offset_is_one():
    fam = power_decay(1.0, 0.5)
    traj = traj_for(fam, 500)
    ps = partition_stats(traj, HSpec("power", 0.5))
    sqrt_h = np.sqrt(ps.h)
    assert np.allclose(ps.t - ps.t_centered, 1.0 / sqrt_h, atol=1e-12)


def test_partition_stats_rejects_atomic_measure():
    fam = reinforced_polya(1, 1, point_mass(1.0))
    traj = traj_for(fam, 50)
    with pytest.raises(DomainError):
        partition_stats(traj, HSpec("log"))


def test_monotone_block_counts():
    fam = reinforced_bm(1.0, uniform_weights(1.0, 3.0))
    traj = traj_for(fam, 300)
    series = compute_series(traj, fam.rule, default_test_functions(), fam.mu,
                            h=HSpec("log"))
    dL = np.diff(series.L)
    assert set(dL.tolist()) <= {0.0, 1.0}
    assert np.array_equal(np.concatenate(([1.0], dL)), np.asarray(traj.new_flags, dtype=float))


# --- limit constants -----------------------------------------------------------

def test_limit_constants_power_decay():
    lc = limit_constants(power_decay(1.0, 0.5))
    assert lc.lln_limit == pytest.approx(2.0)
    assert lc.clt_sigma2 == pytest.approx(2.0)
    assert lc.h.kind == "power" and lc.h.alpha == 0.5
    assert lc.delta == 0.0


def test_limit_constants_bm_unit_weights():
    lc = limit_constants(blackwell_macqueen(2.0))
    assert lc.lln_limit == pytest.approx(2.0)
    assert lc.clt_sigma2 == pytest.approx(2.0)
    assert lc.h.kind == "log"
    assert lc.delta == pytest.approx(0.0)
    assert lc.h_mixture == pytest.approx(1.0)


def test_limit_constants_uniform13():
    lc = limit_constants(reinforced_bm(1.0, uniform_weights(1.0, 3.0)))
    assert lc.lln_limit == pytest.approx(0.5)        # theta/m = 1/2
    assert lc.delta == pytest.approx(1.0 / 12.0)
    assert lc.h_mixture == pytest.approx(13.0 / 12.0)


def test_limit_constants_uniform13_vs_quadrature():
    from scipy.integrate import quad

    m, _ = quad(lambda y: y / 2.0, 1, 3)
    d, _ = quad(lambda y: y * y / 2.0, 1, 3)
    assert (d - m * m) / m ** 2 == pytest.approx(1.0 / 12.0, abs=1e-9)
    assert d / m ** 2 == pytest.approx(13.0 / 12.0, abs=1e-9)


def test_limit_constants_no_guessing():
    lc = limit_constants(markov_family())
    assert lc.lln_limit is None and lc.clt_sigma2 is None
    assert lc.notes


def test_squared_companions():
    from speciesmc.engine import uniform01

    mu = uniform01()
    assert IND_HALF.squared().mean_under(mu) == pytest.approx(0.5)
    assert IDENTITY.squared().mean_under(mu) == pytest.approx(1.0 / 3.0)
    sq2 = SQUARE.squared()
    assert sq2.mean_under(mu) == pytest.approx(0.2)
    assert np.allclose(sq2.apply([0.5, 1.0]), [0.0625, 1.0])


def test_base_measure_quadrature_fallback():
    # unregistered functions integrate by cached dense quadrature
    from speciesmc.engine import uniform01
    from speciesmc.stats import TestFunction

    mu = uniform01()
    cube = TestFunction("cube", lambda x: x ** 3, 1.0)
    got = cube.mean_under(mu)
    assert got == pytest.approx(0.25, abs=1e-9)
    assert mu.mean_of(cube.fn) == got  # cached, same object
    # atomic measures integrate exactly over atoms
    from speciesmc.engine import two_color_measure

    assert cube.mean_under(two_color_measure(0.25)) == pytest.approx(0.25)
