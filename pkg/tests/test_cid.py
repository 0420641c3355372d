"""Conditional-identity verifier and martingale audit."""

from fractions import Fraction

import numpy as np
import pytest

from speciesmc.cid import check_cid_condition, martingale_audit
from speciesmc.engine import rng_for_replicate, simulate
from speciesmc.errors import DomainError
from speciesmc.families import (
    DiagonalOffsetRule,
    ScaledRPerturbation,
    blackwell_macqueen,
    markov_family,
    point_mass,
    power_decay,
    reinforced_bm,
    reinforced_polya,
    two_param_pd_generalized,
    uniform_weights,
)
from speciesmc.stats import IDENTITY, default_test_functions


def test_cid_bm_exact_by_hand_at_n1():
    # theta generic, n=1, single partition [(1)]: lhs = 1/(theta+1);
    # rhs = theta/(theta+1) * 1/(theta+2) + 2/(theta+2) * 1/(theta+1).
    theta = Fraction(3, 2)
    lhs = 1 / (theta + 1)
    rhs = theta / (theta + 1) * (1 / (theta + 2)) + Fraction(2) / (theta + 2) * (1 / (theta + 1))
    assert lhs == rhs


def test_cid_blackwell_macqueen_passes():
    fam = blackwell_macqueen(1.0)
    rep = check_cid_condition(fam.rule, fam.wp, n_max=6, y_samples=3,
                              rng=rng_for_replicate(60, 0))
    assert rep.passed
    assert rep.worst_residual < 1e-12
    assert rep.partitions_checked == 1 + 2 + 5 + 15 + 52 + 203


def test_cid_two_param_passes():
    fam = two_param_pd_generalized(1.0, 0.5, uniform_weights(0.6, 2.0))
    rep = check_cid_condition(fam.rule, fam.wp, n_max=6, y_samples=10,
                              rng=rng_for_replicate(61, 0))
    assert rep.passed
    assert rep.worst_residual < 1e-10


def test_cid_two_param_unit_weights_machine_precision():
    # with Y = 1 the rule is exchangeable; residual at rounding error over
    # the full enumeration up to n = 6
    fam = two_param_pd_generalized(1.0, 0.5, point_mass(1.0))
    rep = check_cid_condition(fam.rule, fam.wp, n_max=6, y_samples=2,
                              rng=rng_for_replicate(68, 0))
    assert rep.worst_residual < 1e-12


def test_cid_reinforced_bm_passes():
    fam = reinforced_bm(0.8, uniform_weights(1.0, 3.0))
    rep = check_cid_condition(fam.rule, fam.wp, n_max=4, y_samples=10,
                              rng=rng_for_replicate(62, 0))
    assert rep.passed


def test_cid_perturbed_rule_flagged():
    fam = blackwell_macqueen(1.0)
    bad = ScaledRPerturbation(fam.rule, 1.1)
    rep = check_cid_condition(bad, fam.wp, n_max=3, y_samples=2,
                              rng=rng_for_replicate(63, 0))
    assert not rep.passed
    assert rep.worst_residual > 1e-3
    assert min(v.n for v in rep.violations) <= 3
    d = rep.to_dict()
    assert d["violation_count"] == len(rep.violations)
    assert not d["passed"]


def test_cid_perturbed_singleton_oracle():
    # direct evaluation on the singleton partition at n=1 with exact
    # fractions: scaling r by c and renormalizing p breaks the identity.
    theta, c = Fraction(1), Fraction(11, 10)
    r1, p11 = theta / (theta + 1), 1 / (theta + 1)
    r1p = c * r1
    p11p = p11 * (1 - r1p) / (1 - r1)
    r2, p2i = theta / (theta + 2), 1 / (theta + 2)
    r2p = c * r2
    scale2 = (1 - r2p) / (1 - r2)
    # lhs: block {1}; rhs over the two extensions of [(1)]
    lhs = p11p
    rhs = r1p * (p2i * scale2) + (2 * p2i * scale2) * p11p
    assert lhs != rhs
    assert abs(float(lhs - rhs)) > 1e-3


def test_cid_rejects_bad_nmax():
    fam = blackwell_macqueen(1.0)
    with pytest.raises(DomainError):
        check_cid_condition(fam.rule, fam.wp, n_max=9)
    with pytest.raises(DomainError):
        check_cid_condition(fam.rule, fam.wp, n_max=0)


def test_cid_rejects_atomic_measure():
    fam = reinforced_polya(1, 1, point_mass(1.0))
    with pytest.raises(DomainError):
        check_cid_condition(fam.rule, fam.wp, n_max=3, mu=fam.mu)


# --- martingale audit ----------------------------------------------------------

GOS_FAMILIES = [
    lambda: blackwell_macqueen(1.0),
    lambda: reinforced_bm(1.0, uniform_weights(1.0, 3.0)),
    lambda: reinforced_polya(2, 1, uniform_weights(1.0, 2.0)),
    lambda: power_decay(1.0, 0.5),
    lambda: markov_family(),
]


@pytest.mark.parametrize("make", GOS_FAMILIES)
def test_martingale_audit_exact_for_gos(make):
    fam = make()
    traj = simulate(fam.rule, fam.mu, fam.wp, 1000, rng_for_replicate(64, 0))
    for f in default_test_functions():
        assert martingale_audit(traj, fam.rule, fam.mu, f) < 1e-12


def test_martingale_audit_rejects_partition_rules():
    fam = two_param_pd_generalized(1.0, 0.5, uniform_weights(0.6, 2.0))
    traj = simulate(fam.rule, fam.mu, fam.wp, 50, rng_for_replicate(65, 0))
    with pytest.raises(DomainError):
        martingale_audit(traj, fam.rule, fam.mu, IDENTITY)


def test_martingale_audit_flags_diagonal_offset():
    # the offset control in closed form: residual at step n equals
    # eps * |V_n - E f|, which exceeds 1e-3 somewhere on any trajectory
    # whose predictive mean wanders away from the base mean
    fam = power_decay(1.0, 0.5)
    traj = simulate(fam.rule, fam.mu, fam.wp, 1000, rng_for_replicate(66, 0))
    bad = DiagonalOffsetRule(fam.rule, eps=0.01)
    resid = martingale_audit(traj, bad, fam.mu, IDENTITY)
    assert resid >= 1e-3


def test_martingale_audit_offset_matches_symbolic_residual():
    # symbolic one-step expectation for the offset control: at level n >= 1
    # the residual is exactly
    #   eps * | (V'_n - Ef) - (r_{n+1}/r_n) (f(X_n) - Ef) |
    # with V'_n the perturbed predictive mean and r the unperturbed weights
    fam = blackwell_macqueen(1.0)
    traj = simulate(fam.rule, fam.mu, fam.wp, 12, rng_for_replicate(67, 0))
    eps = 0.01
    bad = DiagonalOffsetRule(fam.rule, eps=eps)
    resid = martingale_audit(traj, bad, fam.mu, IDENTITY)

    ef, theta = 0.5, 1.0
    expected = 0.0
    for n in range(1, traj.n):
        ps = [1.0 / (theta + n)] * n
        ps[n - 1] += eps
        r = theta / (theta + n) - eps
        v = sum(p * traj.tags[i] for i, p in enumerate(ps)) + r * ef
        ratio = (theta + n) / (theta + n + 1)
        expected = max(expected, eps * abs((v - ef) - ratio * (traj.tags[n - 1] - ef)))
    assert resid == pytest.approx(expected, rel=1e-6)
