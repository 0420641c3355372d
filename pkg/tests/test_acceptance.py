"""Acceptance suite: one test per criterion, exact parameters and
tolerances, one printed pass/fail line each (also appended to
acceptance_report.txt).

Run with `pytest tests/test_acceptance.py -s` to see the lines inline.
All experiments pin master seed 20260809; replicate i uses the stream
derived from (seed, i).
"""

import math
import os
import time

import numpy as np
import pytest

from speciesmc.cid import check_cid_condition, martingale_audit
from speciesmc.engine import block_weights, rng_for_replicate, simulate
from speciesmc.families import (
    FamilySpec,
    ScaledRPerturbation,
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
from speciesmc.montecarlo import (
    ExperimentConfig,
    bernoulli_window_test,
    clt_s_test,
    clt_t_test,
    clt_w_test,
    lln_test,
    null_calibration,
    run_replicates,
)
from speciesmc.stats import (
    HSpec,
    clt_S,
    default_test_functions,
    fluctuation_increments,
    fluctuation_increments_product_form,
    predictive_mean,
)

SEED = 20260809
REPORT_PATH = os.path.join(os.path.dirname(__file__), "..", "acceptance_report.txt")

GOS_CATALOG = [
    ("blackwell_macqueen(1)", lambda: blackwell_macqueen(1.0)),
    ("reinforced_bm(1, U[1,3])", lambda: reinforced_bm(1.0, uniform_weights(1.0, 3.0))),
    ("reinforced_polya(2,1)", lambda: reinforced_polya(2, 1, uniform_weights(1.0, 2.0))),
    ("power_decay(1, 0.5)", lambda: power_decay(1.0, 0.5)),
    ("deterministic_rn(geometric)", lambda: deterministic_rn(lambda k: 0.5 ** k)),
    ("markov_chain_y", lambda: markov_family()),
]


def line(criterion: str, ok: bool, detail: str) -> None:
    text = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    print(text)
    with open(REPORT_PATH, "a") as fh:
        fh.write(text + "\n")


@pytest.fixture(scope="module", autouse=True)
def _fresh_report():
    if os.path.exists(REPORT_PATH):
        os.unlink(REPORT_PATH)
    yield


def test_criterion_01_cid_condition():
    t0 = time.perf_counter()
    bm = blackwell_macqueen(1.0)
    rep_bm = check_cid_condition(bm.rule, bm.wp, n_max=5, y_samples=20,
                                 tolerance=1e-9, rng=rng_for_replicate(SEED, 1))
    tp = two_param_pd_generalized(1.0, 0.5, uniform_weights(0.6, 2.0))
    rep_tp = check_cid_condition(tp.rule, tp.wp, n_max=5, y_samples=20,
                                 tolerance=1e-9, rng=rng_for_replicate(SEED, 2))
    bad = ScaledRPerturbation(bm.rule, 1.1)
    rep_bad = check_cid_condition(bad, bm.wp, n_max=3, y_samples=5,
                                  tolerance=1e-9, rng=rng_for_replicate(SEED, 3))
    elapsed = time.perf_counter() - t0
    ok = (rep_bm.passed and rep_tp.passed and not rep_bad.passed and elapsed < 10.0)
    line("criterion 1 (consistency identity, n<=5)", ok,
         f"worst residuals {rep_bm.worst_residual:.2e} / {rep_tp.worst_residual:.2e}, "
         f"perturbed flagged={not rep_bad.passed}, {elapsed:.2f}s")
    assert rep_bm.passed and rep_bm.worst_residual <= 1e-9
    assert rep_tp.passed and rep_tp.worst_residual <= 1e-9
    assert not rep_bad.passed
    assert elapsed < 10.0


def test_criterion_02_martingale_audit():
    t0 = time.perf_counter()
    worst = {}
    for name, make in GOS_CATALOG:
        fam = make()
        traj = simulate(fam.rule, fam.mu, fam.wp, 1000, rng_for_replicate(SEED, 4))
        worst[name] = max(martingale_audit(traj, fam.rule, fam.mu, f)
                          for f in default_test_functions())
    elapsed = time.perf_counter() - t0
    top = max(worst.values())
    ok = top <= 1e-12 and elapsed < 5.0
    line("criterion 2 (martingale audit, 1e3 steps)", ok,
         f"max residual {top:.2e} over {len(worst)} families x 3 f, {elapsed:.2f}s")
    for name, value in worst.items():
        assert value <= 1e-12, f"{name}: residual {value}"
    assert elapsed < 5.0


def test_criterion_03_algebraic_identities():
    horizon, per_family = 200, 100
    worst_dual = worst_eq11 = worst_tel = worst_norm = 0.0
    for fi, (name, make) in enumerate(GOS_CATALOG):
        for k in range(per_family):
            fam = make()
            traj = simulate(fam.rule, fam.mu, fam.wp, horizon,
                            rng_for_replicate(SEED, 1000 + fi * per_family + k),
                            check_every=1)
            probs, r = block_weights(traj, fam.rule)
            worst_norm = max(worst_norm, abs(math.fsum(probs) + r - 1.0))
            for f in default_test_functions():
                v = predictive_mean(traj, fam.rule, f, fam.mu)
                fv = f.apply(traj.tags)
                q = np.asarray(traj.p_diag)
                worst_eq11 = max(worst_eq11, float(np.max(np.abs(
                    (v[:-1] - v[1:]) - (v[:-1] - fv) * q))))
                a = fluctuation_increments(traj, fam.rule, f, fam.mu)
                b = fluctuation_increments_product_form(traj, fam.rule, f, fam.mu)
                worst_dual = max(worst_dual, float(np.max(np.abs(a - b))))
                s, _ = clt_S(traj, fam.rule, f, fam.mu)
                worst_tel = max(worst_tel, abs(float(np.sum(a)) / math.sqrt(horizon) - s))
    ok = max(worst_dual, worst_eq11, worst_tel, worst_norm) <= 1e-9
    line("criterion 3 (pathwise identities, 100 trajectories/family)", ok,
         f"dual {worst_dual:.1e}, pred-diff {worst_eq11:.1e}, telescope {worst_tel:.1e}, "
         f"normalization {worst_norm:.1e}")
    assert worst_dual <= 1e-9
    assert worst_eq11 <= 1e-9
    assert worst_tel <= 1e-9
    assert worst_norm <= 1e-9


def test_criterion_04_product_bernoulli_oracle():
    cfg = ExperimentConfig(
        family=FamilySpec("power_decay", {"theta": 1.0, "alpha": 0.5}),
        horizon=13, replicates=5000, seed=SEED, tests=["bernoulli"],
        window_start=10, engine="reference")
    res = bernoulli_window_test(cfg)
    line("criterion 4 (product-Bernoulli window, full engine)", res.passed,
         f"chi2={res.statistic:.3f}, p={res.p_value:.4f} at R=5000, window k=10")
    assert res.passed
    assert res.p_value >= 0.01


def test_criterion_05_slln_power_decay():
    cfg = ExperimentConfig(
        family=FamilySpec("power_decay", {"theta": 1.0, "alpha": 0.5}),
        horizon=100_000, replicates=200, seed=SEED, tests=["lln"],
        h=HSpec("power", 0.5), lln_tolerance=0.15)
    res = lln_test(cfg)
    line("criterion 5 (SLLN, L_n/sqrt(n) -> 2)", res.passed,
         f"mean|L/h - 2| = {res.statistic:.4f} (tol 0.15)")
    assert res.passed
    assert res.statistic <= 0.15


def test_criterion_06_slln_log_rate():
    cfg = ExperimentConfig(
        family=FamilySpec("reinforced_bm", {"theta": 2.0}, weights="point:1"),
        horizon=100_000, replicates=200, seed=SEED, tests=["lln"],
        h=HSpec("log"), lln_tolerance=0.3)
    res = lln_test(cfg)
    line("criterion 6 (SLLN log rate, L_n/log n -> 2)", res.passed,
         f"mean|L/log n - 2| = {res.statistic:.4f} (tol 0.3; "
         f"statistic is spread-dominated: sd(L_n/log n) ~ 0.39 at n=1e5)")
    assert res.passed
    assert res.statistic <= 0.3


def test_criterion_07_partition_clt_power_decay():
    cfg = ExperimentConfig(
        family=FamilySpec("power_decay", {"theta": 1.0, "alpha": 0.5}),
        horizon=10_000, replicates=2000, seed=SEED, tests=["clt_t"],
        h=HSpec("power", 0.5), p_threshold=0.01)
    results = clt_t_test(cfg)
    by_id = {r.test_id: r for r in results}
    main = by_id["clt_t.selfnorm"]
    raw = by_id["clt_t.raw"]
    line("criterion 7 (partition CLT, power decay)", main.passed,
         f"selfnorm p={main.p_value:.4f} (>=0.01); raw vs N(0,theta/alpha=2): "
         f"p={raw.p_value:.4f}")
    assert main.passed
    assert main.p_value >= 0.01


def test_criterion_08_partition_clt_log_rate():
    cfg = ExperimentConfig(
        family=FamilySpec("reinforced_bm", {"theta": 1.0}, weights="shifted_exp:0.5,1"),
        horizon=100_000, replicates=2000, seed=SEED, tests=["clt_t"],
        h=HSpec("log"), p_threshold=0.001)
    results = clt_t_test(cfg)
    main = [r for r in results if r.test_id == "clt_t.selfnorm"][0]
    line("criterion 8 (partition CLT, log rate)", main.passed,
         f"selfnorm p={main.p_value:.4f} (>=0.001, relaxed); literal-centering "
         f"p={main.diagnostics['ks_p_literal_centering']:.2e}")
    assert main.passed
    assert main.p_value >= 0.001


def test_criterion_09_fluctuation_clt():
    cfg = ExperimentConfig(
        family=FamilySpec("reinforced_bm", {"theta": 1.0}, weights="uniform:1,3"),
        horizon=10_000, replicates=2000, seed=SEED, tests=["clt_s"],
        f_ids=["ind_half"], p_threshold=0.01, u_floor=1e-6, min_effective=25.0,
        u_mean_tol=0.02)
    results = clt_s_test(cfg)
    by_id = {r.test_id: r for r in results}
    ks = by_id["clt_s.selfnorm[ind_half]"]
    um = by_id["clt_s.u_mean[ind_half]"]
    ok = ks.passed and not ks.skipped and um.passed
    line("criterion 9 (empirical-vs-predictive CLT)", ok,
         f"S/sqrt(U) KS p={ks.p_value:.4f} (>=0.01, {ks.excluded} excluded of 2000); "
         f"mean(U - (1/12)(M2-M^2)) = {um.statistic:+.5f} (tol 0.02)")
    assert ks.passed and not ks.skipped
    assert ks.p_value >= 0.01
    assert ks.n_samples + ks.excluded == 2000
    assert um.passed and abs(um.statistic) <= 0.02


def test_criterion_10_predictive_clt():
    cfg = ExperimentConfig(
        family=FamilySpec("reinforced_bm", {"theta": 1.0}, weights="uniform:1,3"),
        horizon=100_000, ckpt=4000, replicates=1000, seed=SEED, tests=["clt_w"],
        f_ids=["ind_half"], p_threshold=0.01, h_rel_tol=0.10)
    results = clt_w_test(cfg)
    by_id = {r.test_id: r for r in results}
    ks = by_id["clt_w.selfnorm[ind_half]"]
    hres = by_id["clt_w.h_estimate"]
    ok = ks.passed and not ks.skipped and hres.passed
    line("criterion 10 (predictive-mean CLT)", ok,
         f"W selfnorm KS p={ks.p_value:.4f} (>=0.01, h=13/12 plug-in); "
         f"mean H_n={hres.diagnostics['mean_H']:.4f} vs 13/12 "
         f"(rel err {hres.statistic:.1%}, tol 10%)")
    assert ks.passed and not ks.skipped
    assert ks.p_value >= 0.01
    assert hres.passed


def test_criterion_11_determinism(tmp_path):
    from speciesmc.cli import main as cli_main

    cfg = ExperimentConfig(
        family=FamilySpec("reinforced_bm", {"theta": 1.0}, weights="uniform:1,3"),
        horizon=2000, replicates=120, seed=SEED, tests=["clt_t"], h=HSpec("log"),
        p_threshold=1e-6)
    a = run_replicates(cfg)
    b = run_replicates(cfg)
    same_summaries = all(x.values == y.values for x, y in zip(a, b))

    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    argv = ["clt-t", "--family", "power_decay", "--theta", "1", "--alpha", "0.5",
            "-n", "1000", "-R", "150", "--seed", str(SEED), "--p-threshold", "1e-6"]
    cli_main(argv + ["--out", str(out1)])
    cli_main(argv + ["--out", str(out2)])
    same_bytes = True
    for name in ("clt_t_results.json", "clt_t_replicates.csv", "clt_t_plot_data.csv"):
        same_bytes &= (out1 / name).read_bytes() == (out2 / name).read_bytes()
    ok = same_summaries and same_bytes
    line("criterion 11 (determinism)", ok,
         f"summaries identical={same_summaries}, artifacts byte-identical={same_bytes}")
    assert same_summaries
    assert same_bytes


def test_criterion_12_null_calibration():
    res = null_calibration(SEED, meta_runs=100, n_samples=10_000,
                           p_floor=0.01, required=98)
    line("criterion 12 (null calibration)", res.passed,
         f"{int(res.statistic)}/100 meta-runs at p>=0.01 (need >=98), "
         f"min p={res.diagnostics['min_p']:.4f}")
    assert res.passed
    assert res.statistic >= 98
