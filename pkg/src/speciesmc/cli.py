"""Command-line entry point.

Subcommands: simulate, verify-cid, lln, clt-t, clt-s, clt-w, report.
Configuration comes from a TOML file (--config) with CLI flags taking
precedence; every experiment requires an explicit seed.  Exit codes:
0 = success and all tests passed, 1 = some test failed, 2 = usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


from .cid import check_cid_condition
from .engine import rng_for_replicate, simulate
from .errors import ConfigError, DomainError, SpeciesmcError
from .families import FamilySpec
from .io_utils import write_csv, write_json
from .montecarlo import ExperimentConfig, run_experiment
from .stats import HSpec, compute_series, get_test_function, limit_constants

TRAJECTORY_SCHEMA = "trajectory/1"
REPLICATES_SCHEMA = "replicates/1"
PLOTDATA_SCHEMA = "plot-data/1"
RESULTS_SCHEMA = "results/1"


def _family_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", help="family name (e.g. reinforced_bm, power_decay)")
    p.add_argument("--theta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--b", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--weights", help="weight law, e.g. uniform:1,3 or point:1")
    p.add_argument("--geometric", type=float, help="deterministic_rn with a_k = q^k")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment file")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", "-n", type=int, dest="horizon")
    p.add_argument("--replicates", "-R", type=int, dest="replicates")
    p.add_argument("--workers", type=int)
    p.add_argument("--engine", choices=["auto", "reference", "kernel", "length"])
    p.add_argument("--out", help="output directory (default: $SPECIESMC_OUT or '.')")
    p.add_argument("--json-errors", action="store_true")
    _family_flags(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="speciesmc",
                                 description="species-sampling chain simulation and verification")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write one trajectory as CSV")
    _common_flags(p)
    p.add_argument("--f-ids", default="ind_half,identity,square")

    p = sub.add_parser("verify-cid", help="exhaustive conditional-identity check")
    _common_flags(p)
    p.add_argument("--nmax", type=int, default=5)
    p.add_argument("--ysamples", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-9)

    for cmd, helptext in [("lln", "law of large numbers for the block count"),
                          ("clt-t", "block-count fluctuation test"),
                          ("clt-s", "empirical-vs-predictive fluctuation test"),
                          ("clt-w", "predictive-mean fluctuation test")]:
        p = sub.add_parser(cmd, help=helptext)
        _common_flags(p)
        p.add_argument("--f-ids", default="ind_half")
        p.add_argument("--h-kind", choices=["power", "log"])
        p.add_argument("--h-alpha", type=float)
        p.add_argument("--p-threshold", type=float)
        p.add_argument("--tolerance", type=float, help="mean-error tolerance (lln)")
        p.add_argument("--limit", type=float, help="analytic limit override (lln)")
        p.add_argument("--ckpt", type=int, help="statistic step n for clt-w (horizon is the far horizon N)")

    p = sub.add_parser("report", help="summarize a results directory and render figures")
    p.add_argument("dir", nargs="?", default=None)
    p.add_argument("--out", help="directory holding artifacts (same as positional)")
    p.add_argument("--json-errors", action="store_true")
    return ap


def _load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from None


def _family_from(args, filecfg: dict) -> FamilySpec:
    fam_cfg = dict(filecfg.get("family", {}))
    name = args.family or fam_cfg.pop("name", None)
    if not name:
        raise ConfigError("no family given (use --family or a [family] section)")
    weights = args.weights or fam_cfg.pop("weights", None)
    params = {k: v for k, v in fam_cfg.items()}
    for key in ("theta", "alpha", "b", "r", "geometric"):
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    return FamilySpec(name, params, weights)


def _experiment_config(args, tests: list[str]) -> ExperimentConfig:
    filecfg = _load_toml(args.config) if args.config else {}
    spec = _family_from(args, filecfg)
    exp = dict(filecfg.get("experiment", {}))
    hcfg = dict(filecfg.get("h", {}))

    def pick(flag, key, default=None):
        v = getattr(args, flag, None)
        if v is not None:
            return v
        return exp.get(key, default)

    horizon = pick("horizon", "horizon")
    replicates = pick("replicates", "replicates", 100)
    seed = pick("seed", "seed")
    if horizon is None:
        raise ConfigError("no horizon given")
    if seed is None:
        raise ConfigError("no seed given (explicit seeds only)")

    h_kind = getattr(args, "h_kind", None) or hcfg.get("kind")
    h_alpha = getattr(args, "h_alpha", None) or hcfg.get("alpha")
    if h_kind is None:
        lc = limit_constants(spec)
        h = lc.h if lc.h is not None else HSpec("log")
        if h_alpha is not None:
            h = HSpec(h.kind, h_alpha)
    else:
        h = HSpec(h_kind, h_alpha if h_alpha is not None else 0.5)

    kw = dict(
        family=spec, horizon=int(horizon), replicates=int(replicates), seed=int(seed),
        tests=tests, h=h,
        f_ids=[s for s in getattr(args, "f_ids", "ind_half").split(",") if s],
    )
    for flag, key in [("p_threshold", "p_threshold"), ("tolerance", "lln_tolerance"),
                      ("limit", "lln_limit"), ("ckpt", "ckpt"), ("workers", "workers"),
                      ("engine", "engine")]:
        v = getattr(args, flag, None)
        if v is None:
            v = exp.get(key)
        if v is not None:
            kw[key] = v
    for key in ("sigma2", "h_mixture", "delta", "u_floor", "min_effective",
                "u_mean_tol", "h_rel_tol", "window_start"):
        if key in exp:
            kw[key] = exp[key]
    outcfg = filecfg.get("output", {})
    if "dir" in outcfg:
        kw["out_dir"] = outcfg["dir"]
    return ExperimentConfig(**kw)


def _out_dir(args) -> str:
    return args.out or os.environ.get("SPECIESMC_OUT", ".")


def _write_experiment_outputs(out_dir: str, config: ExperimentConfig, results, summaries,
                              stem: str) -> None:
    lc = limit_constants(config.family)
    write_json(os.path.join(out_dir, f"{stem}_results.json"), {
        "config": config.to_dict(),
        "limit_constants": lc.to_dict(),
        "results": [r.to_dict() for r in results],
    }, RESULTS_SCHEMA)
    if summaries:
        keys = sorted({k for s in summaries if s.ok for k in s.values})
        rows = []
        for s in summaries:
            rows.append([s.index, int(s.ok)] + [s.values.get(k) for k in keys])
        write_csv(os.path.join(out_dir, f"{stem}_replicates.csv"),
                  ["replicate", "ok"] + keys, rows, REPLICATES_SCHEMA)
        _write_plot_data(out_dir, config, summaries, stem)


def _write_plot_data(out_dir: str, config: ExperimentConfig, summaries, stem: str) -> None:
    """Tidy (statistic, n, replicate, value) rows for the report renderer."""
    n = config.horizon
    rows = []
    ok = [s for s in summaries if s.ok]
    have = ok[0].values.keys() if ok else ()
    hv = config.h.values(n)[-1]
    for s in ok:
        v = s.values
        if "L" in have and hv > 0:
            rows.append(["L_over_h", n, s.index, v["L"] / hv])
        if "qv" in have and v.get("qv", 0) > 0:
            rows.append(["t_selfnorm", n, s.index,
                         (v["L"] - v["comp"]) / (v["qv"] ** 0.5)])
        for fid in config.f_ids:
            if f"S:{fid}" in have and v.get(f"U:{fid}", 0) > config.u_floor:
                rows.append([f"s_selfnorm[{fid}]", n, s.index,
                             v[f"S:{fid}"] / v[f"U:{fid}"] ** 0.5])
        if "H" in have:
            rows.append(["h_trunc", config.clt_w_ckpt(), s.index, v["H"]])
    if rows:
        write_csv(os.path.join(out_dir, f"{stem}_plot_data.csv"),
                  ["statistic", "n", "replicate", "value"], rows, PLOTDATA_SCHEMA)


def _cmd_simulate(args) -> int:
    cfg = _experiment_config(args, tests=[])
    fam = cfg.family.build()
    fs = [get_test_function(fid) for fid in cfg.f_ids]
    traj = simulate(fam.rule, fam.mu, fam.wp, cfg.horizon, rng_for_replicate(cfg.seed, 0),
                    seed_info=(cfg.seed, 0))
    series = compute_series(traj, fam.rule, fs, fam.mu)
    out = _out_dir(args)
    header = ["step", "tag", "y", "L", "r", "p_diag", "U"]
    for f in fs:
        header += [f"M:{f.fid}", f"V:{f.fid}"]
    rows = []
    for j in range(cfg.horizon):
        row = [j + 1, traj.tags[j], traj.ys[j], int(series.L[j]), traj.r_seq[j + 1],
               traj.p_diag[j], traj.new_flags[j]]
        for f in fs:
            row += [series.m[f.fid][j], series.v[f.fid][j + 1]]
        rows.append(row)
    write_csv(os.path.join(out, "trajectory.csv"), header, rows, TRAJECTORY_SCHEMA)
    print(f"wrote {os.path.join(out, 'trajectory.csv')} "
          f"({cfg.horizon} steps, {int(series.L[-1])} species)")
    return 0


def _cmd_verify_cid(args) -> int:
    filecfg = _load_toml(args.config) if args.config else {}
    spec = _family_from(args, filecfg)
    fam = spec.build()
    if not fam.mu.diffuse:
        raise ConfigError("verify-cid requires a diffuse base measure")
    seed = args.seed if args.seed is not None else 0
    report = check_cid_condition(fam.rule, fam.wp, n_max=args.nmax,
                                 y_samples=args.ysamples, tolerance=args.tol,
                                 rng=rng_for_replicate(seed, 0))
    out = _out_dir(args)
    write_json(os.path.join(out, "cid_report.json"), report.to_dict(), "cid-report/1")
    status = "PASS" if report.passed else "FAIL"
    print(f"[{status}] consistency identity, n <= {report.checked_n}: "
          f"worst residual {report.worst_residual:.3e} over "
          f"{report.partitions_checked} partitions")
    return 0 if report.passed else 1


def _cmd_experiment(args, tests: list[str], stem: str) -> int:
    cfg = _experiment_config(args, tests=tests)
    out = cfg.out_dir or _out_dir(args)
    cfg.out_dir = out
    results, summaries = run_experiment(cfg)
    _write_experiment_outputs(out, cfg, results, summaries, stem)
    failed = 0
    for r in results:
        status = "SKIP" if r.skipped else ("PASS" if r.passed else "FAIL")
        ptxt = f"p={r.p_value:.4g}" if r.p_value is not None else f"stat={r.statistic:.4g}"
        print(f"[{status}] {r.test_id}: {ptxt} (target {r.target})")
        failed += 0 if r.passed else 1
    return 0 if failed == 0 else 1


def _cmd_report(args) -> int:
    from . import report

    d = args.dir or args.out or os.environ.get("SPECIESMC_OUT", ".")
    written = report.generate(d)
    for path in written:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "verify-cid":
            return _cmd_verify_cid(args)
        if args.command == "lln":
            return _cmd_experiment(args, ["lln"], "lln")
        if args.command == "clt-t":
            return _cmd_experiment(args, ["clt_t"], "clt_t")
        if args.command == "clt-s":
            return _cmd_experiment(args, ["clt_s"], "clt_s")
        if args.command == "clt-w":
            return _cmd_experiment(args, ["clt_w"], "clt_w")
        if args.command == "report":
            return _cmd_report(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DomainError) as exc:
        _emit_error(args, exc, usage=True)
        return 2
    except SpeciesmcError as exc:
        _emit_error(args, exc, usage=False)
        return 1


def _emit_error(args, exc, usage: bool) -> None:
    if getattr(args, "json_errors", False):
        print(json.dumps({"error": str(exc), "type": type(exc).__name__},
                         sort_keys=True), file=sys.stderr)
    else:
        print(f"speciesmc: error: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
