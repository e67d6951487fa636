"""Command-line interface: ``mc``, ``replica``, ``compare`` and ``scattering-check``.

Exit codes: 0 ok, 2 configuration error, 3 aborted Monte Carlo run,
4 saddle solver failure, 5 agreement failure (``compare``) or violated
bound (``scattering-check``).  Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, expand_profile, parse_profile_spec
from .errors import (
    CavityMimoError,
    ConfigError,
    ConventionError,
    InvalidSaddleRegion,
    RunAborted,
    SaddleNotConverged,
    SingularChannel,
)
from .hessian import variance
from .model import exact_mean_no_crosstalk, sample_crosstalk
from .montecarlo import (
    RunConfig,
    cdf_grid,
    empirical_cdf,
    gaussian_cdf,
    ks_statistic,
    run_ensemble,
)
from .output import dumps, envelope, write_csv, write_json
from .replica import SaddleVariant, mean_log_det, saddle_residual, solve_saddle
from .scattering import (
    BlockHamiltonian,
    CouplingMatrix,
    LossBlock,
    approximation_gap,
    build_exact_s,
    gram_deviation,
    unitarity_deviation,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORTED = 3
EXIT_SOLVER = 4
EXIT_AGREEMENT = 5

MEAN_SE_THRESHOLD = 3.0
VARIANCE_REL_THRESHOLD = 0.05
KS_THRESHOLD = 0.01
EXACT_TOL = 1e-10

UNITARITY_BOUND = 1e-12
GRAM_BOUND = 1e-10
SCATTERING_SIZES = (2, 4, 8)
ALPHA_SWEEP = (1e-1, 1e-2, 1e-3, 1e-4)

log = logging.getLogger("cavitymimo")


class AgreementFailure(CavityMimoError):
    """Raised internally when a checked bound does not hold."""


# ---------------------------------------------------------------- arguments

def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("experiment")
    g.add_argument("--config", metavar="PATH", help="JSON configuration document")
    g.add_argument("--n", type=int, help="number of modes N")
    g.add_argument("--alpha", type=float, help="lead coupling alpha")
    g.add_argument("--gamma", type=float, help="crosstalk strength gamma")
    g.add_argument("--rho0", type=float, help="input SNR rho0 (rho = 4 alpha^2 pi^2 rho0)")
    g.add_argument("--h0", metavar="SPEC", help="line-of-sight diagonal, e.g. linspace:0.5:1.5")
    g.add_argument("--loss", metavar="SPEC", help="loss diagonal, e.g. constant:0.2")
    g.add_argument("--runs", type=int, help="Monte Carlo realizations")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--chunks", type=int, help="work chunks (does not change the samples)")
    g.add_argument("--threads", type=int, help="maximum worker threads")
    g.add_argument("--out", metavar="DIR", help="output directory")
    g.add_argument("--continuation", action="store_true", default=None,
                   help="retry stalled saddle solves by gamma-continuation")
    g.add_argument("--damping", type=float, help="fixed-point damping in (0, 1]")
    g.add_argument("--tol", type=float, help="saddle residual tolerance")
    g.add_argument("--max-iter", dest="max_iter", type=int, help="saddle iteration budget")
    g.add_argument("--fd-step", dest="fd_step", type=float,
                   help="finite-difference step for the covariance Hessian")
    g.add_argument("--grid-points", dest="grid_points", type=int, help="CDF grid size")
    g.add_argument("--draws", type=int, help="random H draws per size (scattering-check)")
    g.add_argument("--figures", action="store_true", default=None,
                   help="also render PNG figures next to the data files")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavitymimo",
        description="Mutual-information statistics of a lossy chaotic-cavity MIMO channel.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()
    sub.add_parser("mc", parents=[common], help="Monte Carlo ensemble and empirical CDF")
    sub.add_parser("replica", parents=[common], help="saddle-point mean and variance")
    cmp_ = sub.add_parser("compare", parents=[common],
                          help="Monte Carlo against the Gaussian saddle-point prediction")
    # Test hook: scales the analytic variance to exercise the failure path.
    cmp_.add_argument("--inject-variance-scale", dest="inject_variance_scale", type=float,
                      default=1.0, help=argparse.SUPPRESS)
    sub.add_parser("scattering-check", parents=[common],
                   help="numerical checks of the scattering-matrix identities")
    return parser


_CONFIG_FLAGS = ("n", "alpha", "gamma", "rho0", "runs", "seed", "chunks", "threads", "out",
                 "continuation", "damping", "tol", "max_iter", "fd_step", "grid_points",
                 "draws", "figures")


def config_from_args(args) -> ExperimentConfig:
    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS}
    if args.h0 is not None:
        overrides["h0"] = parse_profile_spec(args.h0, "h0")
    if args.loss is not None:
        overrides["loss"] = parse_profile_spec(args.loss, "loss")
    return ExperimentConfig.load(args.config, overrides)


# ---------------------------------------------------------------- helpers

def _gaussian_or_step(x, mean, var):
    if var > 0:
        return gaussian_cdf(x, mean, var)
    return (np.asarray(x) >= mean).astype(float)


def _ks_or_none(cdf, mean, var):
    return ks_statistic(cdf, mean, var).statistic if var > 0 else None


def _simulate(cfg: ExperimentConfig):
    run = RunConfig(cfg.params(), cfg.profile(), cfg.runs, seed=cfg.seed, chunks=cfg.chunks,
                    keep_samples=True, threads=cfg.threads)
    log.info("running %d realizations in %d chunk(s)", cfg.runs, cfg.chunks)
    return run_ensemble(run)


def _mc_payload(result) -> dict:
    m = result.moments
    return {
        "count": m.count,
        "attempted": result.attempted,
        "rejected": m.rejected,
        "mean": m.mean,
        "standard_error": m.standard_error,
        "variance": m.variance,
        "var_i1": m.var1,
        "var_i2": m.var2,
        "covar": m.covariance,
        "mean_i1": m.mean1,
        "mean_i2": m.mean2,
    }


def _solve_variants(cfg: ExperimentConfig):
    profile, params, settings = cfg.profile(), cfg.params(), cfg.solver_settings()
    out = []
    for variant in SaddleVariant.both(profile, params):
        sol = solve_saddle(variant, profile, params, settings)
        entry = {
            "variant": variant.label,
            "t": sol.t, "r": sol.r, "p": sol.p, "q": sol.q,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "converged": sol.converged,
        }
        if sol.converged:
            check = saddle_residual(variant, profile, params, *sol.point)
            entry["residual_recheck"] = float(max(abs(v) for v in check))
            entry["mean_log_det"] = mean_log_det(variant, profile, params, sol)
        out.append(entry)
    return out


def _replica_payload(cfg: ExperimentConfig):
    """Saddle solutions, mean and variance; raises SaddleNotConverged with the payload attached."""
    variants = _solve_variants(cfg)
    bad = [v for v in variants if not v["converged"]]
    if bad:
        exc = SaddleNotConverged(
            "; ".join(f"{v['variant']}: residual {v['residual']:.3e} after "
                      f"{v['iterations']} iterations" for v in bad),
            max(v["residual"] for v in bad))
        exc.payload = {"variants": variants, "converged": False}
        raise exc
    mean = variants[0]["mean_log_det"] - variants[1]["mean_log_det"]
    report = variance(cfg.profile(), cfg.params(), cfg.solver_settings(), step=cfg.fd_step,
                      fallback_runs=cfg.runs, seed=cfg.seed)
    payload = {"variants": variants, "converged": True, "mean": mean,
               "variance": report.as_dict()}
    if cfg.gamma == 0:
        payload["closed_form_mean"] = exact_mean_no_crosstalk(cfg.profile(), cfg.params().rho)
    return payload


def _out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------- commands

def cmd_mc(cfg: ExperimentConfig) -> int:
    result = _simulate(cfg)
    m = result.moments
    cdf = empirical_cdf(result.i)
    grid = cdf_grid(result.i, cfg.grid_points)
    payload = _mc_payload(result)
    payload["ks_statistic"] = _ks_or_none(cdf, m.mean, m.variance)
    payload["units"] = "nats"
    resolved = cfg.resolved()
    out = _out_dir(cfg)
    write_json(out / "mc_summary.json", envelope("mc", resolved, payload))
    emp, gauss = cdf(grid), _gaussian_or_step(grid, m.mean, m.variance)
    write_csv(out / "mc_cdf.csv", ["value", "cdf_empirical", "cdf_gaussian"],
              [grid, emp, gauss], "mc", resolved)
    if cfg.figures:
        from .plots import plot_cdfs

        plot_cdfs(out / "mc_cdf.png", grid,
                  {"empirical": emp, "Gaussian (MC moments)": gauss}, f"rho0 = {cfg.rho0:g}")
    sys.stdout.write(dumps(payload))
    return EXIT_OK


def cmd_replica(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    resolved = cfg.resolved()
    try:
        payload = _replica_payload(cfg)
    except SaddleNotConverged as exc:
        payload = getattr(exc, "payload", {"converged": False})
        write_json(out / "replica.json", envelope("replica", resolved, payload))
        sys.stdout.write(dumps(payload))
        raise
    write_json(out / "replica.json", envelope("replica", resolved, payload))
    sys.stdout.write(dumps(payload))
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, variance_scale: float = 1.0) -> int:
    rep = _replica_payload(cfg)
    result = _simulate(cfg)
    m = result.moments
    var_a = rep["variance"]["var_total"] * variance_scale
    mean_a = rep["mean"]
    cdf = empirical_cdf(result.i)
    grid = cdf_grid(result.i, cfg.grid_points)
    mean_delta = mean_a - m.mean
    exact = m.variance <= EXACT_TOL**2 and abs(var_a) <= EXACT_TOL

    payload = {"monte_carlo": _mc_payload(result), "replica": rep,
               "analytic_mean": mean_a, "analytic_variance": var_a,
               "mean_delta": mean_delta, "variance_scale": variance_scale}
    if exact:
        # Zero-variance ensemble: KS is undefined, compare the point masses.
        checks = {"exact_match": abs(mean_delta) <= EXACT_TOL}
        payload.update(ks_analytic=None, ks_mc=None, exact_match_case=True)
    else:
        ks_a = _ks_or_none(cdf, mean_a, var_a)
        ks_m = _ks_or_none(cdf, m.mean, m.variance)
        se = m.standard_error
        var_rel = abs(var_a - m.variance) / m.variance if m.variance > 0 else math.inf
        payload.update(ks_analytic=ks_a, ks_mc=ks_m, exact_match_case=False,
                       mean_delta_in_se=abs(mean_delta) / se if se > 0 else math.inf,
                       variance_rel_delta=var_rel)
        checks = {
            "mean_within_3se": abs(mean_delta) <= MEAN_SE_THRESHOLD * se,
            "variance_within_5pct": var_rel <= VARIANCE_REL_THRESHOLD,
            "ks_analytic_le_0.01": ks_a is not None and ks_a <= KS_THRESHOLD,
        }
    payload["thresholds"] = {"mean_se": MEAN_SE_THRESHOLD, "variance_rel": VARIANCE_REL_THRESHOLD,
                             "ks": KS_THRESHOLD, "exact": EXACT_TOL}
    payload["checks"] = checks
    payload["passed"] = all(checks.values())

    resolved = cfg.resolved()
    out = _out_dir(cfg)
    write_json(out / "compare_summary.json", envelope("compare", resolved, payload))
    emp = cdf(grid)
    ga = _gaussian_or_step(grid, mean_a, var_a)
    gm = _gaussian_or_step(grid, m.mean, m.variance)
    write_csv(out / "compare_cdf.csv",
              ["value", "cdf_empirical", "cdf_gaussian_analytic", "cdf_gaussian_mc"],
              [grid, emp, ga, gm], "compare", resolved)
    if cfg.figures:
        from .plots import plot_cdfs

        plot_cdfs(out / "compare_cdf.png", grid,
                  {"empirical": emp, "Gaussian (saddle point)": ga, "Gaussian (MC moments)": gm},
                  f"rho0 = {cfg.rho0:g}")
    sys.stdout.write(dumps({k: payload[k] for k in ("checks", "passed", "ks_analytic",
                                                    "mean_delta", "analytic_variance")}))
    if not payload["passed"]:
        failed = ", ".join(k for k, ok in checks.items() if not ok)
        raise AgreementFailure(f"agreement checks failed: {failed}")
    return EXIT_OK


def _hamiltonian(cfg: ExperimentConfig, n: int, rng) -> np.ndarray:
    h0 = expand_profile(cfg.h0, n, "h0")
    return np.diag(h0).astype(complex) + cfg.gamma * np.array(sample_crosstalk(n, rng).entries)


def _scattering_rows(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    rows, sweep = [], []
    for n in SCATTERING_SIZES:
        loss = expand_profile(cfg.loss, n, "loss")
        scalar = float(loss.mean())
        lossless = lossy_sv = gram_scalar = 0.0
        gram_profile = 0.0
        gaps = np.zeros(len(ALPHA_SWEEP))
        w = CouplingMatrix.perfect(cfg.alpha, n)
        for _ in range(cfg.draws):
            h = _hamiltonian(cfg, n, rng)
            bh = BlockHamiltonian(h)
            lossless = max(lossless, unitarity_deviation(build_exact_s(bh, w)))
            s_lossy = build_exact_s(bh, w, LossBlock(loss))
            lossy_sv = max(lossy_sv, float(np.linalg.norm(s_lossy, 2)))
            gram_scalar = max(gram_scalar, gram_deviation(h, np.full(n, scalar), cfg.alpha))
            gram_profile = max(gram_profile, gram_deviation(h, loss, cfg.alpha))
            for j, a in enumerate(ALPHA_SWEEP):
                gaps[j] = max(gaps[j], approximation_gap(bh, a, LossBlock(loss)))
        rows.append({"n": n, "draws": cfg.draws,
                     "lossless_unitarity_deviation": lossless,
                     "lossy_max_singular_value": lossy_sv,
                     "scalar_loss": scalar,
                     "gram_deviation_scalar_loss": gram_scalar,
                     "gram_deviation_configured_loss": gram_profile,
                     "configured_loss_is_scalar": bool(np.all(loss == loss[0]))})
        sweep.extend({"n": n, "alpha": a, "max_gap": float(g)} for a, g in zip(ALPHA_SWEEP, gaps))
    return rows, sweep


def cmd_scattering_check(cfg: ExperimentConfig) -> int:
    rows, sweep = _scattering_rows(cfg)
    checks = {}
    for row in rows:
        n = row["n"]
        checks[f"unitarity_n{n}"] = row["lossless_unitarity_deviation"] <= UNITARITY_BOUND
        checks[f"gram_scalar_n{n}"] = row["gram_deviation_scalar_loss"] <= GRAM_BOUND
        gaps = [s["max_gap"] for s in sweep if s["n"] == n]
        checks[f"gap_monotone_n{n}"] = all(b < a for a, b in zip(gaps, gaps[1:]))
    payload = {
        "sizes": list(SCATTERING_SIZES),
        "bounds": {"unitarity": UNITARITY_BOUND, "gram_scalar_loss": GRAM_BOUND},
        "rows": rows,
        "alpha_sweep": sweep,
        "informational": ["lossy_max_singular_value", "gram_deviation_configured_loss"],
        "checks": checks,
        "passed": all(checks.values()),
    }
    resolved = cfg.resolved()
    out = _out_dir(cfg)
    write_json(out / "scattering_check.json", envelope("scattering-check", resolved, payload))
    write_csv(out / "scattering_gap.csv", ["n", "alpha", "max_gap"],
              [[s["n"] for s in sweep], [s["alpha"] for s in sweep],
               [s["max_gap"] for s in sweep]], "scattering-check", resolved)
    if cfg.figures:
        from .plots import plot_gap

        plot_gap(out / "scattering_gap.png", sweep)
    sys.stdout.write(dumps(payload))
    if not payload["passed"]:
        failed = ", ".join(k for k, ok in checks.items() if not ok)
        raise AgreementFailure(f"scattering bounds violated: {failed}")
    return EXIT_OK


COMMANDS = {
    "mc": cmd_mc,
    "replica": cmd_replica,
    "compare": cmd_compare,
    "scattering-check": cmd_scattering_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
        if args.command == "compare":
            return cmd_compare(cfg, args.inject_variance_scale)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunAborted, SingularChannel) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except (SaddleNotConverged, InvalidSaddleRegion, ConventionError) as exc:
        print(f"saddle solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AgreementFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_AGREEMENT


if __name__ == "__main__":
    sys.exit(main())
