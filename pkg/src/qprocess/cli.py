"""Command-line front door.

Subcommands: model-info, verify-theorems, estimate, simulate.  Every
command is deterministic given its flags; commands that draw randomness
require an explicit --seed.  Exit codes: 0 success, 1 usage/config error,
2 numeric failure, 3 tolerance-gate failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericsError
from .estimator import (
    collect_estimates,
    exact_variance_series,
    report_from_estimates,
    theorem_convergence_table,
    with_series_variance,
)
from .fileio import (
    ModelFileError,
    load_config,
    load_model,
    write_convergence_csv,
    write_manifest,
    write_report_json,
    write_table_csv,
    write_trajectory_csv,
)
from .gf import qprocess_p11, qprocess_p11_limit
from .models import (
    kolmogorov_constant,
    kolmogorov_constant_deflated,
    qprocess_densities,
)
from .simulate import replicate_stream, simulate_mbs, simulate_qprocess

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_GATE = 3

A_SCHEME_REL_TOL = 1e-8


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 by default; 2 is reserved for numeric
    # failures here
    def error(self, message):
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


class UsageError(ValueError):
    pass


def _parse_t_grid(text: str) -> list[float]:
    try:
        grid = [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]
    except ValueError:
        raise UsageError("cannot parse --t-grid %r" % text) from None
    if not grid:
        raise UsageError("--t-grid must contain at least one time")
    if sorted(grid) != grid:
        raise UsageError("--t-grid times must be increasing")
    return grid


def _positive(value, name):
    if value is None or value <= 0:
        raise UsageError("%s must be positive" % name)
    return value


def _require_seed(args):
    if args.seed is None:
        raise UsageError(
            "an explicit --seed is required for reproducibility; pick any integer"
        )
    return int(args.seed)


def _out_dir(args) -> Path:
    if args.out is None:
        raise UsageError("--out directory is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_config(argv):
    """Expand a --config key=value file into flags; explicit flags win."""
    if not argv or argv[0].startswith("-"):
        return argv
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[1:])
    if not known.config:
        return argv
    cfg = load_config(known.config)
    flags = []
    for key, val in cfg.items():
        flag = "--" + key.replace("_", "-")
        if flag == "--config":
            continue
        flags.extend([flag, val])
    # config-derived flags go first so explicit argv entries override them
    return [argv[0]] + flags + argv[1:]


def _add_common(sub):
    sub.add_argument("--model", required=True, help="model definition file")
    sub.add_argument("--config", help="flat key=value experiment config file")
    sub.add_argument("--tol", type=float, default=None,
                     help="intensity balance tolerance override")
    sub.add_argument("--out", help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="qprocess",
                     description="Branching-system and conditioned-process toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("model-info", parents=[], help="print structural parameters")
    _add_common(p)
    p.add_argument("--quad-tol", type=float, default=1e-12)

    p = subs.add_parser("verify-theorems",
                        help="long-time transition-probability and variance checks")
    _add_common(p)
    p.add_argument("--t-grid", required=True,
                   help="comma-separated times, e.g. 25,50,100")
    p.add_argument("--method", choices=["series", "monte_carlo"], default="series")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jmax", type=int, default=None)
    p.add_argument("--ode-tol", type=float, default=1e-10)
    p.add_argument("--p11-gate", type=float, default=None,
                   help="max |scaled p11 - limit| at the last grid time "
                        "(default 0.6 critical, 1e-3 otherwise)")
    p.add_argument("--variance-gate", type=float, default=0.2,
                   help="critical case: max |(t/2) var - 1| at the last grid time")
    p.add_argument("--ratio-gate", type=float, default=2.0,
                   help="beta < 1 case: max over min normalized variance ratio")

    p = subs.add_parser("estimate", help="Monte Carlo estimator study at one time")
    _add_common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--i0", type=int, default=1)
    p.add_argument("--jmax", type=int, default=None)
    p.add_argument("--ode-tol", type=float, default=1e-10)
    p.add_argument("--cap", type=int, default=10**6)

    p = subs.add_parser("simulate", help="dump exact sample paths")
    _add_common(p)
    p.add_argument("--process", choices=["mbs", "qprocess"], default="qprocess")
    p.add_argument("--i0", type=int, default=1)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--cap", type=int, default=10**6)
    return parser


def cmd_model_info(args) -> int:
    m = load_model(args.model, tol=args.tol)
    dens = qprocess_densities(m)
    print("model file: %s" % args.model)
    print("intensities: %s" % ", ".join(
        "a%d=%g" % (k, v) for k, v in enumerate(m.a)))
    print("criticality: %s" % m.criticality)
    print("extinction probability q = %.12g" % m.q)
    print("structural parameter beta = %.12g (ln beta = %.12g)" % (m.beta, m.ln_beta))
    print("mean drift rate b = %.12g" % m.b)
    if m.gamma is None:
        print("gamma: undefined (beta = 1)")
    else:
        print("gamma = %.12g" % m.gamma)
    print("conditioned jump densities: %s (sum %.3g)" % (
        ", ".join("p%d=%g" % (j, v) for j, v in enumerate(dens.p) if j > 0),
        dens.p.sum()))
    if not m.is_critical:
        a1 = kolmogorov_constant(m)
        a2 = kolmogorov_constant_deflated(m)
        rel = abs(a1 - a2) / abs(a1)
        print("Kolmogorov constant = %.12g (independent scheme %.12g, "
              "rel diff %.2e)" % (a1, a2, rel))
        print("p11 limit = %.12g" % qprocess_p11_limit(m))
    else:
        print("p11 limit (t^2-scaled) = %.12g" % qprocess_p11_limit(m))
    return EXIT_OK


def cmd_verify_theorems(args) -> int:
    m = load_model(args.model, tol=args.tol)
    t_grid = _parse_t_grid(args.t_grid)
    out = _out_dir(args)
    outputs = []
    failures = []

    # long-time 1 -> 1 transition probability against its limit constant
    limit = qprocess_p11_limit(m)
    p11 = np.atleast_1d(qprocess_p11(m, t_grid))
    scaled = np.array(t_grid) ** 2 * p11 if m.is_critical else p11
    dev = np.abs(scaled - limit)
    gate = args.p11_gate if args.p11_gate is not None else (
        0.6 if m.is_critical else 1e-3)
    lines = ["t,%s,limit,abs_deviation" % ("t2_p11" if m.is_critical else "p11")]
    for t, v, d in zip(t_grid, scaled, dev):
        lines.append("%r,%r,%r,%r" % (t, float(v), limit, float(d)))
    (out / "p11_convergence.csv").write_text("\n".join(lines) + "\n")
    outputs.append("p11_convergence.csv")
    if not np.all(np.diff(dev) < 0):
        failures.append("p11 deviation sequence is not decreasing")
    if dev[-1] > gate:
        failures.append("p11 deviation %.4g at t=%g exceeds gate %.4g"
                        % (dev[-1], t_grid[-1], gate))
    if not m.is_critical:
        a1 = kolmogorov_constant(m)
        a2 = kolmogorov_constant_deflated(m)
        rel = abs(a1 - a2) / abs(a1)
        if rel > A_SCHEME_REL_TOL:
            failures.append(
                "independent quadrature schemes disagree: rel diff %.3e" % rel)

    from .plots import plot_p11_convergence, plot_variance_normalization

    plot_p11_convergence(t_grid, scaled, limit, m.is_critical,
                         out / "p11_convergence.png")
    outputs.append("p11_convergence.png")

    # conditioned transition tables at the grid times, as plot-ready CSV
    from .gf import qprocess_transition_tables

    for tab in qprocess_transition_tables(m, 1, t_grid, J_max=args.jmax,
                                          ode_tol=args.ode_tol):
        name = "conditioned_table_t%g.csv" % tab.t
        write_table_csv(out / name, tab)
        outputs.append(name)

    # normalized estimator variance along the grid
    usable = [t for t in t_grid if t > 1.0]
    if usable:
        kw = {}
        if args.method == "monte_carlo":
            kw = {"n_reps": _positive(args.reps, "--reps"),
                  "master_seed": _require_seed(args)}
        rows = theorem_convergence_table(
            m, usable, method=args.method, J_max=args.jmax,
            ode_tol=args.ode_tol, **kw)
        write_convergence_csv(out / "variance_normalization.csv", rows)
        outputs.append("variance_normalization.csv")
        plot_variance_normalization(rows, m.is_critical,
                                    out / "variance_normalization.png")
        outputs.append("variance_normalization.png")
        vals = np.array([r.normalized_variance for r in rows])
        if m.is_critical:
            vdev = np.abs(vals - 1.0)
            if not np.all(np.diff(vdev) < 0):
                failures.append("normalized variance deviation is not decreasing")
            if vdev[-1] > args.variance_gate:
                failures.append(
                    "normalized variance deviation %.4g at t=%g exceeds gate %.4g"
                    % (vdev[-1], usable[-1], args.variance_gate))
        else:
            if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
                failures.append("variance values must be positive and finite")
            else:
                ratio = vals.max() / vals.min()
                if ratio >= args.ratio_gate:
                    failures.append(
                        "variance max/min ratio %.4g exceeds gate %.4g"
                        % (ratio, args.ratio_gate))

    params = {"t_grid": t_grid, "method": args.method, "jmax": args.jmax,
              "ode_tol": args.ode_tol, "seed": args.seed, "reps": args.reps}
    write_manifest(out, "verify-theorems", __version__, args.model,
                   Path(args.model).read_text(), params, outputs)

    print("p11 limit constant: %.10g" % limit)
    for t, v, d in zip(t_grid, scaled, dev):
        print("  t=%-6g %s=%.8g  |dev|=%.3g"
              % (t, "t^2*p11" if m.is_critical else "p11", v, d))
    for f in failures:
        print("FAIL: %s" % f)
    print("verify-theorems: %s" % ("PASS" if not failures else "FAIL"))
    return EXIT_OK if not failures else EXIT_GATE


def cmd_estimate(args) -> int:
    m = load_model(args.model, tol=args.tol)
    seed = _require_seed(args)
    if args.t <= 1.0:
        raise UsageError("--t must exceed 1")
    _positive(args.reps, "--reps")
    out = _out_dir(args)
    est, n_excluded = collect_estimates(m, args.i0, args.t, args.reps, seed,
                                        cap=args.cap)
    report = report_from_estimates(m, args.t, args.reps, est, n_excluded)
    series = exact_variance_series(m, args.t, J_max=args.jmax, ode_tol=args.ode_tol)
    report = with_series_variance(report, series)
    outputs = ["estimator_report.json", "convergence.csv", "estimates.png"]
    write_report_json(out / "estimator_report.json", report)

    from .estimator import ConvergenceRow
    from .plots import plot_estimate_histogram

    scale = args.t / 2.0 if m.is_critical else 1.0
    rows = [
        ConvergenceRow(args.t, scale * series.value,
                       scale * series.remainder_bound, "series"),
        ConvergenceRow(args.t, scale * report.variance_with_excluded_as_limit,
                       scale * report.var_limit_se_jackknife, "monte_carlo"),
    ]
    write_convergence_csv(out / "convergence.csv", rows)
    plot_estimate_histogram(est, m.beta, report.mean_estimate, out / "estimates.png")

    params = {"t": args.t, "reps": args.reps, "seed": seed, "i0": args.i0,
              "jmax": args.jmax, "ode_tol": args.ode_tol, "cap": args.cap}
    write_manifest(out, "estimate", __version__, args.model,
                   Path(args.model).read_text(), params, outputs)
    print("mean estimate %.6g (beta %.6g), se %.3g, excluded %d/%d"
          % (report.mean_estimate, m.beta, report.se_mean,
             report.n_excluded, report.n_total))
    print("sample variance %.6g vs exact series %.6g"
          % (report.sample_variance, series.value))
    return EXIT_OK


def cmd_simulate(args) -> int:
    m = load_model(args.model, tol=args.tol)
    seed = _require_seed(args)
    _positive(args.horizon, "--horizon")
    _positive(args.reps, "--reps")
    if args.i0 < 1:
        raise UsageError("--i0 must be at least 1")
    out = _out_dir(args)
    sim = simulate_mbs if args.process == "mbs" else simulate_qprocess
    trajs = []
    outputs = []
    for rep in range(args.reps):
        traj = sim(m, args.i0, args.horizon, replicate_stream(seed, rep),
                   cap=args.cap)
        name = "trajectory_%05d.csv" % rep
        write_trajectory_csv(out / name, traj)
        outputs.append(name)
        trajs.append(traj)
        if traj.overflowed:
            print("replicate %d truncated by state cap at t=%g"
                  % (rep, traj.horizon))

    from .plots import plot_trajectories

    plot_trajectories(trajs[: min(len(trajs), 20)], args.horizon,
                      out / "trajectories.png")
    outputs.append("trajectories.png")
    params = {"process": args.process, "i0": args.i0, "horizon": args.horizon,
              "reps": args.reps, "seed": seed, "cap": args.cap}
    write_manifest(out, "simulate", __version__, args.model,
                   Path(args.model).read_text(), params, outputs)
    print("wrote %d trajectories to %s" % (args.reps, out))
    return EXIT_OK


_COMMANDS = {
    "model-info": cmd_model_info,
    "verify-theorems": cmd_verify_theorems,
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(argv)
    except (ModelFileError, OSError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ModelFileError, ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as exc:
        print("numeric failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
