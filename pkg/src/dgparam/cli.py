"""Command line interface: fit, simulate, benchmark, diagnose.

Exit codes: 0 success/converged, 2 completed without convergence
(best effort written), 1 error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import benchmark as bench
from .config import parse_config
from .dynmodel import PARAM_NAMES
from .errors import DGParamError, SimulationBlewUp
from .hbclm import bclm_solve, hbclm_fit
from .integrator import simulate
from .measurements import parse_measurements, write_measurements
from .nlsq import Experiment, FitProblem, fd_sensitivity, hessian_spectrum

RANK_DEFICIENT_RATIO = 1e-9


def _build_problem(cfg, series):
    return FitProblem(cfg.base, cfg.free_names, [Experiment(cfg.profile, series)],
                      cfg.sim)


def format_report(report, specs):
    lines = ["[result]"]
    lines.append(f"converged = {str(report.converged).lower()}")
    lines.append(f"reason = {report.reason}")
    lines.append(f"iterations_global = {report.iterations_ga}")
    lines.append(f"iterations_local = {report.iterations}")
    lines.append(f"cost = {report.cost:.17g}")
    lines.append(f"rmse_freq_pu = {report.rmse_f:.17g}")
    lines.append(f"rmse_volt_pu = {report.rmse_v:.17g}")
    lines.append(f"objective_evaluations = {report.n_evals}")
    lines.append("")
    lines.append("[parameters]")
    spec_by_name = dict(zip(report.free_names, specs))
    full = report.parameter_set.values()
    for name in PARAM_NAMES:
        if name in spec_by_name:
            spec = spec_by_name[name]
            lines.append(f"{name} = {full[name]:.17g}  # bounds [{spec.lo:g}, {spec.hi:g}]")
        else:
            lines.append(f"{name} = {full[name]:.17g}  # fixed")
    lines.append("")
    lines.append("[flags]")
    lines.append("low_sensitivity = " + ", ".join(report.low_sensitivity))
    lines.append("bound_touching = " + ", ".join(report.bound_touching))
    lines.append("fd_failed = " + ", ".join(report.fd_failed))
    lines.append("")
    lines.append("[trace]")
    lines.append("# iteration, cost, lambda")
    lines.append(f"0, {report.cost_trace[0]:.17g}, -")
    for i, (c, lam) in enumerate(zip(report.cost_trace[1:], report.lambda_trace), 1):
        lines.append(f"{i}, {c:.17g}, {lam:.6g}")
    if report.ga_cost_trace:
        lines.append("")
        lines.append("[global_stage]")
        lines.append("# generation, best cost so far")
        for g, c in enumerate(report.ga_cost_trace):
            lines.append(f"{g}, {c:.17g}")
    if report.spectrum is not None:
        lines.append("")
        lines.append("[spectrum]")
        lines.append("# eigenvalues of the Gauss-Newton normal matrix, descending")
        for w in report.spectrum:
            lines.append(f"{w:.6e}")
    return "\n".join(lines) + "\n"


def _write_fit_outputs(report, cfg, series, problem, report_path, traj_path):
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(format_report(report, cfg.specs))
    fitted = problem.outputs(report.theta)
    with open(traj_path, "w", encoding="utf-8") as fh:
        fh.write("time_s,meas_freq_pu,meas_volt_pu,fit_freq_pu,fit_volt_pu\n")
        for t, (mf, mv), (ff, fv) in zip(series.times, series.values(), fitted):
            fh.write(f"{t:.17g},{mf:.17g},{mv:.17g},{ff:.17g},{fv:.17g}\n")


def cmd_fit(args):
    cfg = parse_config(args.config)
    series = parse_measurements(args.data)
    problem = _build_problem(cfg, series)
    if cfg.algorithm == "bclm":
        report = bclm_solve(cfg.theta0, cfg.specs, problem, stop=cfg.stopping)
    else:
        report = hbclm_fit(cfg.specs, problem, ga_config=cfg.ga,
                           stop=cfg.stopping, seed=cfg.seed)
    _write_fit_outputs(report, cfg, series, problem, args.report, args.trajectory)
    status = "converged" if report.converged else "did not converge (best effort saved)"
    print(f"fit {status}: cost={report.cost:.6g} rmse_f={report.rmse_f:.6g} "
          f"rmse_v={report.rmse_v:.6g}")
    print(f"report: {args.report}")
    print(f"trajectory: {args.trajectory}")
    return 0 if report.converged else 2


def cmd_simulate(args):
    cfg = parse_config(args.config)
    p = cfg.base  # free entries hold their configured initial values
    traj = simulate(p, cfg.profile, cfg.sim)
    write_measurements(args.out, traj.times, traj.outputs,
                       comment="simulated load-step response")
    print(f"wrote {len(traj.times)} samples to {args.out}")
    return 0


def cmd_diagnose(args):
    cfg = parse_config(args.config)
    series = parse_measurements(args.data)
    problem = _build_problem(cfg, series)
    s = fd_sensitivity(cfg.theta0, problem, specs=cfg.specs)
    spectrum = hessian_spectrum(s)
    print("eigenvalues of the normal matrix (descending):")
    for w in spectrum:
        print(f"  {w: .6e}")
    ratio = spectrum[-1] / spectrum[0] if spectrum[0] != 0.0 else np.inf
    print(f"smallest/largest ratio: {ratio:.3e}")
    if ratio < RANK_DEFICIENT_RATIO:
        print("RANK-DEFICIENT: at least one parameter direction is not "
              "identifiable from this data")
    else:
        print("OK: the normal matrix is numerically full rank")
    return 0


def cmd_benchmark(args):
    result = bench.run_case(args.case, seed=args.seed, paper_scale=args.paper_scale)
    truth = bench.TRUE_VALUES
    names = bench.FREE_NAMES
    width = max(len(n) for n in names)
    header = f"{'parameter':<{width}} {'true':>12}" + "".join(
        f" {run.algorithm:>12}" for run in result.runs)
    print(f"case {args.case}")
    print(header)
    for i, name in enumerate(names):
        row = f"{name:<{width}} {truth[name]:>12.6g}"
        for run in result.runs:
            row += f" {run.report.theta[i]:>12.6g}"
        print(row)
    for run in result.runs:
        rep = run.report
        print(f"{run.algorithm}: cost={rep.cost:.6g} iterations={rep.iterations}"
              f"{' + ' + str(rep.iterations_ga) + ' global' if rep.iterations_ga else ''}"
              f" converged={rep.converged}")
        for check in run.checks:
            print(f"  {'PASS' if check.passed else 'FAIL'}: {check.label} ({check.detail})")
    print(f"case {args.case}: {'PASS' if result.passed else 'FAIL'}")
    return 0 if result.passed else 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dgparam",
        description="Diesel-generator model simulation and parameter estimation "
                    "from load-step tests.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="estimate parameters from a measurement file")
    p_fit.add_argument("--config", required=True, help="fit configuration (INI)")
    p_fit.add_argument("--data", required=True, help="measurement file (CSV)")
    p_fit.add_argument("--report", default="fit_report.txt")
    p_fit.add_argument("--trajectory", default="fit_trajectory.csv")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="simulate the configured parameter values")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", default="simulated.csv")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("benchmark", help="run a ground-truth benchmark case")
    p_bench.add_argument("--case", type=int, required=True, choices=(1, 2, 3, 4))
    p_bench.add_argument("--seed", type=int, default=bench.DEFAULT_GA_SEED)
    p_bench.add_argument("--paper-scale", action="store_true",
                         help="30 s horizon at 0.1 ms steps instead of the "
                              "desk-scale 5 s / 1 ms grid")
    p_bench.set_defaults(func=cmd_benchmark)

    p_diag = sub.add_parser("diagnose",
                            help="report the identifiability spectrum at the "
                                 "configured initial estimate")
    p_diag.add_argument("--config", required=True)
    p_diag.add_argument("--data", required=True)
    p_diag.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SimulationBlewUp as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DGParamError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
