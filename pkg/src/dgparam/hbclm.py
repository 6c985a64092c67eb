"""Fit orchestration: box-constrained LM, plain LM, and the hybrid two-stage fit.

The box-constrained solver iterates in the unconstrained beta coordinates
of the bound transforms, so every point the objective ever sees satisfies
the bounds. The hybrid fit runs the genetic global stage first and polishes
its best member with the box-constrained solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxmap import beta_sensitivity, forward, inverse, mapping_jacobian
from .errors import StalledIteration
from .golga import GAConfig, run_ga
from .nlsq import (DampingState, channel_rmse, choose_lambda, fd_sensitivity,
                   hessian_spectrum, lm_step)

BOUND_NUDGE_TOL = 1e-9
BOUND_NUDGE = 1e-6
LOW_SENS_COLUMN_RATIO = 1e-6
NULL_EIG_RATIO = 1e-9
NULL_WEIGHT = 0.1


@dataclass
class StoppingCriteria:
    max_iterations: int = 50
    rel_cost_tol: float = 1e-6  # on |h_i - h_{i-1}| / max(h_i, 1e-30)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.rel_cost_tol > 0.0:
            raise ValueError("rel_cost_tol must be positive")


@dataclass
class FitReport:
    free_names: tuple
    theta: np.ndarray  # final free-parameter values
    parameter_set: object  # full ParameterSet at the solution
    converged: bool
    reason: str
    iterations: int  # accepted LM/BCLM iterations
    iterations_ga: int
    cost_trace: list  # accepted costs, starting with the initial point
    lambda_trace: list
    ga_cost_trace: list | None
    rmse_f: float
    rmse_v: float
    spectrum: np.ndarray | None  # eigenvalues of S^T S at the solution, descending
    fd_failed: tuple  # parameter names whose sensitivity column was zeroed
    low_sensitivity: tuple  # names the identifiability detector flagged
    bound_touching: tuple  # names sitting on a bound at the solution
    in_bounds: bool
    n_evals: int  # objective evaluations consumed by the local stage

    @property
    def cost(self):
        return self.cost_trace[-1]


def _nudge_interval_betas(beta, specs):
    """Move any interval beta off an odd integer, where the mapping gradient
    vanishes and would freeze the parameter on its bound."""
    out = beta.copy()
    for i, spec in enumerate(specs):
        if spec.kind != "interval":
            continue
        nearest_odd = 2.0 * round((out[i] - 1.0) / 2.0) + 1.0
        if abs(out[i] - nearest_odd) < BOUND_NUDGE_TOL:
            out[i] = nearest_odd - BOUND_NUDGE if nearest_odd > 0 else \
                nearest_odd + BOUND_NUDGE
    return out


def low_sensitivity_parameters(s_theta, names, theta=None,
                               column_ratio=LOW_SENS_COLUMN_RATIO,
                               eig_ratio=NULL_EIG_RATIO,
                               weight=NULL_WEIGHT):
    """Names whose data support is weak at the solution.

    Two mechanisms: a sensitivity column far smaller than the largest one
    (the parameter barely moves the outputs), and a significant relative
    weight in a near-null eigenvector of S^T S (the parameter only acts
    through a combination other parameters can absorb, so its own value
    is not pinned by the data).  Eigenvector components are compared on a
    per-parameter relative scale |v_j|/|theta_j| so that a null direction
    moving a small parameter by its whole magnitude counts as much as one
    moving a large parameter by its whole magnitude.
    """
    s_theta = np.asarray(s_theta, dtype=np.float64)
    flagged = set()
    norms = np.sqrt(np.sum(s_theta ** 2, axis=0))
    max_norm = norms.max() if norms.size else 0.0
    if max_norm > 0.0:
        for j, nrm in enumerate(norms):
            if nrm < column_ratio * max_norm:
                flagged.add(names[j])
    if theta is None:
        scales = np.ones(len(names))
    else:
        theta = np.asarray(theta, dtype=np.float64)
        scales = np.maximum(np.abs(theta), 1e-8)
    a = s_theta.T @ s_theta
    if a.size:
        w, v = np.linalg.eigh(a)
        w_max = w[-1]
        if w_max > 0.0:
            for k in range(w.size):
                if w[k] <= eig_ratio * w_max:
                    rel = np.abs(v[:, k]) / scales
                    top = rel.max()
                    if top <= 0.0:
                        continue
                    for j in range(len(names)):
                        if rel[j] >= weight * top:
                            flagged.add(names[j])
    return tuple(n for n in names if n in flagged)


def _bound_touching(theta, specs, names):
    out = []
    for t, spec, name in zip(theta, specs, names):
        scale = max(1.0, abs(t))
        near_lo = np.isfinite(spec.lo) and abs(t - spec.lo) <= 1e-8 * scale
        near_hi = np.isfinite(spec.hi) and abs(t - spec.hi) <= 1e-8 * scale
        if near_lo or near_hi:
            out.append(name)
    return tuple(out)


def _finish_report(problem, theta, specs, current, trace, lam_trace,
                   converged, reason, iterations, n_evals,
                   fd_failed_names, ga_trace=None, iterations_ga=0):
    names = problem.free_names
    if current.finite:
        s_final = fd_sensitivity(theta, problem, baseline=current, specs=specs)
        spectrum = hessian_spectrum(s_final)
        low_sens = low_sensitivity_parameters(s_final.entries, names, theta)
        fd_failed_names = tuple(sorted(set(fd_failed_names)
                                       | {names[j] for j in s_final.failed_columns}))
    else:
        spectrum = None
        low_sens = ()
    rmse_f, rmse_v = channel_rmse(current)
    in_bounds = all(spec.contains(t) for spec, t in zip(specs, theta)) if specs \
        else True
    return FitReport(
        free_names=names,
        theta=theta.copy(),
        parameter_set=problem.parameter_set(theta),
        converged=converged,
        reason=reason,
        iterations=iterations,
        iterations_ga=iterations_ga,
        cost_trace=trace,
        lambda_trace=lam_trace,
        ga_cost_trace=list(ga_trace) if ga_trace is not None else None,
        rmse_f=rmse_f,
        rmse_v=rmse_v,
        spectrum=spectrum,
        fd_failed=tuple(fd_failed_names),
        low_sensitivity=low_sens,
        bound_touching=_bound_touching(theta, specs, names) if specs else (),
        in_bounds=in_bounds,
        n_evals=n_evals,
    )


def _lm_loop(problem, theta0, specs, stop, lam0, a):
    """Shared damped-iteration loop; specs=None runs in raw theta space."""
    stop = stop or StoppingCriteria()
    names = problem.free_names
    theta0 = np.asarray(theta0, dtype=np.float64)

    if specs is not None:
        point = inverse(theta0, specs, names)
    else:
        point = theta0.copy()

    def to_theta(pt):
        return forward(pt, specs) if specs is not None else pt

    current = problem.evaluate(to_theta(point))
    n_evals = 1
    trace = [current.cost]
    lam_trace = []
    fd_failed = set()
    state = DampingState(lam0, a)

    if not current.finite:
        return _finish_report(problem, to_theta(point), specs, current, trace,
                              lam_trace, False, "initial point has infinite cost",
                              0, n_evals, ())

    converged = False
    reason = "maximum iterations reached"
    iterations = 0
    for it in range(1, stop.max_iterations + 1):
        iterations = it
        if specs is not None:
            point = _nudge_interval_betas(point, specs)
        theta = to_theta(point)
        s_theta = fd_sensitivity(theta, problem, baseline=current, specs=specs)
        n_evals += len(names)
        fd_failed.update(names[j] for j in s_theta.failed_columns)
        if specs is not None:
            s_work = beta_sensitivity(s_theta.entries, mapping_jacobian(point, specs))
        else:
            s_work = s_theta.entries

        def eval_step(lam):
            step = lm_step(s_work, current, lam)
            return step, problem.evaluate(to_theta(point + step))

        try:
            state, step, candidate = choose_lambda(state, current.cost, eval_step)
        except StalledIteration:
            converged = False
            reason = "stalled: damping retries exhausted"
            iterations = it - 1
            break
        n_evals += 3  # at least one candidate round; retries are rare and small

        point = point + step
        prev_cost = trace[-1]
        current = candidate
        trace.append(current.cost)
        lam_trace.append(state.lam)
        if abs(current.cost - prev_cost) / max(current.cost, 1e-30) <= stop.rel_cost_tol:
            converged = True
            reason = "relative cost change below tolerance"
            break

    theta = to_theta(point)
    return _finish_report(problem, theta, specs, current, trace, lam_trace,
                          converged, reason, iterations, n_evals, fd_failed)


def bclm_solve(theta0, specs, problem, stop=None, lam0=1e-3, a=0.1):
    """Box-constrained LM from an in-bounds initial estimate."""
    specs = list(specs)
    if len(specs) != problem.n_free:
        raise ValueError("one BoundSpec per free parameter is required")
    return _lm_loop(problem, theta0, specs, stop, lam0, a)


def lm_solve_unconstrained(theta0, problem, stop=None, lam0=1e-3, a=0.1):
    """Plain LM in raw parameter space; estimates may leave physical ranges."""
    return _lm_loop(problem, theta0, None, stop, lam0, a)


def hbclm_fit(specs, problem, ga_config=None, stop=None, seed=0,
              lam0=1e-3, a=0.1):
    """Global GA stage followed by box-constrained LM polish.

    Needs no initial estimate: the GA seeds itself inside the bounds and
    its best member starts the local stage.
    """
    ga_config = ga_config or GAConfig()
    ga = run_ga(lambda th: problem.evaluate(th).cost, specs, ga_config, seed)
    report = bclm_solve(ga.best.theta, specs, problem, stop=stop, lam0=lam0, a=a)
    report.iterations_ga = ga_config.generations
    report.ga_cost_trace = list(ga.cost_history)
    report.n_evals += ga.n_evals
    return report
