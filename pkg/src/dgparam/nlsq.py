"""Nonlinear least-squares machinery: objective, sensitivities, damped steps.

The cost is h(theta) = 1/2 * sum over samples and channels of
(measured - simulated)^2. Sensitivities come from forward finite
differences of full simulations; the normal equations are damped by
lambda*I with a three-candidate schedule around the current damping.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .dynmodel import PARAM_INDEX, ParameterSet
from .errors import (NoEquilibrium, NonFiniteState, SimulationBlewUp,
                     SingularNormalMatrix, StalledIteration)
from .integrator import _simulate, STATE_LIMIT, switch_index
from .dynmodel import steady_state

log = logging.getLogger(__name__)

# Failures that mean "this parameter vector produced no usable trajectory".
INFEASIBLE_ERRORS = (SimulationBlewUp, NoEquilibrium, NonFiniteState)

# Parameters that must stay positive for the model equations to make any
# sense; the objective walls them off with infinite cost instead of raising.
HARD_POSITIVE = ("T2", "T3", "T_V", "H", "T_dop")

COND_LIMIT = 1e14
FD_RELATIVE_STEP = 1e-6


@dataclass
class ResidualSet:
    """Per-sample, per-channel residuals (measured - simulated) plus the cost."""

    residuals: np.ndarray | None  # (n_rows, 2) or None when the point is infeasible
    cost: float

    @property
    def flat(self):
        return self.residuals.reshape(-1)

    @property
    def finite(self):
        return self.residuals is not None and np.isfinite(self.cost)


@dataclass
class SensitivityMatrix:
    """Stacked output sensitivities, one column per free parameter."""

    entries: np.ndarray  # (n_rows * 2, n_free)
    failed_columns: tuple = ()  # column indices zeroed after repeated blow-ups


@dataclass
class DampingState:
    lam: float = 1e-3  # current damping
    a: float = 0.1  # candidate ratio; candidates are {lam, a*lam, lam/a}

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError("lambda must be positive")
        if not 0.0 < self.a < 1.0:
            raise ValueError("candidate ratio a must be in (0, 1)")


@dataclass
class Experiment:
    """One load-step test: the input profile and the recorded series."""

    profile: object
    series: object


class FitProblem:
    """Bundles the model, measurement grids and experiments behind theta.

    The free-parameter vector theta is defined by `free_names` (canonical
    model names); everything else is pinned at the base ParameterSet.
    Residuals from all experiments are concatenated, so multi-test fits
    share one objective.
    """

    def __init__(self, base, free_names, experiments, cfg, min_rows=10):
        if not isinstance(base, ParameterSet):
            raise TypeError("base must be a ParameterSet")
        free_names = tuple(free_names)
        probe = ParameterSet(base.engine, base.exciter, base.gen, free=free_names)
        self.base = probe
        self.free_names = free_names
        self.cfg = cfg
        self._base_pv = base.pack()
        self._free_idx = np.array([PARAM_INDEX[n] for n in free_names], dtype=np.intp)
        self._hard_idx = np.array(
            [PARAM_INDEX[n] for n in HARD_POSITIVE if n in free_names], dtype=np.intp)

        sample_dt = cfg.h * cfg.sample_stride
        n_samples = cfg.n_steps // cfg.sample_stride + 1
        self._runs = []
        z_blocks = []
        for exp in experiments:
            series = exp.series
            if len(series) < min_rows:
                raise ValueError(
                    f"series '{series.label or '?'}' has {len(series)} rows; "
                    f"fitting needs at least {min_rows}")
            rows = np.rint(series.times / sample_dt).astype(np.intp)
            snapped = rows * sample_dt
            off = np.abs(snapped - series.times)
            if np.any(off > 1e-9):
                worst = float(off.max())
                log.warning(
                    "series '%s': %d timestamps off the sample grid by up to %.3g s; "
                    "resampling to the nearest grid point",
                    series.label or "?", int(np.sum(off > 1e-9)), worst)
            if rows.min() < 0 or rows.max() >= n_samples:
                raise ValueError(
                    "measurement timestamps extend beyond the simulation horizon")
            if len(np.unique(rows)) != len(rows):
                raise ValueError("two measurement rows snap to the same grid point")
            self._runs.append((exp.profile, rows))
            z_blocks.append(series.values())
        if not self._runs:
            raise ValueError("at least one experiment is required")
        self.z = np.vstack(z_blocks)
        self.n_rows = self.z.shape[0]

    @property
    def n_free(self):
        return len(self.free_names)

    def pack_theta(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_free,):
            raise ValueError("theta length does not match free parameter list")
        pv = self._base_pv.copy()
        pv[self._free_idx] = theta
        return pv

    def parameter_set(self, theta):
        return self.base.with_free(theta)

    def outputs(self, theta):
        """Simulated output rows aligned with the measurement rows."""
        pv = self.pack_theta(theta)
        cfg = self.cfg
        blocks = []
        for profile, rows in self._runs:
            x0 = steady_state(profile.r_pre, pv)
            times, outs, x, samp, status, t_fail = _simulate(
                x0, pv, float(profile.r_pre), float(profile.r_post),
                float(cfg.h), cfg.n_steps, switch_index(profile, cfg),
                int(cfg.sample_stride), STATE_LIMIT)
            if status != 0:
                raise SimulationBlewUp(t_fail)
            blocks.append(outs[rows])
        return np.vstack(blocks)

    def evaluate(self, theta):
        """ResidualSet at theta; infeasible points get infinite cost."""
        theta = np.asarray(theta, dtype=np.float64)
        pv = self.pack_theta(theta)
        if np.any(pv[self._hard_idx] <= 0.0) or not np.all(np.isfinite(theta)):
            return ResidualSet(None, np.inf)
        try:
            y = self.outputs(theta)
        except INFEASIBLE_ERRORS:
            return ResidualSet(None, np.inf)
        r = self.z - y
        return ResidualSet(r, 0.5 * float(np.sum(r * r)))


def objective(theta, problem):
    """Cost and residuals of a free-parameter vector on a fit problem."""
    return problem.evaluate(theta)


def channel_rmse(residual_set):
    """(rmse_frequency, rmse_voltage) of a residual set; inf when infeasible."""
    if not residual_set.finite:
        return (np.inf, np.inf)
    r = residual_set.residuals
    return (float(np.sqrt(np.mean(r[:, 0] ** 2))),
            float(np.sqrt(np.mean(r[:, 1] ** 2))))


def fd_sensitivity(theta, problem, baseline=None, specs=None,
                   rel_step=FD_RELATIVE_STEP):
    """Forward-difference sensitivity of stacked outputs w.r.t. each theta_j.

    Perturbations are rel_step * max(|theta_j|, 1). When bound specs are
    supplied, a perturbation that would cross a bound flips sign so every
    evaluated point stays feasible. A column whose perturbed run diverges
    is retried at a tenth of the step, then zeroed and flagged.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if baseline is not None and baseline.finite:
        y0 = problem.z - baseline.residuals
    else:
        y0 = problem.outputs(theta)
    y0_flat = y0.reshape(-1)
    n = theta.size

    def column(j):
        delta = rel_step * max(abs(theta[j]), 1.0)
        if specs is not None:
            spec = specs[j]
            if np.isfinite(spec.hi) and theta[j] + delta > spec.hi:
                delta = -delta
        for attempt in range(2):
            pert = theta.copy()
            pert[j] += delta
            try:
                y = problem.outputs(pert)
            except INFEASIBLE_ERRORS:
                delta /= 10.0
                continue
            return (y.reshape(-1) - y0_flat) / delta, False
        return np.zeros_like(y0_flat), True

    results = pmap(column, range(n))
    entries = np.column_stack([col for col, _ in results]) if n else \
        np.zeros((y0_flat.size, 0))
    failed = tuple(j for j, (_, bad) in enumerate(results) if bad)
    if failed:
        log.warning("sensitivity columns zeroed after repeated blow-ups: %s",
                    [problem.free_names[j] for j in failed]
                    if hasattr(problem, "free_names") else list(failed))
    return SensitivityMatrix(entries, failed)


def _as_matrix(s):
    return s.entries if isinstance(s, SensitivityMatrix) else np.asarray(s, dtype=np.float64)


def _as_residual_vector(r):
    if isinstance(r, ResidualSet):
        return r.flat
    return np.asarray(r, dtype=np.float64).reshape(-1)


def gn_step(s, r):
    """Gauss-Newton step from the normal equations; raises when near-singular."""
    s_mat = _as_matrix(s)
    rv = _as_residual_vector(r)
    a = s_mat.T @ s_mat
    b = s_mat.T @ rv
    w = np.linalg.eigvalsh(a)
    if w[0] <= 0.0 or w[-1] / w[0] > COND_LIMIT:
        cond = np.inf if w[0] <= 0.0 else w[-1] / w[0]
        raise SingularNormalMatrix(cond)
    return np.linalg.solve(a, b)


def lm_step(s, r, lam):
    """Levenberg-Marquardt step: (S^T S + lam I) d = S^T r."""
    if not lam > 0.0:
        raise ValueError("lambda must be positive")
    s_mat = _as_matrix(s)
    rv = _as_residual_vector(r)
    a = s_mat.T @ s_mat
    n = a.shape[0]
    return np.linalg.solve(a + lam * np.eye(n), s_mat.T @ rv)


def hessian_spectrum(s):
    """Eigenvalues of S^T S in descending order (signed, so near-null
    directions may show as tiny negatives)."""
    s_mat = _as_matrix(s)
    return np.linalg.eigvalsh(s_mat.T @ s_mat)[::-1]


def choose_lambda(state, current_cost, evaluate_step, max_retries=10):
    """Pick the damping from {lam, a*lam, lam/a} whose step costs least.

    evaluate_step(lam) must return (step_vector, ResidualSet). A candidate
    is acceptable when it does not worsen the cost; ties count so exact
    fits terminate instead of stalling. When every candidate worsens the
    cost the damping inflates by 1/a, up to max_retries times, after which
    StalledIteration is raised.
    """
    lam = state.lam
    a = state.a
    for _ in range(max_retries + 1):
        cands = [lam, a * lam, lam / a]
        results = pmap(evaluate_step, cands)
        costs = [res.cost for _, res in results]
        best = int(np.argmin(costs))
        if costs[best] <= current_cost:
            step, res = results[best]
            return DampingState(cands[best], a), step, res
        lam = lam / a
    raise StalledIteration(
        f"no damping candidate improved the cost after {max_retries} inflations")
