"""Solver-orchestration tests: LM loop behavior, bound safety, diagnostics."""

import numpy as np
import pytest

from dgparam import benchmark as bench
from dgparam.boxmap import BoundSpec
from dgparam.errors import OutOfBounds
from dgparam.golga import GAConfig
from dgparam.hbclm import (StoppingCriteria, _nudge_interval_betas, bclm_solve,
                           hbclm_fit, lm_solve_unconstrained,
                           low_sensitivity_parameters)
from dgparam.nlsq import ResidualSet


def small_problem(free=("m", "H", "T_dop")):
    return bench.build_problem(free=free)


def specs_for(names):
    all_specs = dict(zip(bench.FREE_NAMES, bench.bound_specs()))
    return [all_specs[n] for n in names]


def truth_theta(names):
    return np.array([bench.TRUE_VALUES[n] for n in names])


def test_stopping_criteria_validation():
    with pytest.raises(ValueError):
        StoppingCriteria(max_iterations=0)
    with pytest.raises(ValueError):
        StoppingCriteria(rel_cost_tol=0.0)


def test_zero_residual_start_converges_immediately():
    names = ("m", "H", "T_dop")
    problem = small_problem(names)
    theta0 = truth_theta(names)
    for report in (lm_solve_unconstrained(theta0, problem),
                   bclm_solve(theta0, specs_for(names), problem)):
        assert report.converged
        assert report.iterations == 1
        assert report.cost == pytest.approx(0.0, abs=1e-25)
        np.testing.assert_allclose(report.theta, theta0, rtol=1e-9)


def test_recovers_from_a_nearby_start():
    names = ("m", "H", "T_dop")
    problem = small_problem(names)
    start = truth_theta(names) * np.array([1.5, 1.3, 0.7])
    report = bclm_solve(start, specs_for(names), problem,
                        stop=StoppingCriteria(max_iterations=30))
    assert report.converged
    np.testing.assert_allclose(report.theta, truth_theta(names), rtol=1e-4)


class RecordingProblem:
    """Wraps a fit problem and logs every theta the objective ever sees."""

    def __init__(self, inner):
        self.inner = inner
        self.log = []

    @property
    def free_names(self):
        return self.inner.free_names

    @property
    def n_free(self):
        return self.inner.n_free

    @property
    def z(self):
        return self.inner.z

    def parameter_set(self, theta):
        return self.inner.parameter_set(theta)

    def outputs(self, theta):
        self.log.append(np.array(theta))
        return self.inner.outputs(theta)

    def evaluate(self, theta):
        self.log.append(np.array(theta))
        return self.inner.evaluate(theta)


def test_constrained_run_never_evaluates_outside_the_box():
    names = ("m", "T3", "H")
    recorder = RecordingProblem(small_problem(names))
    specs = specs_for(names)
    start = np.array([120.0, 0.19, 0.14])  # far from truth, inside bounds
    bclm_solve(start, specs, recorder, stop=StoppingCriteria(max_iterations=8))
    assert len(recorder.log) > 20
    for theta in recorder.log:
        for val, spec in zip(theta, specs):
            assert spec.contains(val)


def test_unconstrained_start_must_be_inside_bounds_for_bclm():
    names = ("m", "H", "T_dop")
    problem = small_problem(names)
    bad = truth_theta(names)
    bad[1] = 0.4  # H above its 0.15 ceiling
    with pytest.raises(OutOfBounds) as err:
        bclm_solve(bad, specs_for(names), problem)
    assert err.value.name == "H"


def test_spec_count_must_match():
    names = ("m", "H", "T_dop")
    problem = small_problem(names)
    with pytest.raises(ValueError):
        bclm_solve(truth_theta(names), specs_for(names)[:2], problem)


class StuckProblem:
    """Strict local minimum with a nonzero gradient: every move worsens."""

    free_names = ("a",)

    def __init__(self, theta0):
        self.theta0 = float(theta0)
        self.z = np.full((3, 2), self.theta0 + 1.0)

    def outputs(self, theta):
        t = float(np.asarray(theta)[0])
        return np.full((3, 2), t)

    def evaluate(self, theta):
        t = float(np.asarray(theta)[0])
        if t == self.theta0:
            return ResidualSet(self.z - self.outputs(theta), 3.0)
        return ResidualSet(np.full((3, 2), 10.0), 300.0)

    def parameter_set(self, theta):
        return None


def test_stalled_run_reports_best_point_so_far():
    problem = StuckProblem(2.0)
    report = lm_solve_unconstrained(np.array([2.0]), problem,
                                    stop=StoppingCriteria(max_iterations=10))
    assert not report.converged
    assert report.reason.startswith("stalled")
    assert report.iterations == 0  # no step was ever accepted
    assert report.theta[0] == 2.0
    assert report.cost == 3.0


def test_infeasible_start_reports_without_iterating():
    names = ("m", "H", "T_dop")
    problem = small_problem(names)
    theta0 = truth_theta(names)
    theta0[2] = -1.0  # T_dop wall: infinite cost
    report = lm_solve_unconstrained(theta0, problem)
    assert not report.converged
    assert report.reason == "initial point has infinite cost"
    assert report.iterations == 0 and np.isinf(report.cost)
    assert report.rmse_f == np.inf and report.rmse_v == np.inf
    assert report.spectrum is None


def test_nudge_moves_betas_off_odd_integers():
    specs = [BoundSpec.interval(0.0, 1.0), BoundSpec.interval(0.0, 1.0),
             BoundSpec.at_least(0.0), BoundSpec.interval(0.0, 1.0)]
    beta = np.array([1.0, -3.0, 5.0, 0.5])
    out = _nudge_interval_betas(beta, specs)
    assert out[0] == pytest.approx(1.0 - 1e-6)
    assert out[1] == pytest.approx(-3.0 + 1e-6)
    assert out[2] == 5.0  # one-sided coordinates are left alone
    assert out[3] == 0.5


def test_bclm_deterministic():
    names = ("m", "T3", "H")
    problem = small_problem(names)
    start = np.array([120.0, 0.19, 0.14])
    a = bclm_solve(start, specs_for(names), problem,
                   stop=StoppingCriteria(max_iterations=5))
    b = bclm_solve(start, specs_for(names), problem,
                   stop=StoppingCriteria(max_iterations=5))
    np.testing.assert_array_equal(a.theta, b.theta)
    assert a.cost_trace == b.cost_trace


def test_low_sensitivity_column_rule():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(40, 3))
    s[:, 1] *= 1e-9  # essentially no output response
    flags = low_sensitivity_parameters(s, ("a", "b", "c"))
    assert flags == ("b",)


def test_low_sensitivity_null_direction_rule():
    # two columns acting only through their sum: (1, -1) is an exact null
    rng = np.random.default_rng(1)
    col = rng.normal(size=(40,))
    other = rng.normal(size=(40,))
    s = np.column_stack([col, col, other])
    flags = low_sensitivity_parameters(s, ("a", "b", "c"))
    assert flags == ("a", "b")


def test_low_sensitivity_uses_parameter_scale():
    # same null direction, but parameter a is 1000x larger than b: moving a
    # by the eigenvector component is negligible relative to a itself
    rng = np.random.default_rng(2)
    col = rng.normal(size=(40,))
    other = rng.normal(size=(40,))
    s = np.column_stack([col, col, other])
    flags = low_sensitivity_parameters(s, ("a", "b", "c"),
                                       theta=np.array([1000.0, 1.0, 2.0]))
    assert flags == ("b",)


def test_full_rank_problem_flags_nothing():
    rng = np.random.default_rng(3)
    s = rng.normal(size=(40, 3))
    assert low_sensitivity_parameters(s, ("a", "b", "c")) == ()


def test_report_contents_on_a_real_fit():
    names = ("m", "H", "T_dop")
    problem = small_problem(names)
    report = bclm_solve(truth_theta(names), specs_for(names), problem)
    assert report.free_names == names
    assert report.in_bounds
    assert report.bound_touching == ()
    assert report.low_sensitivity == ()  # three well-excited parameters
    assert report.rmse_f == pytest.approx(0.0, abs=1e-12)
    assert report.rmse_v == pytest.approx(0.0, abs=1e-12)
    assert report.spectrum is not None and report.spectrum.shape == (3,)
    assert len(report.cost_trace) == report.iterations + 1
    assert len(report.lambda_trace) == report.iterations
    assert report.parameter_set.get("m") == pytest.approx(report.theta[0])


def test_hbclm_runs_both_stages():
    names = ("m", "H")
    problem = small_problem(names)
    report = hbclm_fit(specs_for(names), problem,
                       ga_config=GAConfig(population=6, generations=2),
                       stop=StoppingCriteria(max_iterations=10), seed=0)
    assert report.iterations_ga == 2
    assert len(report.ga_cost_trace) == 3
    assert report.n_evals > 6 + 2 * 5  # local stage adds to the global tally
    assert report.in_bounds
