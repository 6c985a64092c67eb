"""Genetic-algorithm tests: sampling, selection, operators, evolution loop."""

import numpy as np
import pytest

from dgparam.boxmap import BoundSpec
from dgparam.errors import AllInfeasible, BadBounds
from dgparam.golga import (Chromosome, GAConfig, Population, crossover,
                           crossover_blend, evaluate_fitness, gol_mutate,
                           init_population, run_ga, select_parents)

SPHERE_SPECS = [BoundSpec.interval(-5.0, 5.0)] * 5


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def test_config_validation():
    with pytest.raises(ValueError):
        GAConfig(population=2)
    with pytest.raises(ValueError):
        GAConfig(generations=-1)
    with pytest.raises(ValueError):
        GAConfig(mutate_fraction=1.0)


def test_init_population_respects_sampling_windows():
    specs = [BoundSpec.interval(-1.0, 2.0),
             BoundSpec.at_least(0.0, sample_cap=5.0),
             BoundSpec.at_most(10.0, sample_cap=3.0)]
    pop = init_population(specs, 200, np.random.default_rng(0))
    thetas = np.array([m.theta for m in pop.members])
    assert np.all(thetas[:, 0] >= -1.0) and np.all(thetas[:, 0] <= 2.0)
    assert np.all(thetas[:, 1] >= 0.0) and np.all(thetas[:, 1] <= 5.0)
    assert np.all(thetas[:, 2] >= 7.0) and np.all(thetas[:, 2] <= 10.0)
    with pytest.raises(BadBounds):
        init_population([BoundSpec()], 10, np.random.default_rng(0))


def test_init_population_deterministic():
    a = init_population(SPHERE_SPECS, 40, 123)
    b = init_population(SPHERE_SPECS, 40, 123)
    for ma, mb in zip(a.members, b.members):
        np.testing.assert_array_equal(ma.theta, mb.theta)


def test_evaluate_fitness_rules(monkeypatch):
    monkeypatch.setenv("DGPARAM_THREADS", "1")  # keep the call log ordered
    members = [Chromosome(np.array([1.0])),
               Chromosome(np.array([2.0]), cost=7.0, fitness=1.0 / 7.0),
               Chromosome(np.array([3.0]))]
    costs = {1.0: 4.0, 3.0: np.nan}
    calls = []

    def cost_fn(theta):
        calls.append(theta[0])
        return costs[theta[0]]

    pop = Population(members)
    n = evaluate_fitness(pop, cost_fn)
    assert n == 2 and sorted(calls) == [1.0, 3.0]  # cached member skipped
    assert members[0].fitness == pytest.approx(1.0 / (4.0 + 1e-30))
    assert members[1].cost == 7.0  # untouched
    assert members[2].cost == np.inf and members[2].fitness == 0.0


def test_roulette_selection_tracks_fitness_ratio():
    members = [Chromosome(np.zeros(1), cost=1.0, fitness=3.0),
               Chromosome(np.zeros(1), cost=3.0, fitness=1.0)]
    pop = Population(members)
    pairs = select_parents(pop, np.random.default_rng(42), 20000)
    picks = np.array(pairs).reshape(-1)
    share = np.mean(picks == 0)
    assert share == pytest.approx(0.75, abs=0.01)  # 3:1 fitness ratio


def test_roulette_raises_when_all_zero():
    members = [Chromosome(np.zeros(1), cost=np.inf, fitness=0.0)] * 4
    with pytest.raises(AllInfeasible):
        select_parents(Population(members), np.random.default_rng(0), 2)


def test_crossover_blend_children_are_complementary():
    rng = np.random.default_rng(17)
    for _ in range(50):
        a, b = rng.normal(size=(2, 6))
        lam = float(rng.random())
        ck, cl = crossover_blend(a, b, lam)
        np.testing.assert_allclose(ck + cl, a + b, rtol=1e-14)
        np.testing.assert_allclose(ck, (1 - lam) * a + lam * b, rtol=1e-14)
    ck, cl = crossover_blend(a, b, 0.0)
    np.testing.assert_array_equal(ck, a)
    np.testing.assert_array_equal(cl, b)


def test_crossover_uses_one_blend_for_both_children():
    a = Chromosome(np.array([0.0, 0.0]))
    b = Chromosome(np.array([1.0, 2.0]))
    ck, cl = crossover(a, b, np.random.default_rng(3))
    lam = ck.theta[0] / 1.0  # recover the blend from the first gene
    np.testing.assert_allclose(ck.theta, lam * b.theta, rtol=1e-14)
    np.testing.assert_allclose(cl.theta, (1 - lam) * b.theta + lam * a.theta,
                               rtol=1e-12, atol=1e-15)


def test_gol_mutation_formula_via_twin_stream():
    # replicate the draw stream: candidate = lam*(lo+hi) - theta, kept when
    # inside the dynamic box, else replaced by a uniform draw inside it
    lo = np.array([0.0, -1.0, 2.0])
    hi = np.array([2.0, 1.0, 3.0])
    theta = np.array([0.5, 0.9, 2.1])
    for seed in range(20):
        out = gol_mutate(theta, lo, hi, np.random.default_rng(seed))
        twin = np.random.default_rng(seed)
        expect = np.empty(3)
        for i in range(3):
            lam = twin.random()
            cand = lam * (lo[i] + hi[i]) - theta[i]
            if lo[i] <= cand <= hi[i]:
                expect[i] = cand
            else:
                expect[i] = lo[i] + twin.random() * (hi[i] - lo[i])
        np.testing.assert_array_equal(out, expect)


def test_gol_mutation_hand_case():
    # box [0, 2], theta = 0.5, lam = 0.5: lam*(lo+hi) - theta = 0.5
    lam = 0.5
    assert lam * (0.0 + 2.0) - 0.5 == 0.5
    out = gol_mutate(np.array([0.5]), np.array([0.0]), np.array([2.0]),
                     np.random.default_rng(0))
    assert 0.0 <= out[0] <= 2.0


def test_gol_mutants_stay_in_dynamic_box():
    rng = np.random.default_rng(9)
    lo, hi = np.array([-2.0, 0.0]), np.array([1.0, 0.5])
    for _ in range(200):
        theta = rng.uniform(lo, hi)
        out = gol_mutate(theta, lo, hi, rng)
        assert np.all(out >= lo) and np.all(out <= hi)


def test_run_ga_bookkeeping():
    res = run_ga(sphere, SPHERE_SPECS, GAConfig(), seed=0)
    assert len(res.cost_history) == 11  # initial best + one per generation
    assert all(a >= b for a, b in zip(res.cost_history, res.cost_history[1:]))
    assert res.best.cost == res.cost_history[-1]
    assert res.n_evals == 40 + 10 * 39  # elite is never re-evaluated
    assert not res.reinitialized
    for lo, hi, val in zip([-5.0] * 5, [5.0] * 5, res.best.theta):
        assert lo <= val <= hi


def test_run_ga_deterministic_per_seed():
    a = run_ga(sphere, SPHERE_SPECS, GAConfig(), seed=5)
    b = run_ga(sphere, SPHERE_SPECS, GAConfig(), seed=5)
    np.testing.assert_array_equal(a.best.theta, b.best.theta)
    assert a.cost_history == b.cost_history
    c = run_ga(sphere, SPHERE_SPECS, GAConfig(), seed=6)
    assert c.best.cost != a.best.cost


def test_run_ga_improves_on_the_initial_population():
    res = run_ga(sphere, SPHERE_SPECS, GAConfig(), seed=1)
    assert res.best.cost < res.cost_history[0]


def test_run_ga_reinitializes_once_then_raises(monkeypatch):
    monkeypatch.setenv("DGPARAM_THREADS", "1")  # deterministic call counting
    with pytest.raises(AllInfeasible):
        run_ga(lambda th: np.inf, SPHERE_SPECS, GAConfig(), seed=0)

    # feasible only after the first population is thrown away
    calls = {"n": 0}

    def late_bloomer(theta):
        calls["n"] += 1
        return np.inf if calls["n"] <= 40 else sphere(theta)

    res = run_ga(late_bloomer, SPHERE_SPECS, GAConfig(generations=2), seed=0)
    assert res.reinitialized
    assert np.isfinite(res.best.cost)
