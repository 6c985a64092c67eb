"""Global search stage: genetic algorithm with opposition-style mutation.

The population evolves inside the hard bounds; mutation reflects a member
through the population's own dynamic bounding box (per-parameter min/max),
which shrinks the exploration region as the population contracts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .errors import AllInfeasible, BadBounds

FITNESS_EPS = 1e-30


@dataclass
class GAConfig:
    population: int = 40
    generations: int = 10
    mutate_fraction: float = 0.2  # share of lowest-fitness members mutated per generation

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 0.0 <= self.mutate_fraction < 1.0:
            raise ValueError("mutate_fraction must be in [0, 1)")


@dataclass
class Chromosome:
    theta: np.ndarray
    cost: float = np.nan  # NaN marks "not yet evaluated"
    fitness: float = 0.0


@dataclass
class Population:
    members: list
    generation: int = 0
    dyn_lo: np.ndarray = None
    dyn_hi: np.ndarray = None

    def __post_init__(self):
        if self.dyn_lo is None:
            self.refresh_dynamic_bounds()

    def refresh_dynamic_bounds(self):
        thetas = np.array([m.theta for m in self.members])
        self.dyn_lo = thetas.min(axis=0)
        self.dyn_hi = thetas.max(axis=0)

    def best(self):
        return max(self.members, key=lambda m: m.fitness)


@dataclass
class GAResult:
    best: Chromosome
    cost_history: list  # best cost after init and after each generation
    n_evals: int
    reinitialized: bool
    final_population: Population


def _sampling_window(spec):
    kind = spec.kind
    if kind == "interval":
        return spec.lo, spec.hi
    if kind == "lower":
        return spec.lo, spec.lo + spec.sample_cap
    if kind == "upper":
        return spec.hi - spec.sample_cap, spec.hi
    raise BadBounds(f"cannot sample a {kind} parameter")


def init_population(specs, size, rng):
    """Uniform draws inside each bound (capped window on semi-infinite ranges)."""
    rng = np.random.default_rng(rng)
    windows = [_sampling_window(s) for s in specs]
    u = rng.random((size, len(specs)))
    members = []
    for row in u:
        theta = np.array([lo + x * (hi - lo) for x, (lo, hi) in zip(row, windows)])
        members.append(Chromosome(theta))
    return Population(members)


def evaluate_fitness(pop, cost_fn):
    """Fill cost and fitness = 1/(cost + eps) for members not yet scored.

    Members carried over with a finite recorded cost (the elite) are not
    re-evaluated. Infinite cost maps to fitness 0.
    """
    pending = [m for m in pop.members if np.isnan(m.cost)]
    costs = pmap(lambda m: float(cost_fn(m.theta)), pending)
    for m, c in zip(pending, costs):
        m.cost = np.inf if np.isnan(c) else c
        m.fitness = 0.0 if not np.isfinite(m.cost) else 1.0 / (m.cost + FITNESS_EPS)
    return len(pending)


def select_parents(pop, rng, n_pairs):
    """Fitness-proportionate (roulette) sampling with replacement."""
    fitness = np.array([m.fitness for m in pop.members])
    total = fitness.sum()
    if not total > 0.0:
        raise AllInfeasible("every member has zero fitness")
    rng = np.random.default_rng(rng)
    idx = rng.choice(len(pop.members), size=(n_pairs, 2), p=fitness / total)
    return [(int(i), int(j)) for i, j in idx]


def crossover_blend(theta_k, theta_l, blend):
    """Complementary blend children along the segment between two parents."""
    theta_k = np.asarray(theta_k, dtype=np.float64)
    theta_l = np.asarray(theta_l, dtype=np.float64)
    child_k = (1.0 - blend) * theta_k + blend * theta_l
    child_l = blend * theta_k + (1.0 - blend) * theta_l
    return child_k, child_l


def crossover(parent_k, parent_l, rng):
    """One blend factor per crossover event, shared by both offspring."""
    rng = np.random.default_rng(rng)
    blend = float(rng.random())
    ck, cl = crossover_blend(parent_k.theta, parent_l.theta, blend)
    return Chromosome(ck), Chromosome(cl)


def gol_mutate(theta, dyn_lo, dyn_hi, rng):
    """Opposition-style mutation inside the dynamic bounding box.

    Each gene proposes lam*(lo+hi) - theta_i with a fresh lam; proposals
    landing outside the box are replaced by a uniform draw inside it.
    """
    rng = np.random.default_rng(rng)
    theta = np.asarray(theta, dtype=np.float64)
    out = np.empty_like(theta)
    for i in range(theta.size):
        lam = rng.random()
        cand = lam * (dyn_lo[i] + dyn_hi[i]) - theta[i]
        if dyn_lo[i] <= cand <= dyn_hi[i]:
            out[i] = cand
        else:
            out[i] = dyn_lo[i] + rng.random() * (dyn_hi[i] - dyn_lo[i])
    return out


def run_ga(cost_fn, specs, config=None, seed=0):
    """Evolve a population and return the best member ever evaluated.

    One seeded stream drives every draw; fitness evaluations never consume
    from it, so results are reproducible regardless of the thread cap.
    """
    config = config or GAConfig()
    rng = np.random.default_rng(seed)
    pop = init_population(specs, config.population, rng)
    n_evals = evaluate_fitness(pop, cost_fn)
    reinitialized = False

    best = min(pop.members, key=lambda m: m.cost)
    best = Chromosome(best.theta.copy(), best.cost, best.fitness)
    history = [best.cost]

    n_mut = int(round(config.mutate_fraction * config.population))
    n_children = config.population - 1 - n_mut

    for gen in range(1, config.generations + 1):
        try:
            pairs = select_parents(pop, rng, (n_children + 1) // 2)
        except AllInfeasible:
            if reinitialized:
                raise
            reinitialized = True
            pop = init_population(specs, config.population, rng)
            n_evals += evaluate_fitness(pop, cost_fn)
            pairs = select_parents(pop, rng, (n_children + 1) // 2)

        order = sorted(range(len(pop.members)), key=lambda i: pop.members[i].fitness)
        elite = pop.members[order[-1]]
        elite = Chromosome(elite.theta.copy(), elite.cost, elite.fitness)

        children = []
        for i, j in pairs:
            ck, cl = crossover(pop.members[i], pop.members[j], rng)
            children.extend([ck, cl])
        children = children[:n_children]

        mutated = [Chromosome(gol_mutate(pop.members[i].theta, pop.dyn_lo,
                                         pop.dyn_hi, rng))
                   for i in order[:n_mut]]

        pop = Population([elite] + children + mutated, generation=gen)
        n_evals += evaluate_fitness(pop, cost_fn)

        gen_best = min(pop.members, key=lambda m: m.cost)
        if gen_best.cost < best.cost:
            best = Chromosome(gen_best.theta.copy(), gen_best.cost, gen_best.fitness)
        history.append(best.cost)

    if not np.isfinite(best.cost):
        raise AllInfeasible("the search never found a feasible member")
    return GAResult(best, history, n_evals, reinitialized, pop)
