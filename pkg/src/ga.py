"""
Genetic algorithm over restoration plans.

Individuals are recovery vectors ordered like the problem's damaged link ids.
Fitness is mu * D + (1 - mu) * E plus a linear over-budget penalty, with D from
a full equilibrium solve per individual unless the fixed-flow surrogate is
selected. Offspring come from tournament selection, single-point crossover with
budget repair, and a cost-preserving transfer mutation.
"""

from dataclasses import dataclass
import logging
import time

import numpy as np
import pandas as pd

from src.model.results import Solution
from src.objectives import resilience
from src.problem import RestorationProblem, enforce_budget

logger = logging.getLogger(__name__)

__all__ = [
    "GAConfig",
    "Individual",
    "crossover",
    "enforce_budget",
    "ga_fitness",
    "mutate",
    "run_ga",
    "tournament_select",
    "weighted_select",
]

TRACE_COLUMNS = ["generation", "best_fitness", "mean_fitness", "elapsed_s"]


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    mutation_rate: float = 0.1
    tournament_size: int = 3
    penalty_multiplier: float = 7000.0
    generations: int = 200
    elitism: bool = True
    rng_seed: int = 0
    fitness: str = "full"  # or "surrogate"
    selection: str = "tournament"  # or "weighted"
    time_limit_s: float | None = None

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must be in [0, 1]")
        if not 2 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must be in [2, population_size]")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if self.fitness not in ("full", "surrogate"):
            raise ValueError(f"unknown fitness mode {self.fitness!r}")
        if self.selection not in ("tournament", "weighted"):
            raise ValueError(f"unknown selection mode {self.selection!r}")


@dataclass(frozen=True)
class Individual:
    """
    A scored recovery vector. Operators build new Individuals rather than
    mutating genes in place, so a fitness always belongs to its genes.
    """

    genes: np.ndarray
    fitness: float
    feasible: bool


def ga_fitness(
    genes,
    problem: RestorationProblem,
    penalty_multiplier: float = 7000.0,
    mode: str = "full",
) -> float:
    """
    R_j = mu * D_j + (1 - mu) * E_j + rho_j, with rho_j = (cost - B) * multiplier
    when the individual is over budget and 0 otherwise.

    Returns: inf when the equilibrium for the individual cannot be computed.
    """
    genes = np.asarray(genes, dtype=float)
    if mode == "full":
        D = problem.full_deficiency(genes)
    else:
        D = problem.hamiltonian_model.deficiency(genes)
    if not np.isfinite(D):
        return np.inf
    E = problem.hamiltonian_model.equity(genes)
    excess = genes.sum() - problem.budget
    penalty = excess * penalty_multiplier if excess > 0 else 0.0
    return resilience(D, E, problem.sc.mu) + penalty


def tournament_select(
    population: list[Individual], tournament_size: int, rng: np.random.Generator
) -> Individual:
    """
    Draw `tournament_size` distinct members uniformly and return the fittest.
    Ties go to the lower population index.
    """
    entrants = np.sort(rng.choice(len(population), size=tournament_size, replace=False))
    winner = min(entrants, key=lambda i: population[i].fitness)
    return population[winner]


def weighted_select(population: list[Individual], rng: np.random.Generator) -> Individual:
    """
    Draw one member with probability inversely proportional to its fitness.
    """
    fitness = np.array([ind.fitness for ind in population])
    weights = np.where(np.isfinite(fitness), 1.0 / np.maximum(fitness, 1e-12), 0.0)
    if weights.sum() == 0:
        weights = np.ones_like(weights)
    return population[rng.choice(len(population), p=weights / weights.sum())]


def crossover(
    p1,
    p2,
    rng: np.random.Generator,
    budget: float | None = None,
    headroom=None,
    point: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Single-point crossover: c1 = p1[:p] + p2[p:] and c2 = p2[:p] + p1[p:] with p
    drawn from [1, len - 1].

    Args:
        p1, p2: Parent gene vectors of equal length (at least 2).
        rng: Random source for the cut point.
        budget: When given, both children are repaired to it.
        headroom: Per-gene upper bounds used by the repair.
        point: Fixed cut point instead of a random one.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ValueError("parents differ in length")
    if p1.size < 2:
        raise ValueError("crossover needs at least two genes")
    if point is None:
        point = int(rng.integers(1, p1.size))
    c1 = np.concatenate([p1[:point], p2[point:]])
    c2 = np.concatenate([p2[:point], p1[point:]])
    if budget is not None:
        c1 = enforce_budget(c1, budget, headroom)
        c2 = enforce_budget(c2, budget, headroom)
    return c1, c2


def mutate(
    genes,
    rate: float,
    rng: np.random.Generator,
    headroom=None,
    amount: float | None = None,
) -> np.ndarray:
    """
    With probability `rate`, move a uniform amount in [0, genes[i]] from a gene
    with positive recovery to a different gene with spare headroom, capped by that
    headroom. Total recovery is unchanged.

    Args:
        genes: Recovery vector.
        rate: Mutation probability.
        rng: Random source.
        headroom: Per-gene upper bounds; unbounded when omitted.
        amount: Fixed transfer size instead of a random one.

    Returns: A new gene vector.
    """
    genes = np.array(genes, dtype=float)
    if rng.random() >= rate:
        return genes
    bounds = np.full(genes.size, np.inf) if headroom is None else np.asarray(headroom)
    sources = np.flatnonzero(genes > 0)
    if sources.size == 0:
        return genes
    i = int(rng.choice(sources))
    targets = np.flatnonzero(bounds - genes > 0)
    targets = targets[targets != i]
    if targets.size == 0:
        return genes
    j = int(rng.choice(targets))

    if amount is None:
        amount = rng.uniform(0.0, genes[i])
    amount = min(amount, genes[i], bounds[j] - genes[j])
    genes[i] -= amount
    genes[j] += amount
    return genes


def run_ga(
    problem: RestorationProblem, cfg: GAConfig = GAConfig()
) -> tuple[Solution, pd.DataFrame]:
    """
    Evolve a population of restoration plans.

    Random streams are derived from (seed, generation) for selection and
    crossover and from (seed, generation, index) for each child's mutation, so
    a fixed seed reproduces the run exactly.

    Returns: The best plan ever seen and one trace row per generation
        (generation 0 is the initial population).
    """
    start = time.perf_counter()
    evaluations = 0

    def individual(genes) -> Individual:
        nonlocal evaluations
        evaluations += 1
        fitness = ga_fitness(genes, problem, cfg.penalty_multiplier, cfg.fitness)
        feasible = bool(genes.sum() <= problem.budget + 1e-6)
        return Individual(genes=genes, fitness=fitness, feasible=feasible)

    def select(population, rng) -> Individual:
        if cfg.selection == "weighted":
            return weighted_select(population, rng)
        return tournament_select(population, cfg.tournament_size, rng)

    logger.info(
        "GA: %d links, population %d, %d generations, %s fitness",
        problem.size,
        cfg.population_size,
        cfg.generations,
        cfg.fitness,
    )
    population = [
        individual(problem.random_vector(np.random.default_rng([cfg.rng_seed, 0, i])))
        for i in range(cfg.population_size)
    ]

    trace = []

    def record(generation):
        fitness = np.array([ind.fitness for ind in population])
        finite = fitness[np.isfinite(fitness)]
        trace.append(
            {
                "generation": generation,
                "best_fitness": float(fitness.min()),
                "mean_fitness": float(finite.mean()) if finite.size else np.inf,
                "elapsed_s": time.perf_counter() - start,
            }
        )

    def fittest(population) -> Individual:
        return min(population, key=lambda ind: ind.fitness)

    record(0)
    best = fittest(population)
    completed = True
    for generation in range(1, cfg.generations + 1):
        if cfg.time_limit_s is not None and time.perf_counter() - start > cfg.time_limit_s:
            logger.info("GA: time limit reached after %d generations", generation - 1)
            completed = False
            break

        rng = np.random.default_rng([cfg.rng_seed, generation])
        children = [fittest(population)] if cfg.elitism else []
        while len(children) < cfg.population_size:
            p1 = select(population, rng).genes
            p2 = select(population, rng).genes
            if problem.size >= 2:
                offspring = crossover(p1, p2, rng, problem.budget, problem.headroom)
            else:
                offspring = (p1.copy(), p2.copy())
            for genes in offspring:
                if len(children) == cfg.population_size:
                    break
                child_rng = np.random.default_rng([cfg.rng_seed, generation, len(children)])
                genes = mutate(genes, cfg.mutation_rate, child_rng, problem.headroom)
                children.append(individual(genes))

        population = children
        record(generation)
        candidate = fittest(population)
        if candidate.fitness < best.fitness:
            best = candidate
        logger.debug(
            "GA generation %d: best %.6g, mean %.6g",
            generation,
            trace[-1]["best_fitness"],
            trace[-1]["mean_fitness"],
        )

    wall_time = time.perf_counter() - start
    energy = "full" if cfg.fitness == "full" else "surrogate"
    solution = problem.solution(
        best.genes,
        solver_name="ga",
        wall_time_s=wall_time,
        evaluations=evaluations,
        converged=completed,
        energy=energy,
    )
    logger.info("GA: best fitness %.6g after %d evaluations", best.fitness, evaluations)
    return solution, pd.DataFrame(trace, columns=TRACE_COLUMNS)
