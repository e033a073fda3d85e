"""
Minimizers of the penalty Hamiltonian over continuous recovery vectors:
simulated annealing, a greedy marginal-gain baseline and an exhaustive grid
oracle for small instances.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
import itertools
import logging
import math
import time

import numpy as np
import pandas as pd
import psutil

from src.errors import InstanceTooLargeError
from src.model.results import Solution
from src.problem import RestorationProblem

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["restart", "step", "temperature", "current_H", "best_H"]

# Largest number of grid points brute_force will enumerate.
MAX_GRID_POINTS = 10**7

# Random plans sampled to set the default initial temperature.
TEMPERATURE_SAMPLES = 100


@dataclass(frozen=True)
class AnnealConfig:
    """
    Annealing schedule and move parameters.

    `initial_temperature` defaults to the spread of H over random budget-spending
    plans, `steps_per_temperature` to 50 per damaged link and `min_temperature`
    to 1e-6 of the initial temperature.
    """

    initial_temperature: float | None = None
    cooling_factor: float = 0.95
    steps_per_temperature: int | None = None
    min_temperature: float | None = None
    move_scale: float = 0.25
    rng_seed: int = 0
    restarts: int = 3
    energy: str = "surrogate"  # or "full"
    transfer_probability: float = 0.5
    workers: int | None = None  # restart processes; None for one per physical core

    def __post_init__(self):
        if self.initial_temperature is not None and not self.initial_temperature > 0:
            raise ValueError("initial_temperature must be positive")
        if self.min_temperature is not None and not self.min_temperature > 0:
            raise ValueError("min_temperature must be positive")
        if not 0 < self.cooling_factor < 1:
            raise ValueError("cooling_factor must be in (0, 1)")
        if self.steps_per_temperature is not None and self.steps_per_temperature < 1:
            raise ValueError("steps_per_temperature must be at least 1")
        if not self.move_scale > 0:
            raise ValueError("move_scale must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.energy not in ("surrogate", "full"):
            raise ValueError(f"unknown energy {self.energy!r}")
        if not 0 <= self.transfer_probability <= 1:
            raise ValueError("transfer_probability must be in [0, 1]")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be at least 1")


def initial_temperature(problem: RestorationProblem, cfg: AnnealConfig) -> float:
    if cfg.initial_temperature is not None:
        return cfg.initial_temperature
    rng = np.random.default_rng([cfg.rng_seed, 0])
    energies = [
        problem.energy(problem.random_vector(rng, fill=True), cfg.energy)
        for _ in range(TEMPERATURE_SAMPLES)
    ]
    spread = float(np.std(energies))
    return spread if spread > 0 else 1.0


def propose(
    vector: np.ndarray,
    headroom: np.ndarray,
    rng: np.random.Generator,
    scale: float,
    transfer_probability: float,
) -> np.ndarray:
    """
    One annealing move. A transfer shifts recovery between two links and keeps
    the total; a perturbation moves a single link by a Gaussian step. Both stay
    inside [0, headroom].

    Args:
        vector: Current recovery vector.
        headroom: Per-link upper bounds.
        rng: Random source.
        scale: Step size as a fraction of the link headroom.
        transfer_probability: Chance of trying a transfer first.
    """
    out = vector.copy()
    if vector.size >= 2 and rng.random() < transfer_probability:
        sources = np.flatnonzero(vector > 0)
        targets = np.flatnonzero(vector < headroom)
        if sources.size and targets.size:
            i = int(sources[rng.integers(sources.size)])
            targets = targets[targets != i]
            if targets.size:
                j = int(targets[rng.integers(targets.size)])
                amount = abs(rng.normal(0.0, scale * headroom[j]))
                amount = min(amount, vector[i], headroom[j] - vector[j])
                out[i] -= amount
                out[j] += amount
                return out
    i = int(rng.integers(vector.size))
    out[i] = np.clip(vector[i] + rng.normal(0.0, scale * headroom[i]), 0.0, headroom[i])
    return out


def _anneal_once(problem, cfg, t_start, t_min, steps, restart):
    rng = np.random.default_rng([cfg.rng_seed, restart + 1])
    current = problem.random_vector(rng, fill=True)
    current_h = problem.energy(current, cfg.energy)
    best, best_h = current, current_h
    evaluations = 1
    trace = []

    temperature = t_start
    step = 0
    while temperature > t_min:
        # Moves shrink as the system cools.
        scale = cfg.move_scale * max(math.sqrt(temperature / t_start), 1e-3)
        for _ in range(steps):
            candidate = propose(
                current, problem.headroom, rng, scale, cfg.transfer_probability
            )
            candidate_h = problem.energy(candidate, cfg.energy)
            evaluations += 1
            delta = candidate_h - current_h
            if delta <= 0 or rng.random() < math.exp(-delta / temperature):
                current, current_h = candidate, candidate_h
                if current_h < best_h:
                    best, best_h = current, current_h
            step += 1
        trace.append((restart, step, temperature, current_h, best_h))
        temperature *= cfg.cooling_factor
    return best, best_h, evaluations, trace


def restart_workers(cfg: AnnealConfig) -> int:
    if cfg.workers is not None:
        return min(cfg.workers, cfg.restarts)
    return max(1, min(cfg.restarts, psutil.cpu_count(logical=False) or 1))


def run_sa(
    problem: RestorationProblem, cfg: AnnealConfig = AnnealConfig()
) -> tuple[Solution, pd.DataFrame]:
    """
    Simulated annealing on the penalty Hamiltonian.

    Restarts run in worker processes, each drawing its own random stream from
    (seed, restart), so the result does not depend on scheduling or on the
    number of workers. The best restart wins, ties going to the lower restart
    index. The winning plan is repaired to the budget, rescored and, in
    surrogate mode, also scored with a full equilibrium solve.

    Returns: The Solution and one trace row per temperature level. `best_H` is
        the best energy seen so far across all restarts.
    """
    start = time.perf_counter()
    if problem.size == 0:
        solution = problem.solution(
            np.zeros(0), "sa", time.perf_counter() - start, 1, energy=cfg.energy
        )
        return solution, pd.DataFrame([], columns=TRACE_COLUMNS)

    t_start = initial_temperature(problem, cfg)
    t_min = cfg.min_temperature if cfg.min_temperature is not None else 1e-6 * t_start
    steps = cfg.steps_per_temperature or 50 * problem.size
    workers = restart_workers(cfg)
    logger.info(
        "SA: %d links, T %.3g -> %.3g, %d steps per level, %d restarts on %d workers",
        problem.size,
        t_start,
        t_min,
        steps,
        cfg.restarts,
        workers,
    )

    anneal = partial(_anneal_once, problem, cfg, t_start, t_min, steps)
    if workers == 1:
        outcomes = [anneal(restart) for restart in range(cfg.restarts)]
    else:
        problem.prepare()
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(anneal, range(cfg.restarts)))

    results = []
    evaluations = TEMPERATURE_SAMPLES if cfg.initial_temperature is None else 0
    rows = []
    for restart, (best, best_h, count, trace) in enumerate(outcomes):
        logger.debug("SA restart %d: best H %.6g", restart, best_h)
        results.append((best_h, restart, best))
        evaluations += count
        rows.extend(trace)

    best_h, winner, best = min(results, key=lambda r: (r[0], r[1]))
    trace = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    trace["best_H"] = trace["best_H"].cummin()

    solution = problem.solution(
        best,
        solver_name="sa",
        wall_time_s=time.perf_counter() - start,
        evaluations=evaluations,
        energy=cfg.energy,
    )
    logger.info("SA: restart %d won with H %.6g", winner, best_h)
    return solution, trace


def greedy_marginal(
    problem: RestorationProblem, step: float = 1.0, energy: str = "surrogate"
) -> Solution:
    """
    Start from no restoration and repeatedly give `step` capacity (or whatever
    budget and headroom remain) to the link whose H drops the most. Stops when
    the budget is spent or no move lowers H.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    start = time.perf_counter()
    vector = np.zeros(problem.size)
    current_h = problem.energy(vector, energy)
    evaluations = 1
    while True:
        remaining = problem.budget - vector.sum()
        if remaining <= 1e-12:
            break
        best = None
        for i in range(problem.size):
            amount = min(step, remaining, problem.headroom[i] - vector[i])
            if amount <= 0:
                continue
            candidate = vector.copy()
            candidate[i] += amount
            h = problem.energy(candidate, energy)
            evaluations += 1
            if h < current_h and (best is None or h < best[0]):
                best = (h, candidate)
        if best is None:
            break
        current_h, vector = best
    return problem.solution(
        vector,
        solver_name="greedy",
        wall_time_s=time.perf_counter() - start,
        evaluations=evaluations,
        energy=energy,
    )


def brute_force(
    problem: RestorationProblem, grid: int = 6, energy: str = "surrogate"
) -> Solution:
    """
    Enumerate every recovery vector on the grid {0, h/(g-1), ..., h} per link and
    return the budget-feasible point with the lowest H (first in enumeration
    order on ties).

    Raises:
        InstanceTooLargeError: More than MAX_GRID_POINTS points.
    """
    if grid < 2:
        raise ValueError("grid needs at least two levels")
    if grid**problem.size > MAX_GRID_POINTS:
        raise InstanceTooLargeError(
            f"{grid}^{problem.size} grid points exceed the limit of {MAX_GRID_POINTS}"
        )
    start = time.perf_counter()
    levels = [np.linspace(0.0, h, grid) for h in problem.headroom]
    best = None
    evaluations = 0
    for point in itertools.product(*levels):
        vector = np.array(point, dtype=float)
        if vector.sum() > problem.budget:
            continue
        h = problem.energy(vector, energy)
        evaluations += 1
        if best is None or h < best[0]:
            best = (h, vector)
    return problem.solution(
        best[1],
        solver_name="oracle",
        wall_time_s=time.perf_counter() - start,
        evaluations=evaluations,
        energy=energy,
    )
