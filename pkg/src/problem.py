"""
Shared solver context for one restoration instance.

A RestorationProblem fixes the damaged link order, the per-link recovery bounds
and the two reference equilibria (intact network for T0, damaged unrestored
network for the fixed-flow deficiency), and turns recovery vectors into scored
Solutions.
"""

from functools import cached_property
import logging

import numpy as np

from src.assignment import UEParams, capacity_vector, solve_ue
from src.errors import AssignmentError
from src.model.network import EPS_CAP, DemandTable, Network
from src.model.results import (
    AssignmentResult,
    ObjectiveBreakdown,
    RestorationPlan,
    Solution,
)
from src.model.scenario import ObjectiveOptions, PenaltyMode, Scenario
from src.objectives import HamiltonianModel, deficiency_full

logger = logging.getLogger(__name__)

# Slack allowed on the bounds and on both penalties of a feasible plan.
FEASIBILITY_TOLERANCE = 1e-6


def enforce_budget(vector, budget: float, headroom=None) -> np.ndarray:
    """
    Scale a recovery vector down to the budget, then clamp each entry to its
    bound.

    Args:
        vector: Recovery per damaged link.
        budget: B, the spending limit.
        headroom: Optional per-link upper bound C_a - C_a^0.

    Returns: A new vector whose sum is at most `budget`.
    """
    vector = np.maximum(np.asarray(vector, dtype=float), 0.0)
    total = vector.sum()
    if total > budget:
        vector = vector * (budget / total) if budget > 0 else np.zeros_like(vector)
        # Rounding in the scale can leave the sum a few ulps above the budget.
        while vector.sum() > budget:
            vector = np.nextafter(vector, 0.0)
    if headroom is not None:
        vector = np.minimum(vector, headroom)
    return vector


def fill_to_budget(vector, budget: float, headroom) -> np.ndarray:
    """
    Scale a recovery vector up until it spends the budget or every link is fully
    restored. Entries that hit their bound stay there while the rest keep growing.
    """
    headroom = np.asarray(headroom, dtype=float)
    vector = np.clip(np.asarray(vector, dtype=float), 0.0, headroom)
    target = min(budget, float(headroom.sum()))
    for _ in range(len(vector) + 1):
        free = vector < headroom
        spent = vector.sum()
        growable = vector[free].sum()
        if spent >= target or growable <= 0:
            break
        scale = 1 + (target - spent) / growable
        vector[free] = np.minimum(vector[free] * scale, headroom[free])
    if vector.sum() < target and np.any(vector < headroom):
        # Scaling cannot grow zero entries; top up in proportion to remaining room.
        room = headroom - vector
        vector = vector + room * min(1.0, (target - vector.sum()) / room.sum())
    return enforce_budget(vector, budget, headroom)


class RestorationProblem:
    def __init__(
        self,
        net: Network,
        dem: DemandTable,
        sc: Scenario,
        options: ObjectiveOptions = ObjectiveOptions(),
        ue: UEParams = UEParams(),
    ):
        self.net = net
        self.dem = dem
        self.sc = sc
        self.options = options
        self.ue = ue
        self.ids = sc.damaged_ids
        self.residual = np.array([sc.residual(i) for i in self.ids], dtype=float)
        self.positions = net.link_positions(self.ids)
        self.headroom = net.capacity[self.positions] - self.residual
        self._full_cache = {}

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def budget(self) -> float:
        return self.sc.budget

    @cached_property
    def baseline(self) -> AssignmentResult:
        """Pre-disaster equilibrium; its TSTT is T0."""
        return self._solve(self.net.capacity)

    @cached_property
    def reference(self) -> AssignmentResult:
        """Equilibrium of the damaged, unrestored network."""
        return self._solve(capacity_vector(self.net, self.sc))

    @cached_property
    def reference_flows(self) -> np.ndarray:
        """
        Damaged-network equilibrium flows, except that closed damaged links carry
        their pre-disaster flow: at the damaged equilibrium they are empty and
        would never move the fixed-flow deficiency.
        """
        flows = self.reference.flows.copy()
        closed = self.positions[self.residual <= EPS_CAP]
        flows[closed] = self.baseline.flows[closed]
        return flows

    @cached_property
    def hamiltonian_model(self) -> HamiltonianModel:
        model = HamiltonianModel(self.net, self.sc, self.reference_flows, self.options)
        if model.has_closed_links:
            target = deficiency_full(self.baseline.tstt, self.reference.tstt)
            ratio = model.calibrate(target)
            logger.debug("closed-link ratio %.4g for unrestored D %.4g", ratio, target)
        return model

    def energy(self, vector: np.ndarray, energy: str = "surrogate") -> float:
        if energy == "full":
            return self.hamiltonian_model.energy(vector, D=self.full_deficiency(vector))
        return self.hamiltonian_model.energy(vector)

    def prepare(self) -> "RestorationProblem":
        """
        Solve both reference equilibria now, so that copies sent to worker
        processes carry them.
        """
        self.baseline
        self.hamiltonian_model
        return self

    def _solve(self, caps) -> AssignmentResult:
        return solve_ue(
            self.net, self.dem, caps, self.ue, self.sc.bpr_alpha, self.sc.bpr_beta
        )

    def plan(self, vector) -> RestorationPlan:
        return RestorationPlan.from_vector(self.ids, vector)

    def clamp(self, vector) -> np.ndarray:
        return np.clip(np.asarray(vector, dtype=float), 0.0, self.headroom)

    def repair(self, vector) -> np.ndarray:
        return enforce_budget(vector, self.budget, self.headroom)

    def random_vector(self, rng: np.random.Generator, fill: bool = False) -> np.ndarray:
        """
        Uniform recovery on [0, headroom] per link, repaired to the budget. With
        `fill`, the draw is then scaled up to spend the whole budget.
        """
        vector = self.repair(rng.uniform(0.0, 1.0, self.size) * self.headroom)
        if fill:
            vector = fill_to_budget(vector, self.budget, self.headroom)
        return vector

    def capacities(self, vector) -> np.ndarray:
        return capacity_vector(self.net, self.sc, self.plan(vector))

    def full_deficiency(self, vector) -> float:
        """
        D from a fresh equilibrium solve at the plan's capacities.

        Returns: inf when the equilibrium cannot be computed.
        """
        vector = np.asarray(vector, dtype=float)
        key = vector.tobytes()
        if key not in self._full_cache:
            try:
                result = self._solve(self.capacities(vector))
                self._full_cache[key] = deficiency_full(self.baseline.tstt, result.tstt)
            except AssignmentError as e:
                logger.warning("equilibrium failed for plan: %s", e)
                self._full_cache[key] = np.inf
        return self._full_cache[key]

    def surrogate_breakdown(self, vector) -> ObjectiveBreakdown:
        return self.hamiltonian_model.breakdown(vector)

    def full_breakdown(self, vector) -> ObjectiveBreakdown:
        return self.hamiltonian_model.breakdown(vector, D=self.full_deficiency(vector))

    def breakdown(self, vector, energy: str = "surrogate") -> ObjectiveBreakdown:
        if energy == "full":
            return self.full_breakdown(vector)
        return self.surrogate_breakdown(vector)

    def is_feasible(self, vector, breakdown: ObjectiveBreakdown) -> bool:
        vector = np.asarray(vector, dtype=float)
        return bool(
            vector.sum() <= self.budget + FEASIBILITY_TOLERANCE
            and np.all(vector >= 0)
            and np.all(vector <= self.headroom + FEASIBILITY_TOLERANCE)
            and breakdown.budget_penalty < FEASIBILITY_TOLERANCE
            and breakdown.capacity_penalty < FEASIBILITY_TOLERANCE
        )

    def solution(
        self,
        vector,
        solver_name: str,
        wall_time_s: float,
        evaluations: int,
        converged: bool = True,
        energy: str = "surrogate",
        rescore: bool = True,
    ) -> Solution:
        """
        Package a final recovery vector. The vector is repaired to the budget and
        bounds (and, under the equality penalty, grown to spend the budget), then
        scored from scratch with `energy`; `rescore` adds a full equilibrium
        evaluation when the solver minimized the fixed-flow energy.

        A solution is feasible only when both penalties are below
        FEASIBILITY_TOLERANCE, so under the equality penalty a budget larger than
        the total headroom can never be met.
        """
        vector = self.repair(vector)
        if self.options.penalty is PenaltyMode.EQUALITY:
            vector = fill_to_budget(vector, self.budget, self.headroom)
        plan = self.plan(vector)
        vector = plan.vector(self.ids)
        breakdown = self.breakdown(vector, energy)
        rescored = None
        if rescore and energy != "full":
            rescored = self.full_breakdown(vector)
        return Solution(
            plan=plan,
            breakdown=breakdown,
            solver_name=solver_name,
            wall_time_s=wall_time_s,
            evaluations=evaluations,
            converged=converged,
            feasible=self.is_feasible(vector, breakdown),
            rescored=rescored,
        )
