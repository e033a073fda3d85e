"""
Solver-facing result dataclasses: plans, assignments, objective breakdowns,
solutions and report rows.
"""

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class RestorationPlan:
    """
    Capacity recovery C_a^1 per damaged link. Restoration cost is uniform, so the
    cost of a plan is the total recovered capacity.
    """

    recovery: dict[int, float]

    def __post_init__(self):
        for link_id, amount in self.recovery.items():
            if amount < 0:
                raise ValueError(f"link {link_id}: negative recovery {amount}")

    @property
    def cost(self) -> float:
        return float(sum(self.recovery.values()))

    @classmethod
    def from_vector(cls, link_ids, vector) -> "RestorationPlan":
        return cls({int(i): float(v) for i, v in zip(link_ids, vector)})

    @classmethod
    def zero(cls, link_ids) -> "RestorationPlan":
        return cls({int(i): 0.0 for i in link_ids})

    def vector(self, link_ids) -> np.ndarray:
        return np.array([self.recovery[i] for i in link_ids], dtype=float)


@dataclass(eq=False, frozen=True)
class AssignmentResult:
    flows: np.ndarray  # veh/h per link
    times: np.ndarray  # minutes per link, inf for links absent from routing
    tstt: float
    relative_gap: float
    iterations: int
    converged: bool
    objective_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class ObjectiveBreakdown:
    D: float
    E: float
    R: float
    mu: float
    budget_penalty: float = 0.0
    capacity_penalty: float = 0.0
    H: float = 0.0

    def to_record(self) -> dict:
        return asdict(self)


@dataclass(eq=False, frozen=True)
class Solution:
    """
    A solver answer. `breakdown` is the energy the solver minimized, recomputed
    from `plan`; `rescored` repeats the evaluation with a full user-equilibrium
    deficiency when available.

    `feasible` requires a plan inside the budget and link bounds whose budget
    and capacity penalties are both below 1e-6. Under the equality
    penalty the plan has been grown to spend the budget, so a budget beyond the
    total headroom is never feasible.
    """

    plan: RestorationPlan
    breakdown: ObjectiveBreakdown
    solver_name: str
    wall_time_s: float
    evaluations: int
    converged: bool
    feasible: bool
    rescored: ObjectiveBreakdown | None = None

    @property
    def reported(self) -> ObjectiveBreakdown:
        return self.rescored if self.rescored is not None else self.breakdown


@dataclass
class ReportRow:
    solver: str
    budget: float
    mu: float
    seed: int
    D: float = float("nan")
    E: float = float("nan")
    R: float = float("nan")
    H: float = float("nan")
    cost: float = float("nan")
    feasible: bool = False
    low: float = float("nan")
    average: float = float("nan")
    high: float = float("nan")
    wall_time_s: float = float("nan")
    error: str = ""

    def to_record(self, timing: bool = True) -> dict:
        record = asdict(self)
        if not timing:
            del record["wall_time_s"]
        return record
