"""
Damage scenarios and income classes.
"""

from dataclasses import dataclass, field, replace
from enum import Enum


class IncomeClass(Enum):
    LOW = 0.6
    AVERAGE = 1.0
    HIGH = 1.5

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class IncomeLevels:
    """
    Normalized income attached to each class. Defaults follow the 60% / 150% of
    the city average split.
    """

    low: float = IncomeClass.LOW.value
    average: float = IncomeClass.AVERAGE.value
    high: float = IncomeClass.HIGH.value

    def value(self, income_class: IncomeClass) -> float:
        return getattr(self, income_class.label)

    def classify(self, income: float) -> IncomeClass:
        """
        Map a normalized income to the class with the nearest level. Exact midpoints
        go to the lower class.
        """
        best = None
        for income_class in IncomeClass:
            distance = abs(income - self.value(income_class))
            if best is None or distance < best[0]:
                best = (distance, income_class)
        return best[1]

    def parse(self, token) -> float:
        """
        Accept either a class name ("low", "average", "high") or a number.
        """
        if isinstance(token, str):
            try:
                return self.value(IncomeClass[token.strip().upper()])
            except KeyError:
                raise ValueError(f"unknown income class {token!r}") from None
        return float(token)


class EquityMode(Enum):
    LITERAL = "literal"
    QUADRATIC = "quadratic"
    RESPONSIVE = "responsive"


class PenaltyMode(Enum):
    EQUALITY = "equality"
    ONE_SIDED = "one-sided"


@dataclass(frozen=True)
class ObjectiveOptions:
    """
    Which equity term enters the objective and how the budget is penalized.
    `w_bar` normalizes the quadratic equity term.
    """

    equity: EquityMode = EquityMode.RESPONSIVE
    penalty: PenaltyMode = PenaltyMode.EQUALITY
    w_bar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "equity", EquityMode(self.equity))
        object.__setattr__(self, "penalty", PenaltyMode(self.penalty))
        if not self.w_bar > 0:
            raise ValueError("w_bar must be positive")


@dataclass(frozen=True)
class Scenario:
    """
    A damage state plus the decision-maker's parameters.

    `damaged` maps link id to residual capacity C_a^0 and `incomes` maps zone id
    to normalized income I_r. Invariants are checked by `scenario_errors`
    rather than on construction so that `validate` can report all of them.
    """

    damaged: dict[int, float]
    incomes: dict[int, float]
    budget: float
    mu: float = 0.2
    bpr_alpha: float = 0.15
    bpr_beta: float = 4.0
    lambda1: float = 1e3
    lambda2: float = 1e3
    income_levels: IncomeLevels = field(default_factory=IncomeLevels)

    @property
    def damaged_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.damaged))

    def residual(self, link_id: int) -> float:
        return self.damaged[link_id]

    def with_budget(self, budget: float) -> "Scenario":
        return replace(self, budget=float(budget))

    def with_mu(self, mu: float) -> "Scenario":
        return replace(self, mu=float(mu))


def classify_links_by_income(net, sc: Scenario) -> dict[int, IncomeClass]:
    """
    Assign each damaged link the income class of its lower-income endpoint.

    Args:
        net: The network.
        sc: The scenario; incomes must cover both endpoints of every damaged link.

    Returns: A map from damaged link id to IncomeClass.
    """
    classes = {}
    for link_id in sc.damaged_ids:
        link = net.link(link_id)
        income = min(sc.incomes[link.tail], sc.incomes[link.head])
        classes[link_id] = sc.income_levels.classify(income)
    return classes
