"""
Small networks with hand-checkable equilibria, shared across the test modules.

All of them use a capacity unit of 1 veh/h so that flows and capacities share a
scale.
"""

import numpy as np
import pytest

from src.model.network import DemandTable
from src.model.scenario import ObjectiveOptions, Scenario
from src.parsing import parse_network
from src.problem import RestorationProblem

HEADER = "<NUMBER OF ZONES> {zones}\n<CAPACITY UNIT> 1.0\n<END OF METADATA>\n"

# Two parallel links 1->2 with identical costs.
TWO_LINKS = HEADER.format(zones=2) + "1 2 1.0 1.0\n1 2 1.0 1.0\n"

# 1 -> 2 -> 3, no way back.
CHAIN = HEADER.format(zones=3) + "1 2 1.0 1.0\n2 3 1.0 1.0\n"

# 1 <-> 2 <-> 3; zone 1 is low income, 2 average, 3 high.
EQUITY_TOY = (
    HEADER.format(zones=3)
    + "1 2 1.0 1.0\n2 1 1.0 1.0\n2 3 1.0 1.0\n3 2 1.0 1.0\n"
)

# Two routes 1 -> 2 -> 4 and 1 -> 3 -> 4, plus the reverse links.
DIAMOND = (
    HEADER.format(zones=4)
    + "1 2 1.0 1.0\n1 3 1.0 1.0\n2 4 1.0 1.0\n3 4 1.0 1.0\n"
    + "2 1 1.0 1.0\n3 1 1.0 1.0\n4 2 1.0 1.0\n4 3 1.0 1.0\n"
)


def demand(num_zones: int, entries: dict) -> DemandTable:
    matrix = np.zeros((num_zones, num_zones))
    for (r, s), q in entries.items():
        matrix[r - 1, s - 1] = q
    return DemandTable(matrix)


@pytest.fixture
def two_links():
    return parse_network(TWO_LINKS, allow_parallel=True)


@pytest.fixture
def chain():
    return parse_network(CHAIN)


@pytest.fixture
def equity_toy():
    net = parse_network(EQUITY_TOY)
    sc = Scenario(
        damaged={1: 0.5},
        incomes={1: 0.6, 2: 1.0, 3: 1.5},
        budget=0.5,
        mu=0.0,
    )
    return net, sc


@pytest.fixture
def diamond():
    net = parse_network(DIAMOND)
    dem = demand(4, {(1, 4): 1.0, (4, 1): 1.0})
    sc = Scenario(
        damaged={1: 0.5, 2: 0.5, 3: 0.5, 4: 0.5},
        incomes={1: 0.6, 2: 1.0, 3: 1.5, 4: 1.0},
        budget=1.0,
        mu=0.5,
    )
    return net, dem, sc


@pytest.fixture
def problem(diamond):
    net, dem, sc = diamond
    return RestorationProblem(net, dem, sc)


@pytest.fixture
def one_sided_problem(diamond):
    net, dem, sc = diamond
    return RestorationProblem(net, dem, sc, ObjectiveOptions(penalty="one-sided"))
