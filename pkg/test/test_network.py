"""
Unit tests for network, trips and scenario input handling.
"""

import logging

from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np
import pytest

from conftest import CHAIN, DIAMOND, TWO_LINKS, demand
from src.errors import DemandFormatError, NetworkFormatError, ScenarioError, ValidationError
from src.model.network import Link, Network
from src.model.scenario import (
    EquityMode,
    IncomeClass,
    IncomeLevels,
    PenaltyMode,
    Scenario,
    classify_links_by_income,
)
from src.objectives import equity_literal
from src import parsing
from src import sioux_falls
from src.validate import ensure_valid, validate


def test_parse_four_column_rows(two_links: Network):
    assert two_links.num_zones == 2
    assert two_links.num_links == 2
    assert two_links.capacity_unit == 1.0
    assert two_links.link(2) == Link(id=2, tail=1, head=2, t0=1.0, cap=1.0)


def test_parse_tntp_rows():
    text = (
        "<NUMBER OF NODES> 3\n<NUMBER OF LINKS> 2\n<END OF METADATA>\n"
        "~ init term cap length fftt b power speed toll type ;\n"
        "\t1\t2\t25.9\t6\t6\t0.15\t4\t0\t0\t1\t;\n"
        "\t2\t1\t23.4\t4\t4\t0.15\t4\t0\t0\t1\t;\n"
    )
    net = parsing.parse_network(text)
    assert net.num_zones == 3
    assert net.link(1).cap == pytest.approx(25.9)
    assert net.link(2).t0 == pytest.approx(4.0)
    assert net.capacity_unit == 1000.0


def test_parse_rejects_duplicate_link():
    with pytest.raises(NetworkFormatError) as e:
        parsing.parse_network(TWO_LINKS)
    assert e.value.line == 5
    assert "duplicate link 1->2" in str(e.value)


@pytest.mark.parametrize(
    "row, message",
    [
        ("1 2 0 1.0", "non-positive capacity"),
        ("1 2 1.0 -2", "non-positive free-flow time"),
        ("1 2 x 1.0", "malformed row"),
        ("1 2 1.0", "malformed row"),
    ],
)
def test_parse_reports_bad_rows(row, message):
    with pytest.raises(NetworkFormatError) as e:
        parsing.parse_network(f"2 1 1.0 1.0\n{row}\n")
    assert e.value.line == 2
    assert message in str(e.value)


def test_parse_checks_declared_link_count():
    with pytest.raises(NetworkFormatError, match="header declares 3 links"):
        parsing.parse_network("<NUMBER OF LINKS> 3\n<END OF METADATA>\n1 2 1 1\n")


def test_parse_empty_network():
    with pytest.raises(NetworkFormatError, match="no links"):
        parsing.parse_network("~ nothing here\n")


@st.composite
def networks(draw):
    n = draw(st.integers(min_value=2, max_value=6))
    pair = st.tuples(st.integers(1, n), st.integers(1, n)).filter(lambda p: p[0] != p[1])
    pairs = draw(st.lists(pair, min_size=1, max_size=12, unique=True))
    value = st.floats(min_value=1e-3, max_value=1e4, allow_nan=False, allow_infinity=False)
    links = tuple(
        Link(id=i + 1, tail=tail, head=head, t0=draw(value), cap=draw(value))
        for i, (tail, head) in enumerate(pairs)
    )
    unit = draw(st.sampled_from([1.0, 1000.0, 2.5]))
    return Network(zones=tuple(range(1, n + 1)), links=links, capacity_unit=unit)


@given(networks())
@settings(max_examples=50, deadline=None)
def test_network_round_trip(net: Network):
    parsed = parsing.parse_network(parsing.serialize_network(net))
    assert parsed == net
    assert parsed.capacity_unit == net.capacity_unit


def test_parse_trips():
    text = (
        "<NUMBER OF ZONES> 3\n<END OF METADATA>\n"
        "Origin 1\n 2 : 5.0; 3 : 1.5;\nOrigin 3\n 1 : 2;\n"
    )
    dem = parsing.parse_trips(text, 3)
    assert dem.q(1, 2) == 5.0
    assert dem.q(1, 3) == 1.5
    assert dem.q(3, 1) == 2.0
    assert dem.total == pytest.approx(8.5)
    assert list(dem.pairs()) == [(1, 2, 5.0), (1, 3, 1.5), (3, 1, 2.0)]


def test_trips_round_trip():
    dem = demand(3, {(1, 2): 5.0, (2, 3): 0.25, (3, 1): 7.0})
    parsed = parsing.parse_trips(parsing.serialize_trips(dem), 3)
    assert np.array_equal(parsed.matrix, dem.matrix)


@pytest.mark.parametrize(
    "body, message",
    [
        ("Origin 1\n 1 : 5;\n", "self-demand must be zero"),
        ("Origin 1\n 2 : -5;\n", "negative demand"),
        ("Origin 1\n 4 : 5;\n", "destination 4 out of range"),
        ("Origin 9\n", "origin 9 out of range"),
        (" 2 : 5;\n", "before any 'Origin' line"),
    ],
)
def test_trips_errors(body, message):
    with pytest.raises(DemandFormatError, match=message):
        parsing.parse_trips(body, 3)


def test_trips_zone_mismatch():
    with pytest.raises(DemandFormatError, match="network has 3"):
        parsing.parse_trips("<NUMBER OF ZONES> 4\n<END OF METADATA>\n", 3)


SCENARIO = """
budget = 1.0
mu = 0.5
damaged = [
    { link = 1, residual = 0.25 },
    { link = 3, max_recovery = 0.5 },
]

[incomes]
1 = "low"
2 = "average"
3 = 1.5
4 = "average"
"""


def test_load_scenario():
    net = parsing.parse_network(DIAMOND)
    sc = parsing.load_scenario(SCENARIO, net)
    assert sc.damaged == {1: 0.25, 3: 0.5}
    assert sc.incomes == {1: 0.6, 2: 1.0, 3: 1.5, 4: 1.0}
    assert sc.budget == 1.0
    assert sc.mu == 0.5
    assert sc.bpr_beta == 4.0
    assert sc.damaged_ids == (1, 3)


def test_load_scenario_collects_every_error():
    net = parsing.parse_network(DIAMOND)
    text = """
mu = 2.0
damaged = [{ link = 99, residual = 0.1 }, { link = 2, residual = -1.0 }]

[incomes]
1 = "low"
2 = "poor"
"""
    with pytest.raises(ScenarioError) as e:
        parsing.load_scenario(text, net)
    errors = e.value.errors
    assert "unknown link id 99" in errors
    assert "link 2: negative residual capacity" in errors
    assert "budget missing" in errors
    assert "mu out of range" in errors
    assert "income missing for zone 3" in errors
    assert any("unknown income class 'poor'" in error for error in errors)


def test_max_recovery_above_capacity_is_clamped(caplog):
    net = parsing.parse_network(DIAMOND)
    text = 'budget = 1.0\ndamaged = [{ link = 2, max_recovery = 3.0 }]\n[incomes]\n'
    text += "".join(f'{zone} = "average"\n' for zone in net.zones)
    with caplog.at_level(logging.WARNING):
        sc = parsing.load_scenario(text, net)
    assert sc.residual(2) == 0.0
    assert "exceeds capacity" in caplog.text


def test_objective_options_from_document():
    options = parsing.load_objective_options(
        '[equity]\nmode = "quadratic"\nw_bar = 2.0\n[penalty]\nmode = "one-sided"\n'
    )
    assert options.equity is EquityMode.QUADRATIC
    assert options.penalty is PenaltyMode.ONE_SIDED
    assert options.w_bar == 2.0
    assert parsing.load_objective_options("").equity is EquityMode.RESPONSIVE

    with pytest.raises(ScenarioError):
        parsing.load_objective_options('[equity]\nmode = "bogus"\n')


def test_income_classification():
    levels = IncomeLevels()
    assert levels.classify(0.6) is IncomeClass.LOW
    assert levels.classify(0.7) is IncomeClass.LOW
    assert levels.classify(1.25) is IncomeClass.AVERAGE
    assert levels.classify(2.0) is IncomeClass.HIGH


def test_links_take_the_poorer_endpoint(diamond):
    net, _, sc = diamond
    classes = classify_links_by_income(net, sc)
    assert classes == {
        1: IncomeClass.LOW,
        2: IncomeClass.LOW,
        3: IncomeClass.AVERAGE,
        4: IncomeClass.AVERAGE,
    }


def test_validate_reports_unreachable_pairs():
    net = parsing.parse_network(CHAIN)
    sc = Scenario(damaged={}, incomes={1: 1.0, 2: 1.0, 3: 1.0}, budget=0.0)
    dem = demand(3, {(1, 3): 1.0, (3, 1): 1.0})
    assert validate(net, dem, sc) == ["OD (3,1) unreachable"]
    with pytest.raises(ValidationError):
        ensure_valid(net, dem, sc)


def test_validate_drops_closed_links(diamond):
    net, dem, sc = diamond
    assert validate(net, dem, sc) == []
    closed = Scenario(
        damaged={1: 0.0, 2: 0.0}, incomes=sc.incomes, budget=1.0, mu=sc.mu
    )
    assert validate(net, dem, closed) == ["OD (1,4) unreachable"]


def test_builtin_sioux_falls():
    net = sioux_falls.builtin_sioux_falls()
    assert net.num_zones == 24
    assert net.num_links == 76
    assert net.capacity.sum() == pytest.approx(sioux_falls.TOTAL_CAPACITY)
    assert net.link(1).tail == 1 and net.link(1).head == 2


def test_default_scenario():
    net = sioux_falls.builtin_sioux_falls()
    sc = sioux_falls.default_scenario(net)
    assert len(sc.damaged) == 25
    assert sc.budget == 75.0
    assert sc.mu == 0.2
    assert sc.residual(1) == pytest.approx(6.02 - 6.01)
    # Link 10 lists more recoverable capacity than it has.
    assert sc.residual(10) == 0.0
    assert equity_literal(sc) == pytest.approx(1015 / 5496)


def test_bundled_trips_match_synthetic_demand():
    net = sioux_falls.builtin_sioux_falls()
    dem = parsing.parse_trips(sioux_falls.TRIPS_FILE.read_text(), net.num_zones)
    assert np.array_equal(dem.matrix, sioux_falls.synthetic_demand(net).matrix)
    assert dem.q(1, 2) == 150.0
    assert dem.q(12, 1) == 0.0
    assert dem.total == pytest.approx(61500.0)


def test_default_inputs_are_valid():
    net = sioux_falls.builtin_sioux_falls()
    sc = sioux_falls.default_scenario(net)
    assert validate(net, sioux_falls.synthetic_demand(net), sc) == []
