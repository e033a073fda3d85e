"""
Unit tests for the deficiency, equity and penalty terms.
"""

from hypothesis import given
from hypothesis import strategies as st
import numpy as np
import pytest

from src.assignment import capacity_vector, solve_ue
from src.errors import ObjectiveError
from src.model.results import RestorationPlan
from src.model.scenario import ObjectiveOptions, Scenario
from src import objectives
from src.problem import RestorationProblem


def test_gini_values():
    assert objectives.gini([1.0, 1.0, 1.0]) == pytest.approx(0.0)
    assert objectives.gini([0.0, 0.0, 1.0]) == pytest.approx(2 / 3)
    assert objectives.gini([1.0, 2.0, 3.0, 4.0]) == pytest.approx(0.25)


def test_gini_weights_match_repetition():
    weighted = objectives.gini([1.0, 3.0], weights=[2.0, 1.0])
    assert weighted == pytest.approx(objectives.gini([1.0, 1.0, 3.0]))


@pytest.mark.parametrize("values", [[], [0.0, 0.0], [1.0, -1.0]])
def test_gini_rejects_degenerate_input(values):
    with pytest.raises(ObjectiveError):
        objectives.gini(values)


positive = st.floats(min_value=0.01, max_value=100.0, allow_nan=False)


@given(st.lists(positive, min_size=2, max_size=12), st.floats(min_value=0.1, max_value=10.0))
def test_gini_is_scale_invariant(values, scale):
    assert objectives.gini(np.array(values) * scale) == pytest.approx(
        objectives.gini(values), abs=1e-9
    )


@given(st.lists(positive, min_size=2, max_size=12), st.randoms())
def test_gini_ignores_order(values, random):
    shuffled = list(values)
    random.shuffle(shuffled)
    assert objectives.gini(shuffled) == pytest.approx(objectives.gini(values), abs=1e-9)
    assert 0.0 <= objectives.gini(values) < 1.0


def test_deficiency_full():
    assert objectives.deficiency_full(100.0, 150.0) == pytest.approx(0.5)
    assert objectives.deficiency_full(100.0, 100.0) == 0.0
    assert objectives.deficiency_full(100.0, 90.0) == 0.0
    with pytest.raises(ObjectiveError):
        objectives.deficiency_full(0.0, 10.0)


def test_deficiency_surrogate():
    args = dict(flows=[1.0, 0.0], t0s=[1.0, 1.0], alpha=0.15, beta=4.0)
    assert objectives.deficiency_surrogate(
        caps_pre=[1.0, 1.0], caps_post=[1.0, 1.0], **args
    ) == pytest.approx(0.0)
    # Unloaded links do not count, even without capacity.
    assert objectives.deficiency_surrogate(
        caps_pre=[1.0, 1.0], caps_post=[0.5, 0.0], **args
    ) == pytest.approx(0.15 * 15 / 1.15)


def test_literal_and_quadratic_equity(equity_toy):
    _, sc = equity_toy
    assert objectives.equity_literal(sc) == pytest.approx(1.8 / 9.3)
    assert objectives.equity_quadratic(sc) == pytest.approx(2.44 / 18.6)
    assert objectives.equity_quadratic(sc, w_bar=2.0) == pytest.approx(1.22 / 18.6)


def responsive_toy(rho: float) -> float:
    return (3 - 1.2 * rho) / (3 * (1.6 * rho + 1.5))


@pytest.mark.parametrize("recovery", [0.0, 0.125, 0.25, 0.5])
def test_responsive_equity(equity_toy, recovery):
    net, sc = equity_toy
    plan = RestorationPlan({1: recovery})
    expected = responsive_toy(recovery / 0.5)
    assert objectives.equity_responsive(plan, sc, net) == pytest.approx(expected)


def test_responsive_equity_rewards_the_poorer_zone(equity_toy):
    net, sc = equity_toy
    values = [
        objectives.equity_responsive(RestorationPlan({1: r}), sc, net)
        for r in np.linspace(0.0, 0.5, 11)
    ]
    assert np.all(np.diff(values) < 0)


def test_responsive_equity_without_any_recovery(two_links):
    sc = Scenario(damaged={1: 0.2, 2: 0.2}, incomes={1: 0.6, 2: 1.5}, budget=1.0)
    plan = RestorationPlan.zero(sc.damaged_ids)
    assert objectives.equity_responsive(plan, sc, two_links) == 1.0


def test_resilience():
    assert objectives.resilience(0.5, 0.2, 0.25) == pytest.approx(0.275)
    assert objectives.resilience(0.5, 0.2, 1.0) == pytest.approx(0.5)
    assert objectives.resilience(0.5, 0.2, 0.0) == pytest.approx(0.2)
    with pytest.raises(ObjectiveError):
        objectives.resilience(0.5, 0.2, 1.5)


@pytest.fixture
def model(diamond):
    net, dem, sc = diamond
    flows = solve_ue(net, dem, capacity_vector(net, sc)).flows
    return objectives.HamiltonianModel(net, sc, flows)


def test_model_deficiency_matches_surrogate(diamond, model):
    net, _, sc = diamond
    for vector in ([0.0, 0.0, 0.0, 0.0], [0.5, 0.1, 0.2, 0.2], [0.5, 0.5, 0.5, 0.5]):
        plan = RestorationPlan.from_vector(sc.damaged_ids, vector)
        expected = objectives.deficiency_surrogate(
            model.flows,
            net.capacity * net.capacity_unit,
            capacity_vector(net, sc, plan) * net.capacity_unit,
            net.t0,
            sc.bpr_alpha,
            sc.bpr_beta,
        )
        assert model.deficiency(np.array(vector)) == pytest.approx(expected)


def test_full_restoration_removes_the_deficiency(model):
    assert model.deficiency(np.full(4, 0.5)) == pytest.approx(0.0, abs=1e-12)
    assert model.deficiency(np.zeros(4)) > 0


def test_deficiency_derivatives(model):
    point = np.array([0.1, 0.2, 0.3, 0.4])
    first, second = model.deficiency_derivatives(point)
    h = 1e-6
    for i in range(4):
        step = np.zeros(4)
        step[i] = h
        slope = (model.deficiency(point + step) - model.deficiency(point - step)) / (2 * h)
        assert first[i] == pytest.approx(slope, rel=1e-5)
        assert first[i] < 0 < second[i]


def test_breakdown_terms(diamond, model):
    _, _, sc = diamond
    vector = np.array([0.5, 0.5, 0.25, 0.0])
    b = model.breakdown(vector)
    assert b.R == pytest.approx(sc.mu * b.D + (1 - sc.mu) * b.E)
    assert b.budget_penalty == pytest.approx(sc.lambda1 * 0.25**2)
    assert b.capacity_penalty == 0.0
    assert b.H == pytest.approx(b.R + b.budget_penalty)
    assert model.energy(vector) == b.H


def test_equality_penalty_charges_underspending(diamond):
    net, dem, sc = diamond
    flows = solve_ue(net, dem, capacity_vector(net, sc)).flows
    equality = objectives.HamiltonianModel(net, sc, flows)
    one_sided = objectives.HamiltonianModel(
        net, sc, flows, ObjectiveOptions(penalty="one-sided")
    )
    under = np.array([0.25, 0.25, 0.0, 0.0])
    assert equality.breakdown(under).budget_penalty == pytest.approx(sc.lambda1 * 0.25)
    assert one_sided.breakdown(under).budget_penalty == 0.0
    over = np.array([0.5, 0.5, 0.5, 0.0])
    assert one_sided.breakdown(over).budget_penalty == pytest.approx(sc.lambda1 * 0.25)


def test_capacity_penalty(model, diamond):
    _, _, sc = diamond
    b = model.breakdown(np.array([0.75, 0.0, 0.0, 0.25]))
    assert b.capacity_penalty == pytest.approx(sc.lambda2 * 0.25**2)


def test_constant_equity_modes(diamond):
    net, dem, sc = diamond
    flows = solve_ue(net, dem, capacity_vector(net, sc)).flows
    literal = objectives.HamiltonianModel(net, sc, flows, ObjectiveOptions(equity="literal"))
    assert literal.equity(np.zeros(4)) == literal.equity(np.full(4, 0.5))
    assert literal.equity(np.zeros(4)) == pytest.approx(objectives.equity_literal(sc))


def test_mu_one_ignores_equity(diamond):
    net, dem, sc = diamond
    flows = solve_ue(net, dem, capacity_vector(net, sc)).flows
    model = objectives.HamiltonianModel(net, sc.with_mu(1.0), flows)
    b = model.breakdown(np.array([0.25, 0.25, 0.25, 0.25]))
    assert b.R == pytest.approx(b.D)


def test_hamiltonian_checks_the_link_set(diamond):
    net, dem, sc = diamond
    flows = solve_ue(net, dem, capacity_vector(net, sc)).flows
    with pytest.raises(ObjectiveError, match="link-set mismatch"):
        objectives.hamiltonian(RestorationPlan({1: 0.1}), sc, net, flows)
    plan = RestorationPlan.from_vector(sc.damaged_ids, [0.25, 0.25, 0.25, 0.25])
    b = objectives.hamiltonian(plan, sc, net, flows)
    assert b.budget_penalty == pytest.approx(0.0)


def test_breakdown_checks_vector_length(model):
    with pytest.raises(ObjectiveError):
        model.breakdown(np.zeros(3))


@given(st.lists(positive, min_size=2, max_size=12))
def test_unit_weights_match_the_unweighted_gini(values):
    assert objectives.gini(values, weights=np.ones(len(values))) == pytest.approx(
        objectives.gini(values), abs=1e-12
    )


@pytest.mark.parametrize(
    "vector", [[0.0, 0.0, 0.0, 0.0], [0.5, 0.1, 0.2, 0.2], [0.0, 0.5, 0.0, 0.25]]
)
def test_model_equity_matches_responsive_equity(diamond, model, vector):
    net, _, sc = diamond
    plan = RestorationPlan.from_vector(sc.damaged_ids, vector)
    assert model.equity(np.array(vector)) == pytest.approx(
        objectives.equity_responsive(plan, sc, net), abs=1e-12
    )


@pytest.fixture
def closed_problem(diamond):
    net, dem, sc = diamond
    closed = Scenario(damaged={1: 0.0}, incomes=sc.incomes, budget=1.0, mu=1.0)
    return RestorationProblem(net, dem, closed)


def test_closed_links_carry_their_intact_flow(closed_problem):
    assert closed_problem.reference.flows[0] == pytest.approx(0.0, abs=1e-9)
    assert closed_problem.reference_flows[0] == pytest.approx(
        closed_problem.baseline.flows[0]
    )
    assert closed_problem.reference_flows[0] > 0


def test_closed_link_deficiency_is_calibrated(closed_problem):
    model = closed_problem.hamiltonian_model
    zero = np.zeros(1)
    assert model.has_closed_links
    assert model.closed_ratio >= model.min_closed_ratio
    assert model.deficiency(zero) == pytest.approx(
        closed_problem.full_deficiency(zero), rel=1e-6
    )
    assert model.deficiency(closed_problem.headroom) == pytest.approx(0.0, abs=1e-12)


def test_reopening_a_closed_link_lowers_the_deficiency(closed_problem):
    model = closed_problem.hamiltonian_model
    values = [model.deficiency(np.array([r])) for r in np.linspace(0.0, 1.0, 11)]
    assert np.all(np.diff(values) < 0)
    first, second = model.deficiency_derivatives(np.array([0.5]))
    assert first[0] < 0 < second[0]


def test_closed_ratio_has_a_floor(closed_problem):
    model = closed_problem.hamiltonian_model
    with pytest.raises(ObjectiveError, match="closed-link ratio"):
        model._set_closed_ratio(model.min_closed_ratio / 2)


def test_open_links_skip_calibration(model):
    assert not model.has_closed_links
    assert model.calibrate(10.0) == np.inf
