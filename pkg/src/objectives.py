"""
Objective functions for restoration plans.

    D  recovery deficiency: how far restored total system travel time sits above
       the pre-disaster value, relative to it. Zero at full recovery.
    E  income inequity: a Gini coefficient over zones.
    R  the scalarized objective mu * D + (1 - mu) * E.
    H  R plus squared penalties for the budget and the per-link capacity bound.

D is computed either from two equilibrium solves (`deficiency_full`) or from
link flows frozen at a reference assignment (`deficiency_surrogate`), which is
what the annealer minimizes.
"""

import numpy as np
from scipy.optimize import bisect

from src.errors import ObjectiveError
from src.model.network import EPS_CAP, Network
from src.model.results import ObjectiveBreakdown, RestorationPlan
from src.model.scenario import EquityMode, ObjectiveOptions, PenaltyMode, Scenario

__all__ = [
    "EquityMode",
    "HamiltonianModel",
    "ObjectiveOptions",
    "PenaltyMode",
    "deficiency_full",
    "deficiency_surrogate",
    "equity_literal",
    "equity_quadratic",
    "equity_responsive",
    "gini",
    "hamiltonian",
    "resilience",
]

# An unrestored closed link keeps a capacity floor of x / ratio. The ratio is at
# least this multiple of the link's pre-disaster volume/capacity ratio.
CLOSED_RATIO_MARGIN = 2.0

# Doublings tried when bracketing the calibrated closed-link ratio.
MAX_RATIO_DOUBLINGS = 60


def deficiency_full(t0_total: float, t1_total: float) -> float:
    """
    (T1 - T0) / T0 clamped at 0, where T0 is the pre-disaster and T1 the restored
    total system travel time.
    """
    if not t0_total > 0:
        raise ObjectiveError(f"pre-disaster travel time must be positive, got {t0_total}")
    return max(0.0, (t1_total - t0_total) / t0_total)


def deficiency_surrogate(flows, caps_pre, caps_post, t0s, alpha: float, beta: float) -> float:
    """
    Deficiency with link flows held fixed: the extra BPR delay caused by the
    post-restoration capacities, relative to the pre-disaster travel time of the
    same flows.

    Args:
        flows: Reference link flows.
        caps_pre: Pre-disaster capacities, in the units of `flows`.
        caps_post: Post-restoration capacities, in the units of `flows`.
        t0s: Free-flow times.
        alpha, beta: BPR parameters.
    """
    flows = np.asarray(flows, dtype=float)
    loaded = flows > 0
    x = flows[loaded]
    c_pre = np.asarray(caps_pre, dtype=float)[loaded]
    c_post = np.asarray(caps_post, dtype=float)[loaded]
    t0 = np.asarray(t0s, dtype=float)[loaded]

    denominator = float(np.sum(x * t0 * (1 + alpha * np.power(x / c_pre, beta))))
    if denominator == 0:
        raise ObjectiveError("no flow on any link")
    if np.any(c_post <= 0):
        raise ObjectiveError("loaded link without capacity")
    numerator = float(
        np.sum(alpha * x * t0 * (np.power(x / c_post, beta) - np.power(x / c_pre, beta)))
    )
    return numerator / denominator


def _gini_ranks(n: int) -> np.ndarray:
    # 2i - n - 1 for the i-th smallest of n values.
    return np.arange(1 - n, n, 2, dtype=float)


def _sorted_gini(values: np.ndarray, ranks: np.ndarray) -> float:
    ordered = np.sort(values)
    return float(ranks @ ordered / (values.size * ordered.sum()))


def gini(values, weights=None) -> float:
    """
    Gini coefficient, sum_r sum_s |v_r - v_s| / (2 N^2 mean(v)).

    Args:
        values: Non-negative values, one per entry.
        weights: Optional population weight per entry. Pairs are weighted by
            w_r * w_s and the mean is the weighted mean.

    Raises:
        ObjectiveError: Every value is zero.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0 or np.any(v < 0):
        raise ObjectiveError("gini needs a non-empty, non-negative vector")
    if weights is None:
        if not v.any():
            raise ObjectiveError("gini of an all-zero vector")
        return _sorted_gini(v, _gini_ranks(v.size))

    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ObjectiveError("gini needs non-negative weights")
    total_weight = w.sum()
    mean = float(np.dot(w, v) / total_weight)
    if mean == 0:
        raise ObjectiveError("gini of an all-zero vector")
    pairwise = np.abs(v[:, None] - v[None, :])
    return float(w @ pairwise @ w / (2 * total_weight**2 * mean))


def _incomes(sc: Scenario, net: Network | None = None) -> np.ndarray:
    zones = net.zones if net is not None else sorted(sc.incomes)
    return np.array([sc.incomes[zone] for zone in zones], dtype=float)


def equity_literal(sc: Scenario) -> float:
    """
    Gini over zone incomes. Independent of the restoration plan.
    """
    return gini(_incomes(sc))


def equity_quadratic(sc: Scenario, w_bar: float = 1.0) -> float:
    """
    Squared-difference analogue of the income Gini,
    sum_r sum_s (I_r - I_s)^2 / (2 N^2 w_bar mean(I)).
    """
    incomes = _incomes(sc)
    n = incomes.size
    squared = (incomes[:, None] - incomes[None, :]) ** 2
    return float(squared.sum() / (2 * n**2 * w_bar * incomes.mean()))


def _incidence(net: Network, sc: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """
    Endpoint zones of every damaged link (tails then heads, 0-based) and the
    recoverable capacity incident to each zone.
    """
    positions = net.link_positions(sc.damaged_ids)
    headroom = net.capacity[positions] - np.array([sc.residual(i) for i in sc.damaged_ids])
    ends = np.concatenate([net.tails[positions], net.heads[positions]])
    recoverable = np.bincount(ends, np.tile(headroom, 2), minlength=net.num_zones)
    return ends, recoverable


def _recovery_ratios(ends, recoverable, vector) -> np.ndarray:
    restored = np.bincount(ends, np.tile(vector, 2), minlength=recoverable.size)
    ratios = np.ones(recoverable.size)
    touched = recoverable > 0
    ratios[touched] = restored[touched] / recoverable[touched]
    return ratios


def _income_response(incomes, ends, recoverable) -> tuple[np.ndarray, np.ndarray]:
    """
    v = base + slope @ vector reproduces I_r * rho_r for every zone.
    """
    num_links = ends.size // 2
    incidence = np.zeros((recoverable.size, num_links))
    np.add.at(incidence, (ends, np.tile(np.arange(num_links), 2)), 1.0)
    touched = recoverable > 0
    base = np.where(touched, 0.0, incomes)
    slope = np.zeros_like(incidence)
    slope[touched] = (incomes[touched] / recoverable[touched])[:, None] * incidence[touched]
    return base, slope


def equity_responsive(plan: RestorationPlan, sc: Scenario, net: Network) -> float:
    """
    Gini over v_r = I_r * rho_r, where rho_r is the share of the recoverable
    capacity incident to zone r that the plan restores (1 for zones without
    damaged links). Returns 1 when every v_r is zero.
    """
    ends, recoverable = _incidence(net, sc)
    ratios = _recovery_ratios(ends, recoverable, plan.vector(sc.damaged_ids))
    return _responsive_from_ratios(_incomes(sc, net), ratios)


def _responsive_from_ratios(incomes: np.ndarray, ratios: np.ndarray) -> float:
    values = incomes * ratios
    if not values.any():
        return 1.0
    return gini(values)


def resilience(D: float, E: float, mu: float) -> float:
    if not 0 <= mu <= 1:
        raise ObjectiveError(f"mu out of range: {mu}")
    return mu * D + (1 - mu) * E


class HamiltonianModel:
    """
    Evaluates the penalty Hamiltonian for recovery vectors ordered like
    `sc.damaged_ids`, with link flows frozen at `flows`.

    Everything that does not depend on the plan is computed once here, so
    `energy` is cheap enough to call inside an annealing loop.

    Damaged links at or below EPS_CAP that still carry reference flow would have
    unbounded delay while closed. Their post-restoration capacity is instead
    floor + c_post * (1 - floor / C_a), with floor = x_a / `closed_ratio`, which
    equals the true capacity once the link is fully restored. `calibrate` picks
    the ratio. Without closed loaded links, `deficiency` equals
    `deficiency_surrogate`.
    """

    def __init__(
        self,
        net: Network,
        sc: Scenario,
        flows: np.ndarray,
        options: ObjectiveOptions = ObjectiveOptions(),
        closed_ratio: float | None = None,
    ):
        self.net = net
        self.sc = sc
        self.options = options
        self.ids = sc.damaged_ids
        self.positions = net.link_positions(self.ids)
        self.residual = np.array([sc.residual(i) for i in self.ids], dtype=float)
        self.headroom = net.capacity[self.positions] - self.residual

        self.flows = np.asarray(flows, dtype=float)
        self.caps_pre = net.capacity * net.capacity_unit
        self.incomes = _incomes(sc, net)
        ends, recoverable = _incidence(net, sc)
        self._value_base, self._value_slope = _income_response(self.incomes, ends, recoverable)
        self._ranks = _gini_ranks(self.incomes.size)

        alpha, beta = sc.bpr_alpha, sc.bpr_beta
        self._beta = beta
        loaded = self.flows > 0
        self._denominator = float(
            np.sum(
                self.flows[loaded]
                * net.t0[loaded]
                * (1 + alpha * np.power(self.flows[loaded] / self.caps_pre[loaded], beta))
            )
        )

        # Only loaded damaged links move the fixed-flow deficiency.
        damaged_loaded = loaded[self.positions]
        self._take = (
            slice(None) if damaged_loaded.all() else np.flatnonzero(damaged_loaded)
        )
        x = self.flows[self.positions][damaged_loaded]
        self._x = x
        self._c_pre = self.caps_pre[self.positions][damaged_loaded]
        self._residual_vph = self.residual[damaged_loaded] * net.capacity_unit
        self._wxb = alpha * net.t0[self.positions][damaged_loaded] * np.power(x, beta + 1)
        self._pre_term = float(self._wxb @ np.power(self._c_pre, -beta))

        self._closed = self.residual[damaged_loaded] <= EPS_CAP
        if self._closed.any():
            self.min_closed_ratio = CLOSED_RATIO_MARGIN * float(
                np.max(x[self._closed] / self._c_pre[self._closed])
            )
        else:
            self.min_closed_ratio = np.inf
        self._set_closed_ratio(
            self.min_closed_ratio if closed_ratio is None else closed_ratio
        )

        match options.equity:
            case EquityMode.LITERAL:
                self.equity_constant = equity_literal(sc)
            case EquityMode.QUADRATIC:
                self.equity_constant = equity_quadratic(sc, options.w_bar)
            case EquityMode.RESPONSIVE:
                self.equity_constant = None

    @property
    def has_closed_links(self) -> bool:
        return bool(self._closed.any())

    def _set_closed_ratio(self, ratio: float):
        if self.has_closed_links and ratio < self.min_closed_ratio:
            raise ObjectiveError(
                f"closed-link ratio {ratio:.4g} below the minimum {self.min_closed_ratio:.4g}"
            )
        floor = np.zeros_like(self._x)
        if np.isfinite(ratio):
            floor[self._closed] = self._x[self._closed] / ratio
        fade = 1 - floor / self._c_pre
        self._c_base = floor + self._residual_vph * fade
        self._c_slope = self.net.capacity_unit * fade
        self.closed_ratio = ratio

    def calibrate(self, target: float) -> float:
        """
        Choose the closed-link ratio so that restoring nothing scores a
        deficiency of `target`, normally the full-equilibrium deficiency of the
        damaged network. When even the smallest allowed ratio overshoots, that
        ratio is kept.

        Returns: The ratio in use.
        """
        if not self.has_closed_links:
            return self.closed_ratio
        zero = np.zeros(self.residual.size)

        def excess(ratio):
            self._set_closed_ratio(ratio)
            return self.deficiency(zero) - target

        low = self.min_closed_ratio
        if excess(low) >= 0:
            self._set_closed_ratio(low)
            return low
        high = low
        for _ in range(MAX_RATIO_DOUBLINGS):
            high *= 2
            if excess(high) >= 0:
                break
        else:
            return high
        ratio = bisect(excess, low, high)
        self._set_closed_ratio(ratio)
        return ratio

    def _post_capacity(self, vector: np.ndarray) -> np.ndarray:
        return self._c_base + self._c_slope * vector[self._take]

    def deficiency(self, vector: np.ndarray) -> float:
        """
        Fixed-flow deficiency over the whole network, restricted to the terms a
        recovery vector can change.
        """
        if self._denominator == 0:
            raise ObjectiveError("no flow on any link")
        c_post = self._post_capacity(vector)
        if c_post.size and c_post.min() <= 0:
            raise ObjectiveError("loaded link without capacity")
        post_term = float(self._wxb @ np.power(c_post, -self._beta))
        return (post_term - self._pre_term) / self._denominator

    def deficiency_derivatives(self, vector: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        First and second derivative of `deficiency` with respect to each link's
        recovery. Links without reference flow have zero derivatives.
        """
        beta = self._beta
        first = np.zeros(self.residual.size)
        second = np.zeros(self.residual.size)
        c_post = self._post_capacity(vector)
        scaled = self._wxb * np.power(c_post, -beta) / self._denominator
        first[self._take] = -beta * scaled * self._c_slope / c_post
        second[self._take] = beta * (beta + 1) * scaled * self._c_slope**2 / c_post**2
        return first, second

    def equity(self, vector: np.ndarray) -> float:
        if self.equity_constant is not None:
            return self.equity_constant
        values = self._value_base + self._value_slope @ vector
        if not values.any():
            return 1.0
        return _sorted_gini(values, self._ranks)

    def budget_penalty(self, cost: float) -> float:
        excess = cost - self.sc.budget
        if self.options.penalty is PenaltyMode.ONE_SIDED:
            excess = max(0.0, excess)
        return self.sc.lambda1 * excess**2

    def capacity_penalty(self, vector: np.ndarray) -> float:
        overshoot = vector - self.headroom
        if not overshoot.size or overshoot.max() <= 0:
            return 0.0
        overshoot = np.maximum(overshoot, 0.0)
        return float(self.sc.lambda2 * (overshoot @ overshoot))

    def _terms(self, vector: np.ndarray, D: float | None):
        if D is None:
            D = self.deficiency(vector)
        E = self.equity(vector)
        R = resilience(D, E, self.sc.mu)
        return D, E, R, self.budget_penalty(float(vector.sum())), self.capacity_penalty(vector)

    def breakdown(self, vector, D: float | None = None) -> ObjectiveBreakdown:
        """
        Evaluate every term for one recovery vector.

        Args:
            vector: C_a^1 per damaged link, ordered like `sc.damaged_ids`.
            D: Use this deficiency instead of the fixed-flow one (full UE scoring).
        """
        vector = np.asarray(vector, dtype=float)
        if vector.shape != self.residual.shape:
            raise ObjectiveError(
                f"expected {self.residual.size} recoveries, got {vector.shape}"
            )
        D, E, R, budget_penalty, capacity_penalty = self._terms(vector, D)
        return ObjectiveBreakdown(
            D=D,
            E=E,
            R=R,
            mu=self.sc.mu,
            budget_penalty=budget_penalty,
            capacity_penalty=capacity_penalty,
            H=R + budget_penalty + capacity_penalty,
        )

    def energy(self, vector: np.ndarray, D: float | None = None) -> float:
        """
        H alone, without building a breakdown. `vector` must be a float array of
        the right length.
        """
        _, _, R, budget_penalty, capacity_penalty = self._terms(vector, D)
        return R + budget_penalty + capacity_penalty


def hamiltonian(
    plan: RestorationPlan,
    sc: Scenario,
    net: Network,
    flows: np.ndarray,
    options: ObjectiveOptions = ObjectiveOptions(),
) -> ObjectiveBreakdown:
    """
    Penalty Hamiltonian of a plan with link flows frozen at `flows`.

    Raises:
        ObjectiveError: The plan does not cover exactly the damaged links.
    """
    if set(plan.recovery) != set(sc.damaged):
        raise ObjectiveError("plan/scenario link-set mismatch")
    model = HamiltonianModel(net, sc, flows, options)
    return model.breakdown(plan.vector(model.ids))
