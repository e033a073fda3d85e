"""
User-equilibrium traffic assignment.

Link-based Frank-Wolfe over BPR link costs. Each iteration loads every OD pair
all-or-nothing onto its shortest path at the current travel times and moves the
flows toward that loading by an exact line search on the Beckmann objective.
Path flows are never materialized.

Capacities come in as a capacity vector in network capacity units (C_a for
intact links, C_a^0 + C_a^1 for damaged ones). Links at or below EPS_CAP are
absent for routing and report an infinite travel time.
"""

from dataclasses import dataclass
import heapq
import logging

import numpy as np
import pandas as pd
from scipy.optimize import bisect

from src.errors import AssignmentError, UnreachableDemandError
from src.model.network import EPS_CAP, DemandTable, Network
from src.model.results import AssignmentResult, RestorationPlan
from src.model.scenario import Scenario

logger = logging.getLogger(__name__)

BPR_ALPHA = 0.15
BPR_BETA = 4.0


@dataclass(frozen=True)
class UEParams:
    max_iterations: int = 500
    gap_tolerance: float = 1e-4
    line_search_tolerance: float = 1e-8

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.gap_tolerance > 0 or not self.line_search_tolerance > 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class ShortestPathTree:
    """
    Shortest paths from one origin. `distances` and `predecessors` are indexed by
    0-based zone; `predecessors` holds the 0-based index of the last link on the
    path, or -1 for the origin and unreachable zones.
    """

    origin: int
    distances: np.ndarray
    predecessors: np.ndarray

    def reachable(self, zone: int) -> bool:
        return bool(np.isfinite(self.distances[zone - 1]))

    def path(self, net: Network, zone: int) -> list[int]:
        """
        Link ids from the origin to `zone`, in travel order.
        """
        links = []
        v = zone - 1
        while self.predecessors[v] >= 0:
            links.append(int(self.predecessors[v]) + 1)
            v = int(net.tails[self.predecessors[v]])
        return links[::-1]


def bpr_time(t0, x, c, alpha: float = BPR_ALPHA, beta: float = BPR_BETA):
    """
    BPR travel time t0 * (1 + alpha * (x / c) ** beta).

    Args:
        t0: Free-flow time, minutes.
        x: Link flow, in the same units as `c`.
        c: Link capacity.
        alpha, beta: BPR parameters.
    """
    if np.any(np.asarray(c) <= EPS_CAP):
        raise AssignmentError(f"capacity at or below {EPS_CAP}")
    return t0 * (1 + alpha * np.power(np.divide(x, c), beta))


def bpr_integral(t0, x, c, alpha: float = BPR_ALPHA, beta: float = BPR_BETA):
    """
    Integral of the BPR time from 0 to x.
    """
    if np.any(np.asarray(c) <= EPS_CAP):
        raise AssignmentError(f"capacity at or below {EPS_CAP}")
    return t0 * x + alpha * t0 * x * np.power(np.divide(x, c), beta) / (beta + 1)


def capacity_vector(
    net: Network, sc: Scenario, plan: RestorationPlan | None = None
) -> np.ndarray:
    """
    Effective capacity per link in capacity units: C_a for intact links and
    C_a^0 + C_a^1 for damaged ones. Without a plan, damaged links sit at their
    residual capacity.
    """
    caps = net.capacity.copy()
    for link_id in sc.damaged_ids:
        recovery = plan.recovery.get(link_id, 0.0) if plan is not None else 0.0
        caps[link_id - 1] = sc.residual(link_id) + recovery
    return caps


def shortest_path_tree(net: Network, times: np.ndarray, origin: int) -> ShortestPathTree:
    """
    Dijkstra from `origin`. Links with a non-finite time are skipped. When several
    links reach a zone at exactly the same distance the lowest link id wins.
    """
    dist = np.full(net.num_zones, np.inf)
    pred = np.full(net.num_zones, -1, dtype=int)
    done = np.zeros(net.num_zones, dtype=bool)
    dist[origin - 1] = 0.0
    heap = [(0.0, origin - 1)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for link in net.out_links[u]:
            t = times[link]
            if not np.isfinite(t):
                continue
            v = int(net.heads[link])
            candidate = d + t
            if candidate < dist[v]:
                dist[v] = candidate
                pred[v] = link
                heapq.heappush(heap, (candidate, v))
            elif candidate == dist[v] and link < pred[v]:
                pred[v] = link
    return ShortestPathTree(origin=origin, distances=dist, predecessors=pred)


def all_or_nothing(net: Network, times: np.ndarray, dem: DemandTable) -> np.ndarray:
    """
    Load every OD demand entirely on its current shortest path.

    Origins are processed in increasing order and, within an origin, zones are
    unloaded in decreasing distance so the summation order is fixed.

    Raises:
        UnreachableDemandError: A positive-demand pair has no path.
    """
    flows = np.zeros(net.num_links)
    for r in range(net.num_zones):
        row = dem.matrix[r]
        if not row.any():
            continue
        tree = shortest_path_tree(net, times, r + 1)
        for s in np.nonzero(row)[0]:
            if not np.isfinite(tree.distances[s]):
                raise UnreachableDemandError(r + 1, int(s) + 1)

        load = row.copy()
        order = np.argsort(-tree.distances, kind="stable")
        for v in order:
            link = tree.predecessors[v]
            if link < 0 or load[v] == 0:
                continue
            flows[link] += load[v]
            load[net.tails[link]] += load[v]
    return flows


def _link_times(t0, flows, caps_vph, active, alpha, beta) -> np.ndarray:
    times = np.full(len(t0), np.inf)
    times[active] = t0[active] * (
        1 + alpha * np.power(flows[active] / caps_vph[active], beta)
    )
    return times


def _tstt(flows: np.ndarray, times: np.ndarray) -> float:
    finite = np.isfinite(times)
    return float(np.dot(flows[finite], times[finite]))


def beckmann_objective(
    net: Network,
    flows: np.ndarray,
    caps: np.ndarray,
    alpha: float = BPR_ALPHA,
    beta: float = BPR_BETA,
) -> float:
    """
    Sum over routable links of the BPR integral at the given flows.
    """
    active = caps > EPS_CAP
    c = caps[active] * net.capacity_unit
    return float(np.sum(bpr_integral(net.t0[active], flows[active], c, alpha, beta)))


def solve_ue(
    net: Network,
    dem: DemandTable,
    caps: np.ndarray,
    params: UEParams = UEParams(),
    alpha: float = BPR_ALPHA,
    beta: float = BPR_BETA,
) -> AssignmentResult:
    """
    Solve the user equilibrium by Frank-Wolfe.

    Args:
        net: The network.
        dem: OD demand in veh/h.
        caps: Capacity vector in capacity units, one entry per link.
        params: Iteration limits and tolerances.
        alpha, beta: BPR parameters.

    Returns: The equilibrium. Hitting max_iterations is reported through
        `converged=False`, never raised.

    Raises:
        UnreachableDemandError: A positive-demand pair has no path once links at
            or below EPS_CAP are removed.
    """
    caps = np.asarray(caps, dtype=float)
    if caps.shape != (net.num_links,):
        raise AssignmentError(f"expected {net.num_links} capacities, got {caps.shape}")
    active = caps > EPS_CAP
    caps_vph = caps * net.capacity_unit
    t0 = net.t0

    if dem.total == 0:
        flows = np.zeros(net.num_links)
        times = _link_times(t0, flows, caps_vph, active, alpha, beta)
        return AssignmentResult(
            flows=flows,
            times=times,
            tstt=0.0,
            relative_gap=0.0,
            iterations=0,
            converged=True,
        )

    def link_times(x):
        return _link_times(t0, x, caps_vph, active, alpha, beta)

    x = all_or_nothing(net, link_times(np.zeros(net.num_links)), dem)
    trace = []
    gap = np.inf
    for iteration in range(1, params.max_iterations + 1):
        times = link_times(x)
        y = all_or_nothing(net, times, dem)
        tstt = _tstt(x, times)
        gap = (tstt - _tstt(y, times)) / tstt
        trace.append(beckmann_objective(net, x, caps, alpha, beta))
        logger.debug("FW iteration %d: gap %.3e, objective %.6g", iteration, gap, trace[-1])
        if gap <= params.gap_tolerance or iteration == params.max_iterations:
            break

        direction = y - x

        def slope(step):
            times_at_step = link_times(x + step * direction)
            return float(np.dot(direction[active], times_at_step[active]))

        if slope(1.0) <= 0:
            step = 1.0
        elif slope(0.0) >= 0:
            step = 0.0
        else:
            step = bisect(slope, 0.0, 1.0, xtol=params.line_search_tolerance)
        x = np.maximum(x + step * direction, 0.0)

    converged = bool(gap <= params.gap_tolerance)
    if not converged:
        logger.warning(
            "UE stopped after %d iterations with relative gap %.3e", iteration, gap
        )
    return AssignmentResult(
        flows=x,
        times=times,
        tstt=_tstt(x, times),
        relative_gap=float(gap),
        iterations=iteration,
        converged=converged,
        objective_trace=tuple(trace),
    )


def total_travel_time(result: AssignmentResult) -> float:
    return _tstt(result.flows, result.times)


def conservation_residual(net: Network, dem: DemandTable, flows: np.ndarray) -> float:
    """
    Largest node imbalance |inflow + originating - outflow - terminating|.
    """
    inflow = np.bincount(net.heads, weights=flows, minlength=net.num_zones)
    outflow = np.bincount(net.tails, weights=flows, minlength=net.num_zones)
    originating = dem.matrix.sum(axis=1)
    terminating = dem.matrix.sum(axis=0)
    return float(np.max(np.abs(inflow + originating - outflow - terminating)))


def flows_frame(net: Network, result: AssignmentResult) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "link_id": [link.id for link in net.links],
            "flow": result.flows,
            "time": result.times,
        }
    )
