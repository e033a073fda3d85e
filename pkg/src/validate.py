"""
Whole-input validation. Collects every violation instead of stopping at the first.
"""

import networkx as nx

from src.errors import ValidationError
from src.model.network import EPS_CAP, DemandTable, Network
from src.model.scenario import Scenario
from src.parsing import scenario_errors


def routing_graph(net: Network, sc: Scenario) -> nx.DiGraph:
    """
    The damaged, unrestored network as a graph: links whose residual capacity is
    at or below EPS_CAP are left out.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(net.zones)
    for link in net.links:
        cap = sc.damaged.get(link.id, link.cap)
        if cap > EPS_CAP:
            graph.add_edge(link.tail, link.head)
    return graph


def validate(net: Network, dem: DemandTable, sc: Scenario) -> list[str]:
    """
    Check a (network, demand, scenario) triple.

    Returns: Every violation found, or an empty list when the inputs are usable
        by every solver.
    """
    errors = scenario_errors(net, sc)
    if dem.num_zones != net.num_zones:
        errors.append(f"demand covers {dem.num_zones} zones, network has {net.num_zones}")
        return errors

    graph = routing_graph(net, sc)
    reach = {}
    for r, s, _ in dem.pairs():
        if r not in reach:
            reach[r] = nx.descendants(graph, r)
        if s not in reach[r]:
            errors.append(f"OD ({r},{s}) unreachable")
    return errors


def ensure_valid(net: Network, dem: DemandTable, sc: Scenario):
    errors = validate(net, dem, sc)
    if errors:
        raise ValidationError(errors)
