"""
The bundled Sioux Falls dataset: 24 zones, 76 links, 25 default damaged links.
"""

from functools import cache
import pathlib

import numpy as np

from src.model.network import DemandTable, Network
from src.model.scenario import Scenario
from src.parsing import load_scenario, parse_network

DATA_DIR = pathlib.Path(__file__).parent.parent / "data"
NETWORK_FILE = DATA_DIR / "sioux_falls_net.tntp"
TRIPS_FILE = DATA_DIR / "sioux_falls_trips.tntp"
SCENARIO_FILE = DATA_DIR / "sioux_falls_scenario.toml"

# Sum of the 76 link capacities, 10^3 veh/h.
TOTAL_CAPACITY = 1320.98

# The default damage state closes every outgoing link of zone 13 and leaves zone
# 12 only a link into 13, so neither zone can originate trips.
ISOLATED_ZONES = (12, 13)


@cache
def builtin_sioux_falls() -> Network:
    return parse_network(NETWORK_FILE.read_text())


def default_scenario(net: Network | None = None) -> Scenario:
    """
    The default damage scenario: 25 damaged links with their maximum recovery
    capacities, budget 75, mu 0.2 and the default zone income map.
    """
    return load_scenario(SCENARIO_FILE.read_text(), net or builtin_sioux_falls())


def synthetic_demand(net: Network | None = None) -> DemandTable:
    """
    A symmetric demand table, q_rs = 50 * (1 + (r * s mod 5)) veh/h for r != s.
    Zones isolated by the default damage carry no trips. The bundled trips file
    holds the same table.
    """
    net = net or builtin_sioux_falls()
    zones = np.arange(1, net.num_zones + 1)
    matrix = 50.0 * (1 + np.outer(zones, zones) % 5)
    np.fill_diagonal(matrix, 0.0)
    for zone in ISOLATED_ZONES:
        if zone <= net.num_zones:
            matrix[zone - 1, :] = 0.0
            matrix[:, zone - 1] = 0.0
    return DemandTable(matrix)
