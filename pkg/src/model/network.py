"""
Road network and travel demand dataclasses.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from src.errors import DemandFormatError, NetworkFormatError

# veh/h represented by one capacity unit of a network file. The bundled Sioux
# Falls capacities are given in 10^3 veh/h.
CAPACITY_UNIT = 1000.0

# Links at or below this capacity (in capacity units) are absent for routing.
EPS_CAP = 1e-3


@dataclass(eq=True, frozen=True)
class Link:
    id: int
    tail: int
    head: int
    t0: float  # free-flow travel time, minutes
    cap: float  # pre-disaster capacity, capacity units


@dataclass(frozen=True)
class Network:
    """
    Directed road network. Zones are numbered 1..N and links 1..|A| in row order.
    """

    zones: tuple[int, ...]
    links: tuple[Link, ...]
    allow_parallel: bool = field(default=False, compare=False)
    capacity_unit: float = field(default=CAPACITY_UNIT, compare=False)

    def __post_init__(self):
        if len(self.links) == 0:
            raise NetworkFormatError("no links")
        if tuple(self.zones) != tuple(range(1, len(self.zones) + 1)):
            raise NetworkFormatError("zones must be numbered 1..N")
        if self.capacity_unit <= 0:
            raise NetworkFormatError("capacity unit must be positive")

        seen = set()
        for i, link in enumerate(self.links):
            if link.id != i + 1:
                raise NetworkFormatError(f"link ids must be dense, got {link.id} at {i + 1}")
            for zone in (link.tail, link.head):
                if not 1 <= zone <= len(self.zones):
                    raise NetworkFormatError(f"link {link.id}: unknown zone {zone}")
            if link.tail == link.head:
                raise NetworkFormatError(f"link {link.id}: self loop at zone {link.tail}")
            if not link.t0 > 0:
                raise NetworkFormatError(f"link {link.id}: non-positive free-flow time")
            if not link.cap > 0:
                raise NetworkFormatError(f"link {link.id}: non-positive capacity")
            pair = (link.tail, link.head)
            if pair in seen and not self.allow_parallel:
                raise NetworkFormatError(f"link {link.id}: duplicate link {pair}")
            seen.add(pair)

    @property
    def num_zones(self) -> int:
        return len(self.zones)

    @property
    def num_links(self) -> int:
        return len(self.links)

    def link(self, link_id: int) -> Link:
        return self.links[link_id - 1]

    def has_link(self, link_id: int) -> bool:
        return 1 <= link_id <= len(self.links)

    @cached_property
    def t0(self) -> np.ndarray:
        return np.array([link.t0 for link in self.links], dtype=float)

    @cached_property
    def capacity(self) -> np.ndarray:
        return np.array([link.cap for link in self.links], dtype=float)

    @cached_property
    def tails(self) -> np.ndarray:
        """0-based tail zone index per link."""
        return np.array([link.tail - 1 for link in self.links], dtype=int)

    @cached_property
    def heads(self) -> np.ndarray:
        """0-based head zone index per link."""
        return np.array([link.head - 1 for link in self.links], dtype=int)

    @cached_property
    def out_links(self) -> tuple[tuple[int, ...], ...]:
        """
        Adjacency index: for each 0-based zone, the 0-based indices of its outgoing
        links in increasing link id order.
        """
        out = [[] for _ in self.zones]
        for i, link in enumerate(self.links):
            out[link.tail - 1].append(i)
        return tuple(tuple(links) for links in out)

    def link_positions(self, link_ids) -> np.ndarray:
        return np.array([link_id - 1 for link_id in link_ids], dtype=int)


@dataclass(eq=False, frozen=True)
class DemandTable:
    """
    Dense origin x destination demand in veh/h. `matrix[r - 1, s - 1]` is q_rs.
    """

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DemandFormatError("demand must be a square matrix")
        if np.any(matrix < 0):
            raise DemandFormatError("negative demand")
        if np.any(np.diag(matrix) != 0):
            raise DemandFormatError("self-demand must be zero")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def zeros(cls, num_zones: int) -> "DemandTable":
        return cls(np.zeros((num_zones, num_zones)))

    @property
    def num_zones(self) -> int:
        return self.matrix.shape[0]

    @property
    def total(self) -> float:
        return float(self.matrix.sum())

    def q(self, origin: int, destination: int) -> float:
        return float(self.matrix[origin - 1, destination - 1])

    def pairs(self):
        """
        Yield (origin, destination, demand) for every positive entry, row-major.
        """
        for r, s in zip(*np.nonzero(self.matrix)):
            yield int(r) + 1, int(s) + 1, float(self.matrix[r, s])
