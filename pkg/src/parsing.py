"""
Readers and writers for network, trips and scenario files.

Network and trips files follow the TNTP conventions (`<KEY> value` metadata
lines terminated by `<END OF METADATA>`, `~` comments). `#` comments are also
accepted. Scenario files are TOML.
"""

import logging
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from src.errors import DemandFormatError, NetworkFormatError, ScenarioError
from src.model.network import CAPACITY_UNIT, DemandTable, Link, Network
from src.model.scenario import IncomeLevels, ObjectiveOptions, Scenario

logger = logging.getLogger(__name__)

METADATA = re.compile(r"<\s*([A-Z ]+?)\s*>\s*(.*)")
TRIPS_ENTRY = re.compile(r"(\d+)\s*:\s*([^;\s]+)\s*;?")

SCENARIO_DEFAULTS = {
    "mu": 0.2,
    "bpr_alpha": 0.15,
    "bpr_beta": 4.0,
    "lambda1": 1e3,
    "lambda2": 1e3,
}


def _strip(line: str) -> str:
    for marker in ("#", "~"):
        idx = line.find(marker)
        if idx >= 0:
            line = line[:idx]
    return line.strip()


def _read_metadata(lines: list[str]) -> tuple[dict[str, str], int]:
    """
    Pull the TNTP metadata block off the top of a file.

    Returns: The metadata keys/values and the index of the first body line.
    """
    metadata = {}
    for i, raw in enumerate(lines):
        line = _strip(raw)
        if not line:
            continue
        match = METADATA.fullmatch(line)
        if match is None:
            return metadata, i
        key, value = match.group(1).strip(), match.group(2).strip()
        if key == "END OF METADATA":
            return metadata, i + 1
        metadata[key] = value
    return metadata, len(lines)


def parse_network(
    text: str,
    allow_parallel: bool = False,
    capacity_unit: float | None = None,
) -> Network:
    """
    Parse a network file.

    Body rows are either `from to capacity free_flow_time` or the ten-column TNTP
    link row (`init term capacity length fftt b power speed toll type`). Link ids
    are assigned in row order.

    Args:
        text: The file contents.
        allow_parallel: Accept several links between the same ordered zone pair.
        capacity_unit: veh/h per capacity unit. Falls back to the `<CAPACITY UNIT>`
            metadata entry, then to CAPACITY_UNIT.
    """
    lines = text.splitlines()
    metadata, start = _read_metadata(lines)

    rows = []
    for lineno, raw in enumerate(lines[start:], start=start + 1):
        line = _strip(raw).rstrip(";").strip()
        if not line:
            continue
        fields = line.split()
        try:
            if len(fields) == 4:
                tail, head, cap, t0 = fields
            elif len(fields) >= 10:
                tail, head, cap, t0 = fields[0], fields[1], fields[2], fields[4]
            else:
                raise ValueError
            tail, head, cap, t0 = int(tail), int(head), float(cap), float(t0)
        except ValueError:
            raise NetworkFormatError(f"malformed row {line!r}", lineno) from None
        if not cap > 0:
            raise NetworkFormatError("non-positive capacity", lineno)
        if not t0 > 0:
            raise NetworkFormatError("non-positive free-flow time", lineno)
        if tail < 1 or head < 1:
            raise NetworkFormatError("zone ids start at 1", lineno)
        rows.append((lineno, tail, head, cap, t0))

    if not rows:
        raise NetworkFormatError("no links")

    if "NUMBER OF LINKS" in metadata and int(metadata["NUMBER OF LINKS"]) != len(rows):
        raise NetworkFormatError(
            f"header declares {metadata['NUMBER OF LINKS']} links, found {len(rows)}"
        )

    num_zones = max(max(row[1], row[2]) for row in rows)
    if "NUMBER OF NODES" in metadata:
        num_zones = max(num_zones, int(metadata["NUMBER OF NODES"]))
    if "NUMBER OF ZONES" in metadata:
        num_zones = max(num_zones, int(metadata["NUMBER OF ZONES"]))

    seen = {}
    for lineno, tail, head, _, _ in rows:
        if (tail, head) in seen and not allow_parallel:
            raise NetworkFormatError(
                f"duplicate link {tail}->{head} (first on line {seen[(tail, head)]})",
                lineno,
            )
        seen.setdefault((tail, head), lineno)

    if capacity_unit is None:
        capacity_unit = float(metadata.get("CAPACITY UNIT", CAPACITY_UNIT))

    links = tuple(
        Link(id=i + 1, tail=tail, head=head, t0=t0, cap=cap)
        for i, (_, tail, head, cap, t0) in enumerate(rows)
    )
    return Network(
        zones=tuple(range(1, num_zones + 1)),
        links=links,
        allow_parallel=allow_parallel,
        capacity_unit=capacity_unit,
    )


def serialize_network(net: Network) -> str:
    """
    Write a network in the four-column format read by `parse_network`.
    """
    out = [
        f"<NUMBER OF ZONES> {net.num_zones}",
        f"<NUMBER OF NODES> {net.num_zones}",
        f"<NUMBER OF LINKS> {net.num_links}",
        f"<CAPACITY UNIT> {net.capacity_unit!r}",
        "<END OF METADATA>",
        "",
        "~ init_node\tterm_node\tcapacity\tfree_flow_time",
    ]
    for link in net.links:
        out.append(f"{link.tail}\t{link.head}\t{link.cap!r}\t{link.t0!r}")
    return "\n".join(out) + "\n"


def parse_trips(text: str, num_zones: int) -> DemandTable:
    """
    Parse a TNTP trips file into a dense demand table. Pairs that are not listed
    have zero demand.

    Args:
        text: The file contents.
        num_zones: The zone count of the network the demand belongs to.
    """
    lines = text.splitlines()
    metadata, start = _read_metadata(lines)
    if "NUMBER OF ZONES" in metadata and int(metadata["NUMBER OF ZONES"]) != num_zones:
        raise DemandFormatError(
            f"trips declare {metadata['NUMBER OF ZONES']} zones, network has {num_zones}"
        )

    matrix = np.zeros((num_zones, num_zones))
    origin = None
    for lineno, raw in enumerate(lines[start:], start=start + 1):
        line = _strip(raw)
        if not line:
            continue
        if line.lower().startswith("origin"):
            try:
                origin = int(line.split()[1])
            except (IndexError, ValueError):
                raise DemandFormatError(f"malformed origin line {line!r}", lineno) from None
            if not 1 <= origin <= num_zones:
                raise DemandFormatError(f"origin {origin} out of range", lineno)
            continue

        if origin is None:
            raise DemandFormatError("demand entry before any 'Origin' line", lineno)
        entries = TRIPS_ENTRY.findall(line)
        if not entries or TRIPS_ENTRY.sub("", line).strip():
            raise DemandFormatError(f"malformed entry {line!r}", lineno)
        for dest, value in entries:
            dest = int(dest)
            try:
                value = float(value)
            except ValueError:
                raise DemandFormatError(f"malformed demand {value!r}", lineno) from None
            if not 1 <= dest <= num_zones:
                raise DemandFormatError(f"destination {dest} out of range", lineno)
            if value < 0:
                raise DemandFormatError("negative demand", lineno)
            if dest == origin and value != 0:
                raise DemandFormatError("self-demand must be zero", lineno)
            matrix[origin - 1, dest - 1] = value

    return DemandTable(matrix)


def serialize_trips(demand: DemandTable) -> str:
    out = [
        f"<NUMBER OF ZONES> {demand.num_zones}",
        f"<TOTAL OD FLOW> {demand.total!r}",
        "<END OF METADATA>",
        "",
    ]
    for r in range(1, demand.num_zones + 1):
        out.append(f"Origin {r}")
        entries = [
            f"{s} : {demand.q(r, s)!r};"
            for s in range(1, demand.num_zones + 1)
            if demand.q(r, s) > 0
        ]
        for i in range(0, len(entries), 5):
            out.append("    " + "    ".join(entries[i : i + 5]))
        out.append("")
    return "\n".join(out)


def scenario_errors(net: Network, sc: Scenario) -> list[str]:
    """
    Check every scenario invariant against a network.

    Returns: All violations, in a stable order. Empty when the scenario is valid.
    """
    errors = []
    for link_id in sorted(sc.damaged):
        residual = sc.damaged[link_id]
        if not net.has_link(link_id):
            errors.append(f"unknown link id {link_id}")
            continue
        if residual < 0:
            errors.append(f"link {link_id}: negative residual capacity")
        if residual > net.link(link_id).cap:
            errors.append(f"link {link_id}: residual capacity exceeds capacity")

    for zone in net.zones:
        if zone not in sc.incomes:
            errors.append(f"income missing for zone {zone}")
        elif not sc.incomes[zone] > 0:
            errors.append(f"zone {zone}: income must be positive")
    for zone in sorted(set(sc.incomes) - set(net.zones)):
        errors.append(f"income given for unknown zone {zone}")

    if sc.budget < 0:
        errors.append("budget must be non-negative")
    if not 0 <= sc.mu <= 1:
        errors.append("mu out of range")
    if sc.lambda1 < 0 or sc.lambda2 < 0:
        errors.append("penalty weights must be non-negative")
    if sc.bpr_alpha < 0 or sc.bpr_beta < 0:
        errors.append("BPR parameters must be non-negative")
    return errors


def load_scenario(text: str, net: Network) -> Scenario:
    """
    Load a TOML scenario document and validate it against a network.

    Recognized keys: `budget`, `mu`, `bpr.alpha`, `bpr.beta`, `penalty.lambda1`,
    `penalty.lambda2`, `damaged = [{link, residual | max_recovery}, ...]`,
    `incomes = {zone = class | value}` and the optional `income_levels` table.

    Raises:
        ScenarioError: With every violation found.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError([f"malformed scenario: {e}"]) from None

    errors = []
    try:
        levels = IncomeLevels(**doc.get("income_levels", {}))
    except TypeError:
        errors.append("income_levels accepts only low, average and high")
        levels = IncomeLevels()

    damaged = {}
    for row in doc.get("damaged", []):
        link_id = row.get("link")
        if not isinstance(link_id, int) or not net.has_link(link_id):
            errors.append(f"unknown link id {link_id}")
            continue
        if link_id in damaged:
            errors.append(f"link {link_id} listed twice")
            continue
        cap = net.link(link_id).cap
        if "residual" in row:
            damaged[link_id] = float(row["residual"])
        elif "max_recovery" in row:
            max_recovery = float(row["max_recovery"])
            if max_recovery > cap:
                logger.warning(
                    "link %d: max recovery %.2f exceeds capacity %.2f, clamping",
                    link_id,
                    max_recovery,
                    cap,
                )
            damaged[link_id] = max(cap - max_recovery, 0.0)
        else:
            errors.append(f"link {link_id}: needs 'residual' or 'max_recovery'")

    incomes = {}
    for zone, token in doc.get("incomes", {}).items():
        try:
            incomes[int(zone)] = levels.parse(token)
        except ValueError as e:
            errors.append(f"zone {zone}: {e}")

    if "budget" not in doc:
        errors.append("budget missing")

    sc = Scenario(
        damaged=damaged,
        incomes=incomes,
        budget=float(doc.get("budget", 0.0)),
        mu=float(doc.get("mu", SCENARIO_DEFAULTS["mu"])),
        bpr_alpha=float(doc.get("bpr", {}).get("alpha", SCENARIO_DEFAULTS["bpr_alpha"])),
        bpr_beta=float(doc.get("bpr", {}).get("beta", SCENARIO_DEFAULTS["bpr_beta"])),
        lambda1=float(doc.get("penalty", {}).get("lambda1", SCENARIO_DEFAULTS["lambda1"])),
        lambda2=float(doc.get("penalty", {}).get("lambda2", SCENARIO_DEFAULTS["lambda2"])),
        income_levels=levels,
    )
    errors.extend(scenario_errors(net, sc))
    if errors:
        raise ScenarioError(errors)
    return sc


def load_objective_options(text: str) -> ObjectiveOptions:
    """
    Read the optional `[equity]` table and `penalty.mode` of a scenario document.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError([f"malformed scenario: {e}"]) from None
    equity = doc.get("equity", {})
    try:
        return ObjectiveOptions(
            equity=equity.get("mode", "responsive"),
            penalty=doc.get("penalty", {}).get("mode", "equality"),
            w_bar=float(equity.get("w_bar", 1.0)),
        )
    except ValueError as e:
        raise ScenarioError([str(e)]) from None
