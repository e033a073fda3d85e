"""
Experiment harness: single solves, sweeps over (budget, mu, solver, seed),
income-group aggregation, solver comparison and report files.

Report files hold one row per cell in canonical sweep order. Wall-clock times
live in a `<report>.timing.csv` sidecar so the report itself is reproducible
byte for byte; `load_report` joins the two back together.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import itertools
import json
import logging
import pathlib

import numpy as np
import pandas as pd
import psutil

from src.anneal import AnnealConfig, brute_force, greedy_marginal, run_sa
from src.assignment import UEParams
from src.cqm.client import submit_cqm
from src.errors import InputError, RestorationError
from src.ga import GAConfig, run_ga
from src.model.network import DemandTable, Network
from src.model.results import ReportRow, Solution
from src.model.scenario import (
    IncomeClass,
    ObjectiveOptions,
    Scenario,
    classify_links_by_income,
)
from src.problem import RestorationProblem

logger = logging.getLogger(__name__)

SOLVERS = ("sa", "ga", "greedy", "oracle", "cqm")
FORMATS = ("csv", "json", "parquet")
SUFFIXES = {".csv": "csv", ".json": "json", ".jsonl": "json", ".parquet": "parquet"}
KEY_COLUMNS = ["solver", "budget", "mu", "seed"]

# Budget utilization below this share is flagged by compare_report.
UTILIZATION_FLOOR = 0.97


@dataclass(frozen=True)
class SweepSpec:
    budgets: tuple[float, ...] = (75.0, 150.0, 225.0, 300.0)
    mus: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    solvers: tuple[str, ...] = ("sa",)
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        for name in ("budgets", "mus", "solvers", "seeds"):
            if len(getattr(self, name)) == 0:
                raise InputError(f"sweep needs at least one of {name}")
        if any(b < 0 for b in self.budgets):
            raise InputError("budgets must be non-negative")
        if any(not 0 <= mu <= 1 for mu in self.mus):
            raise InputError("mu out of range")
        unknown = set(self.solvers) - set(SOLVERS)
        if unknown:
            raise InputError(f"unknown solvers {sorted(unknown)}")

    def cells(self) -> list[tuple[float, float, str, int]]:
        """(budget, mu, solver, seed) for every cell, in report order."""
        return list(itertools.product(self.budgets, self.mus, self.solvers, self.seeds))


@dataclass(frozen=True)
class SolverSettings:
    """
    Everything a cell needs besides its (budget, mu, solver, seed) key.
    """

    ga: GAConfig = field(default_factory=GAConfig)
    anneal: AnnealConfig = field(default_factory=AnnealConfig)
    options: ObjectiveOptions = field(default_factory=ObjectiveOptions)
    ue: UEParams = field(default_factory=UEParams)
    greedy_step: float = 1.0
    grid: int = 6
    cqm_endpoint: str | None = None
    cqm_token: str | None = None
    cqm_timeout: float = 60.0


def aggregate_by_income(
    solution: Solution, classification: dict[int, IncomeClass]
) -> dict[str, float]:
    """
    Restored capacity per income class of the damaged links.
    """
    totals = {income_class.label: 0.0 for income_class in IncomeClass}
    for link_id in sorted(solution.plan.recovery):
        totals[classification[link_id].label] += solution.plan.recovery[link_id]
    return totals


def solve(
    problem: RestorationProblem, solver: str, seed: int, settings: SolverSettings
) -> Solution:
    match solver:
        case "sa":
            solution, _ = run_sa(problem, replace(settings.anneal, rng_seed=seed))
        case "ga":
            solution, _ = run_ga(problem, replace(settings.ga, rng_seed=seed))
        case "greedy":
            solution = greedy_marginal(problem, settings.greedy_step)
        case "oracle":
            solution = brute_force(problem, settings.grid)
        case "cqm":
            if not settings.cqm_endpoint or not settings.cqm_token:
                raise InputError("the cqm solver needs an endpoint and a credential")
            solution = submit_cqm(
                problem, settings.cqm_endpoint, settings.cqm_token, settings.cqm_timeout
            )
        case _:
            raise InputError(f"unknown solver {solver!r}")
    return solution


def report_row(
    solution: Solution, sc: Scenario, seed: int, classification: dict[int, IncomeClass]
) -> ReportRow:
    scored = solution.reported
    groups = aggregate_by_income(solution, classification)
    return ReportRow(
        solver=solution.solver_name,
        budget=sc.budget,
        mu=sc.mu,
        seed=seed,
        D=scored.D,
        E=scored.E,
        R=scored.R,
        H=scored.H,
        cost=solution.plan.cost,
        feasible=solution.feasible,
        low=groups["low"],
        average=groups["average"],
        high=groups["high"],
        wall_time_s=solution.wall_time_s,
    )


def solve_once(
    net: Network,
    dem: DemandTable,
    sc: Scenario,
    solver: str,
    seed: int = 0,
    settings: SolverSettings = SolverSettings(),
) -> tuple[Solution, ReportRow]:
    """
    Run one solver on one scenario.

    Returns: The Solution and its report row. Timing covers the solver call only.
    """
    problem = RestorationProblem(net, dem, sc, settings.options, settings.ue)
    solution = solve(problem, solver, seed, settings)
    row = report_row(solution, sc, seed, classify_links_by_income(net, sc))
    return solution, row


def run_cell(net, dem, sc, cell, settings) -> ReportRow:
    """
    One sweep cell. Failures are recorded in the row rather than raised.
    """
    budget, mu, solver, seed = cell
    try:
        scenario = sc.with_budget(budget).with_mu(mu)
        _, row = solve_once(net, dem, scenario, solver, seed, settings)
    except (RestorationError, ValueError) as e:
        logger.warning("cell %s failed: %s", cell, e)
        row = ReportRow(solver=solver, budget=budget, mu=mu, seed=seed, error=str(e))
    return row


def _run_cell(args) -> ReportRow:
    return run_cell(*args)


def default_jobs() -> int:
    return psutil.cpu_count(logical=False) or 1


def report_format(path: pathlib.Path, fmt: str | None = None) -> str:
    """
    The report format for `path`: `fmt` when given, otherwise the one named by
    the file suffix.

    Raises:
        InputError: Unknown format or suffix, or a suffix naming another format.
    """
    path = pathlib.Path(path)
    if fmt is not None and fmt not in FORMATS:
        raise InputError(f"unknown report format {fmt!r}")
    implied = SUFFIXES.get(path.suffix.lower())
    if implied is None:
        raise InputError(
            f"cannot tell the report format of {path}; use one of {sorted(SUFFIXES)}"
        )
    if fmt is not None and fmt != implied:
        raise InputError(f"{path} has a {implied} suffix but {fmt} was requested")
    return implied


class ReportWriter:
    """
    Writes report rows as they complete. CSV and JSON-lines reports are appended
    row by row and flushed, so an interrupted sweep keeps every finished cell;
    parquet is written once on close.
    """

    def __init__(self, path: pathlib.Path, fmt: str | None = None):
        self.path = pathlib.Path(path)
        self.fmt = report_format(self.path, fmt)
        self.rows: list[ReportRow] = []
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for target in (self.path, timing_path(self.path)):
            target.unlink(missing_ok=True)

    def write(self, row: ReportRow):
        self.rows.append(row)
        header = len(self.rows) == 1
        record = row.to_record(timing=False)
        if self.fmt == "csv":
            pd.DataFrame([record]).to_csv(self.path, mode="a", header=header, index=False)
        elif self.fmt == "json":
            plain = {
                k: None if isinstance(v, float) and np.isnan(v) else v
                for k, v in record.items()
            }
            with open(self.path, "a") as f:
                f.write(json.dumps(plain) + "\n")
        timing = {key: record[key] for key in KEY_COLUMNS}
        timing["wall_time_s"] = row.wall_time_s
        pd.DataFrame([timing]).to_csv(
            timing_path(self.path), mode="a", header=header, index=False
        )

    def close(self):
        if self.fmt == "parquet":
            frame = pd.DataFrame([row.to_record(timing=False) for row in self.rows])
            frame.to_parquet(self.path, engine="pyarrow", index=False)


def timing_path(path: pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    return path.with_name(path.name + ".timing.csv")


def rows_frame(rows: list[ReportRow]) -> pd.DataFrame:
    return pd.DataFrame([row.to_record() for row in rows])


def sweep(
    net: Network,
    dem: DemandTable,
    sc: Scenario,
    spec: SweepSpec = SweepSpec(),
    settings: SolverSettings = SolverSettings(),
    out: pathlib.Path | None = None,
    fmt: str | None = None,
    jobs: int = 1,
) -> pd.DataFrame:
    """
    Run every (budget, mu, solver, seed) cell of the spec.

    Cells run in up to `jobs` worker processes; with more than one job each
    annealing cell runs its restarts in-process. Rows are written in sweep
    order: a finished cell is written as soon as every cell before it is done.
    The report format follows `fmt` or, when it is None, the suffix of `out`.

    Returns: All rows, timing included, in sweep order.
    """
    cells = spec.cells()
    if jobs > 1:
        settings = replace(settings, anneal=replace(settings.anneal, workers=1))
    logger.info("sweep: %d cells, %d jobs", len(cells), jobs)
    writer = ReportWriter(out, fmt) if out is not None else None
    done: dict[int, ReportRow] = {}
    rows = []

    def flush():
        while len(rows) in done:
            row = done.pop(len(rows))
            rows.append(row)
            if writer is not None:
                writer.write(row)

    try:
        if jobs <= 1:
            for i, cell in enumerate(cells):
                done[i] = run_cell(net, dem, sc, cell, settings)
                flush()
        else:
            with ProcessPoolExecutor(max_workers=jobs) as executor:
                futures = [
                    executor.submit(_run_cell, (net, dem, sc, cell, settings))
                    for cell in cells
                ]
                for i, future in enumerate(futures):
                    done[i] = future.result()
                    flush()
    finally:
        if writer is not None:
            writer.close()
    return rows_frame(rows)


def load_report(path: pathlib.Path) -> pd.DataFrame:
    """
    Read a report in any supported format and join its timing sidecar when present.
    """
    path = pathlib.Path(path)
    if not path.exists():
        raise InputError(f"no such report: {path}")
    match report_format(path):
        case "parquet":
            frame = pd.read_parquet(path, engine="pyarrow")
        case "json":
            frame = pd.read_json(path, lines=True)
        case "csv":
            frame = pd.read_csv(path, keep_default_na=False, na_values=[""])
    frame["error"] = frame["error"].fillna("").astype(str)
    sidecar = timing_path(path)
    if sidecar.exists() and "wall_time_s" not in frame.columns:
        frame = frame.merge(pd.read_csv(sidecar), on=KEY_COLUMNS, how="left")
    return frame


def compare_report(rows: pd.DataFrame) -> pd.DataFrame:
    """
    Per budget and solver: best H, the cost and budget utilization of that best
    row, and mean wall time. Utilization below UTILIZATION_FLOOR is flagged.

    Raises:
        InputError: Fewer than two solvers in `rows`.
    """
    ok = rows[rows["error"].fillna("") == ""]
    if ok["solver"].nunique() < 2:
        raise InputError("need two solvers")

    out = []
    for (budget, solver), group in ok.groupby(["budget", "solver"], sort=True):
        best = group.loc[group["H"].idxmin()]
        utilization = best["cost"] / budget if budget > 0 else np.nan
        out.append(
            {
                "budget": budget,
                "solver": solver,
                "best_H": best["H"],
                "cost": best["cost"],
                "utilization": utilization,
                "underspent": bool(utilization < UTILIZATION_FLOOR),
                "wall_time_s": group["wall_time_s"].mean()
                if "wall_time_s" in group
                else np.nan,
            }
        )
    return pd.DataFrame(out)


def plot_data(rows: pd.DataFrame) -> pd.DataFrame:
    """
    Tidy long-format rows (variable, group, budget, mu, solver, value): restored
    capacity per income group plus D, E and R with group "all".
    """
    ok = rows[rows["error"].fillna("") == ""]
    ids = ["budget", "mu", "solver"]
    capacity = ok.melt(
        id_vars=ids, value_vars=["low", "average", "high"], var_name="group"
    ).assign(variable="restored_capacity")
    scores = ok.melt(id_vars=ids, value_vars=["D", "E", "R"], var_name="variable").assign(
        group="all"
    )
    tidy = pd.concat([capacity, scores], ignore_index=True)
    return tidy[["variable", "group", "budget", "mu", "solver", "value"]]
