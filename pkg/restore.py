"""
Command-line front end: single solves, sweeps, equilibrium runs, report
comparison and input validation.

Exit status is 0 on success, 1 when a solve ends without a feasible plan, a
solver fails or any sweep cell fails, and 2 for bad input.
"""

import argparse
from dataclasses import replace
import logging
import os
import pathlib
import sys

from src import harness
from src.anneal import AnnealConfig
from src.assignment import capacity_vector, flows_frame, solve_ue
from src.cqm.client import TOKEN_ENV_VAR
from src.errors import InputError, RestorationError
from src.ga import GAConfig
from src.parsing import load_objective_options, load_scenario, parse_network, parse_trips
from src.sioux_falls import NETWORK_FILE, SCENARIO_FILE, TRIPS_FILE
from src.validate import ensure_valid, validate


def parse_args(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--verbose",
        action="store_true",
        help="Log solver progress at DEBUG level",
    )

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument(
        "--network",
        type=pathlib.Path,
        default=NETWORK_FILE,
        help="Network file (TNTP link rows)",
    )
    inputs.add_argument(
        "--trips",
        type=pathlib.Path,
        default=TRIPS_FILE,
        help="Trips file (TNTP origin blocks)",
    )
    inputs.add_argument(
        "--scenario",
        type=pathlib.Path,
        default=SCENARIO_FILE,
        help="Scenario document (TOML)",
    )

    solvers = argparse.ArgumentParser(add_help=False)
    solvers.add_argument(
        "--equity",
        choices=["literal", "quadratic", "responsive"],
        help="Equity term, overriding the scenario document",
    )
    solvers.add_argument(
        "--penalty",
        choices=["equality", "one-sided"],
        help="Budget penalty, overriding the scenario document",
    )
    solvers.add_argument("--generations", type=int, default=200, help="GA generations")
    solvers.add_argument("--population", type=int, default=50, help="GA population size")
    solvers.add_argument(
        "--fitness",
        choices=["full", "surrogate"],
        default="full",
        help="GA deficiency: an equilibrium solve per individual, or fixed flows",
    )
    solvers.add_argument("--restarts", type=int, default=3, help="SA restarts")
    solvers.add_argument(
        "--energy",
        choices=["surrogate", "full"],
        default="surrogate",
        help="SA deficiency: fixed flows, or an equilibrium solve per step",
    )
    solvers.add_argument("--grid", type=int, default=6, help="Oracle grid levels per link")
    solvers.add_argument("--step", type=float, default=1.0, help="Greedy step size")
    solvers.add_argument(
        "--cqm-endpoint",
        help=f"CQM service base URL; the credential is read from ${TOKEN_ENV_VAR}",
    )

    parser = argparse.ArgumentParser(description="Equitable network restoration planner")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser(
        "solve", parents=[common, inputs, solvers], help="Run one solver"
    )
    solve.add_argument("--solver", choices=harness.SOLVERS, default="sa")
    solve.add_argument("--budget", type=float, help="Override the scenario budget")
    solve.add_argument("--mu", type=float, help="Override the scenario mu")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--out", type=pathlib.Path, help="Also write the report row here")
    solve.add_argument(
        "--format",
        choices=harness.FORMATS,
        help="Report format (default: from the --out suffix)",
    )

    sweep = commands.add_parser(
        "sweep", parents=[common, inputs, solvers], help="Run a budget x mu sweep"
    )
    sweep.add_argument("--budgets", type=float, nargs="+", default=[75, 150, 225, 300])
    sweep.add_argument(
        "--mus", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0]
    )
    sweep.add_argument("--solvers", choices=harness.SOLVERS, nargs="+", default=["sa"])
    sweep.add_argument("--seeds", type=int, nargs="+", default=[0])
    sweep.add_argument(
        "--jobs",
        type=int,
        default=harness.default_jobs(),
        help="Worker processes (default: physical cores)",
    )
    sweep.add_argument("--out", type=pathlib.Path, required=True, help="Report file")
    sweep.add_argument(
        "--format",
        choices=harness.FORMATS,
        help="Report format (default: from the --out suffix)",
    )

    assign = commands.add_parser(
        "assign", parents=[common, inputs], help="Solve the traffic equilibrium"
    )
    assign.add_argument(
        "--intact",
        action="store_true",
        help="Use pre-disaster capacities instead of the damaged ones",
    )
    assign.add_argument("--out", type=pathlib.Path, help="Write link flows as CSV")

    report = commands.add_parser("report", parents=[common], help="Summarize a report")
    report.add_argument("path", type=pathlib.Path, help="Report written by sweep")
    report.add_argument(
        "--compare", action="store_true", help="Compare solvers per budget"
    )
    report.add_argument(
        "--plot-data", type=pathlib.Path, help="Write tidy plotting rows as CSV"
    )

    commands.add_parser("validate", parents=[common, inputs], help="Check the inputs")

    return parser.parse_args(argv)


def read_text(path: pathlib.Path) -> str:
    try:
        return pathlib.Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from None


def load_inputs(args):
    net = parse_network(read_text(args.network))
    dem = parse_trips(read_text(args.trips), net.num_zones)
    text = read_text(args.scenario)
    sc = load_scenario(text, net)
    return net, dem, sc, load_objective_options(text)


def solver_settings(args, options) -> harness.SolverSettings:
    if args.equity is not None:
        options = replace(options, equity=args.equity)
    if args.penalty is not None:
        options = replace(options, penalty=args.penalty)
    try:
        ga = GAConfig(
            generations=args.generations,
            population_size=args.population,
            fitness=args.fitness,
        )
        anneal = AnnealConfig(restarts=args.restarts, energy=args.energy)
    except ValueError as e:
        raise InputError(str(e)) from None
    return harness.SolverSettings(
        ga=ga,
        anneal=anneal,
        options=options,
        greedy_step=args.step,
        grid=args.grid,
        cqm_endpoint=args.cqm_endpoint,
        cqm_token=os.environ.get(TOKEN_ENV_VAR),
    )


def run_solve(args) -> int:
    net, dem, sc, options = load_inputs(args)
    if args.budget is not None:
        sc = sc.with_budget(args.budget)
    if args.mu is not None:
        sc = sc.with_mu(args.mu)
    ensure_valid(net, dem, sc)
    settings = solver_settings(args, options)
    if args.out is not None:
        harness.report_format(args.out, args.format)

    solution, row = harness.solve_once(net, dem, sc, args.solver, args.seed, settings)
    print(f"solver    {row.solver} (seed {row.seed})")
    print(f"budget    {row.cost:.4f} of {row.budget:g} spent")
    print(f"D {row.D:.6f}  E {row.E:.6f}  R {row.R:.6f}  H {row.H:.6f}")
    print(f"restored  low {row.low:.3f}  average {row.average:.3f}  high {row.high:.3f}")
    for link_id, amount in sorted(solution.plan.recovery.items()):
        if amount > 0:
            print(f"  link {link_id:>3}  +{amount:.3f}")
    print(f"feasible  {row.feasible}  ({row.wall_time_s:.2f} s)")

    if args.out is not None:
        writer = harness.ReportWriter(args.out, args.format)
        writer.write(row)
        writer.close()
    return 0 if row.feasible else 1


def run_sweep(args) -> int:
    net, dem, sc, options = load_inputs(args)
    settings = solver_settings(args, options)
    spec = harness.SweepSpec(
        budgets=tuple(args.budgets),
        mus=tuple(args.mus),
        solvers=tuple(args.solvers),
        seeds=tuple(args.seeds),
    )
    rows = harness.sweep(net, dem, sc, spec, settings, args.out, args.format, args.jobs)
    failed = int((rows["error"] != "").sum())
    print(f"{len(rows)} rows written to {args.out} ({failed} failed)")
    return 1 if failed else 0


def run_assign(args) -> int:
    net, dem, sc, _ = load_inputs(args)
    caps = net.capacity if args.intact else capacity_vector(net, sc)
    result = solve_ue(net, dem, caps, alpha=sc.bpr_alpha, beta=sc.bpr_beta)
    print(f"TSTT      {result.tstt:.6g} veh-min/h")
    print(f"gap       {result.relative_gap:.3e} after {result.iterations} iterations")
    frame = flows_frame(net, result)
    if args.out is not None:
        frame.to_csv(args.out, index=False)
    else:
        print(frame.to_string(index=False))
    return 0


def run_report(args) -> int:
    rows = harness.load_report(args.path)
    if args.compare:
        print(harness.compare_report(rows).to_string(index=False))
    else:
        print(rows.to_string(index=False))
    if args.plot_data is not None:
        harness.plot_data(rows).to_csv(args.plot_data, index=False)
    return 0


def run_validate(args) -> int:
    net, dem, sc, _ = load_inputs(args)
    errors = validate(net, dem, sc)
    for error in errors:
        print(error)
    if errors:
        return 2
    print(f"ok: {net.num_zones} zones, {net.num_links} links, {len(sc.damaged)} damaged")
    return 0


COMMANDS = {
    "solve": run_solve,
    "sweep": run_sweep,
    "assign": run_assign,
    "report": run_report,
    "validate": run_validate,
}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except RestorationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
