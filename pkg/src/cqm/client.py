"""
Client for a remote constrained-quadratic-model (CQM) solving service.

The restoration problem is sent as a document of the shape

    {
        "variables": [{"id": "x7", "lower": 0.0, "upper": 6.81}, ...],
        "objective": {"linear": {"x7": -0.12, ...},
                      "quadratic": [],
                      "offset": 0.15},
        "constraints": [{"label": "budget", "terms": {"x7": 1.0, ...},
                         "sense": "<=", "rhs": 75.0}],
    }

The document is derived from a `dimod.ConstrainedQuadraticModel` built by
`build_cqm`. Its objective is the tangent plane of R at half of each link's
headroom: real-valued CQM variables take linear biases only, so the quadratic
list is always empty. The returned sample is scored locally with the same
Hamiltonian every other solver uses.
"""

import logging
import time

import dimod
import numpy as np
import requests

from src.errors import (
    CqmAuthenticationError,
    CqmConnectionError,
    CqmInfeasibleError,
    CqmServiceError,
    CqmTimeoutError,
)
from src.model.results import Solution
from src.model.scenario import PenaltyMode
from src.problem import RestorationProblem

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "EQUIRESTORE_CQM_TOKEN"

PENDING = "PENDING"
COMPLETED = "COMPLETED"
FAILED = "FAILED"
INFEASIBLE = "INFEASIBLE"


def variable_id(link_id: int) -> str:
    return f"x{link_id}"


def build_cqm(problem: RestorationProblem) -> dimod.ConstrainedQuadraticModel:
    """
    The restoration problem as a constrained quadratic model.

    Each damaged link is a real variable bounded by its headroom. The objective
    is mu times the first-order expansion of the fixed-flow deficiency plus
    (1 - mu) times the equity term, both taken at half the headroom, so it
    equals R there. The budget is a single constraint labelled "budget": `==`
    under the equality penalty when the budget can be spent in full, `<=`
    otherwise.
    """
    mu = problem.sc.mu
    model = problem.hamiltonian_model
    point = problem.headroom / 2
    first, _ = model.deficiency_derivatives(point)
    tangent = model.deficiency(point) - float(first @ point)
    offset = mu * tangent + (1 - mu) * model.equity(point)

    recoveries = [
        dimod.Real(variable_id(link_id), lower_bound=0.0, upper_bound=float(upper))
        for link_id, upper in zip(problem.ids, problem.headroom)
    ]
    cqm = dimod.ConstrainedQuadraticModel()
    cqm.set_objective(
        dimod.quicksum(float(mu * c) * x for c, x in zip(first, recoveries)) + float(offset)
    )

    spent = dimod.quicksum(recoveries)
    if (
        problem.options.penalty is PenaltyMode.EQUALITY
        and problem.budget <= problem.headroom.sum()
    ):
        cqm.add_constraint(spent == float(problem.budget), label="budget")
    else:
        cqm.add_constraint(spent <= float(problem.budget), label="budget")
    return cqm


def build_cqm_payload(problem: RestorationProblem) -> dict:
    """
    Encode the restoration problem in the service's wire format.
    """
    cqm = build_cqm(problem)
    objective = cqm.objective
    return {
        "variables": [
            {
                "id": var,
                "lower": float(cqm.lower_bound(var)),
                "upper": float(cqm.upper_bound(var)),
            }
            for var in cqm.variables
        ],
        "objective": {
            "linear": {var: float(bias) for var, bias in objective.linear.items()},
            "quadratic": [
                [u, v, float(bias)] for (u, v), bias in objective.quadratic.items()
            ],
            "offset": float(objective.offset),
        },
        "constraints": [
            {
                "label": label,
                "terms": {var: float(bias) for var, bias in comparison.lhs.linear.items()},
                "sense": comparison.sense.value,
                "rhs": float(comparison.rhs),
            }
            for label, comparison in cqm.constraints.items()
        ],
    }


def _check(response: requests.Response) -> dict:
    if response.status_code in (401, 403):
        raise CqmAuthenticationError(f"credential rejected ({response.status_code})")
    if response.status_code >= 400:
        raise CqmServiceError(f"service error {response.status_code}: {response.text}")
    try:
        return response.json()
    except ValueError:
        raise CqmServiceError("service returned a non-JSON body") from None


def submit_cqm(
    problem: RestorationProblem,
    endpoint: str,
    token: str,
    timeout: float = 60.0,
    poll_interval: float = 0.5,
) -> Solution:
    """
    Submit the problem, wait for an answer and score it locally.

    Args:
        problem: The restoration instance.
        endpoint: Base URL of the service.
        token: Bearer credential.
        timeout: Seconds to wait in total, covering every request and the polling.
        poll_interval: Seconds between status polls.

    Raises:
        CqmConnectionError: The service could not be reached.
        CqmAuthenticationError: The credential was rejected.
        CqmInfeasibleError: The service found no feasible sample.
        CqmTimeoutError: No answer within `timeout`.
        CqmServiceError: Any other service-side failure or malformed answer.
    """
    start = time.perf_counter()
    deadline = start + timeout
    url = endpoint.rstrip("/") + "/problems"
    headers = {"Authorization": f"Bearer {token}"}

    with requests.Session() as session:
        session.headers.update(headers)

        def call(method, target, **kwargs):
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                raise CqmTimeoutError(f"no answer within {timeout} s")
            try:
                return _check(session.request(method, target, timeout=remaining, **kwargs))
            except requests.Timeout:
                raise CqmTimeoutError(f"no answer within {timeout} s") from None
            except requests.ConnectionError as e:
                raise CqmConnectionError(f"cannot reach {endpoint}: {e}") from None

        submitted = call("POST", url, json=build_cqm_payload(problem))
        problem_id = submitted.get("id")
        if problem_id is None:
            raise CqmServiceError("service did not return a problem id")
        logger.info("CQM problem %s submitted to %s", problem_id, endpoint)

        answer = submitted
        while answer.get("status", PENDING) == PENDING:
            time.sleep(poll_interval)
            answer = call("GET", f"{url}/{problem_id}")

    status = answer.get("status")
    if status == INFEASIBLE:
        raise CqmInfeasibleError(f"problem {problem_id} has no feasible sample")
    if status == FAILED:
        raise CqmServiceError(f"problem {problem_id} failed: {answer.get('error', '')}")
    if status != COMPLETED:
        raise CqmServiceError(f"unknown status {status!r}")

    sample = answer.get("sample") or {}
    try:
        vector = np.array([float(sample[variable_id(i)]) for i in problem.ids])
    except (KeyError, TypeError, ValueError):
        raise CqmServiceError("sample does not cover every variable") from None

    return problem.solution(
        vector,
        solver_name="cqm",
        wall_time_s=time.perf_counter() - start,
        evaluations=1,
    )
