"""
Offline stand-in for the CQM solving service, speaking the client's wire format.

Submitted problems are answered immediately with either a configured fixed
sample or a budget-limited fill: variables are taken in increasing order of
their linear coefficient and each is raised to its upper bound until the budget
constraint's right-hand side is spent.
"""

import itertools
import threading

from flask import Flask, jsonify, request

from src.cqm.client import COMPLETED, INFEASIBLE, PENDING

# Slack allowed when checking an equality budget constraint.
EQUALITY_TOLERANCE = 1e-9


def fill_sample(payload: dict) -> tuple[str, dict]:
    """
    Returns: The answer status and the sample for a wire-format problem.
    """
    variables = payload["variables"]
    linear = payload["objective"].get("linear", {})
    budget = None
    sense = "<="
    for constraint in payload.get("constraints", []):
        budget = float(constraint["rhs"])
        sense = constraint["sense"]

    sample = {var["id"]: float(var["lower"]) for var in variables}
    remaining = float("inf") if budget is None else budget - sum(sample.values())
    ordered = sorted(variables, key=lambda var: (linear.get(var["id"], 0.0), var["id"]))
    for var in ordered:
        if remaining <= 0:
            break
        amount = min(float(var["upper"]) - sample[var["id"]], remaining)
        sample[var["id"]] += amount
        remaining -= amount

    spent = sum(sample.values())
    if sense == "==" and budget is not None and abs(spent - budget) > EQUALITY_TOLERANCE:
        return INFEASIBLE, {}
    return COMPLETED, sample


def create_app(token: str, fixed_sample: dict | None = None, pending_polls: int = 0) -> Flask:
    """
    Build the service.

    Args:
        token: The only bearer credential accepted.
        fixed_sample: Answer every problem with this sample instead of a fill.
        pending_polls: How many status polls report PENDING before the answer.
    """
    app = Flask(__name__)
    problems = {}
    lock = threading.Lock()
    ids = itertools.count(1)

    def authorized() -> bool:
        return request.headers.get("Authorization") == f"Bearer {token}"

    @app.route("/problems", methods=["POST"])
    def submit():
        if not authorized():
            return jsonify({"error": "invalid credential"}), 401
        payload = request.get_json(silent=True)
        required = {"variables", "objective", "constraints"}
        if not isinstance(payload, dict) or not required <= payload.keys():
            return jsonify({"error": "malformed problem"}), 400

        if fixed_sample is not None:
            status, sample = COMPLETED, dict(fixed_sample)
        else:
            status, sample = fill_sample(payload)
        with lock:
            problem_id = str(next(ids))
            problems[problem_id] = {"status": status, "sample": sample, "polls": pending_polls}
        return jsonify({"id": problem_id, "status": PENDING}), 201

    @app.route("/problems/<problem_id>", methods=["GET"])
    def poll(problem_id):
        if not authorized():
            return jsonify({"error": "invalid credential"}), 401
        with lock:
            entry = problems.get(problem_id)
            if entry is None:
                return jsonify({"error": f"unknown problem {problem_id}"}), 404
            if entry["polls"] > 0:
                entry["polls"] -= 1
                return jsonify({"id": problem_id, "status": PENDING})
        return jsonify({"id": problem_id, "status": entry["status"], "sample": entry["sample"]})

    return app
