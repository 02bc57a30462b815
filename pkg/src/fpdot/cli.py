"""
Command-line front end.

    fpdot solve INSTANCE --epsilon 0.1
    fpdot exact INSTANCE
    fpdot sweep INSTANCE --sweep 1,0.1,0.01
    fpdot constrained INSTANCE --epsilon 0.5
    fpdot verify [INSTANCE] --epsilon 0.5 --seed 0

Reports are JSON on stdout; diagnostics go to stderr. Exit codes: 0 success,
1 input error, 2 not converged (or a failed verification check),
3 infeasible.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .densities import (
    CostMatrix,
    DiscreteDensity,
    ReferenceDensity,
    make_density,
    uniform_density,
)
from .errors import (
    EmptyFeasibleSet,
    FpdOtError,
    Infeasible,
    InfeasibleSupport,
    ParseError,
)
from .exact_lp import solve_exact
from .fpd_constraints import MomentConstraint, solve_with_moment
from .ideal_design import build_ideal_design
from .sinkhorn import SolverConfig, epsilon_sweep, solve, solve_two_routes

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_INFEASIBLE = 0, 1, 2, 3


@dataclass(frozen=True)
class ProblemInstance:
    mu: DiscreteDensity
    nu: DiscreteDensity
    cost: CostMatrix
    epsilon: Optional[float] = None
    reference: ReferenceDensity = ReferenceDensity.uniform()
    moment: Optional[MomentConstraint] = None


# ---------------------------------------------------------------- parsing

def _vector(data, name):
    if not isinstance(data, list) or not data:
        raise ParseError(f"field '{name}': expected a non-empty list of numbers")
    for k, x in enumerate(data):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ParseError(f"field '{name}[{k}]': expected a number, got {x!r}")
    return np.array(data, dtype=np.float64)


def _matrix(data, name, shape=None):
    if not isinstance(data, list) or not data:
        raise ParseError(f"field '{name}': expected a non-empty list of rows")
    width = len(data[0]) if isinstance(data[0], list) else None
    if shape is not None:
        if len(data) != shape[0]:
            raise ParseError(f"field '{name}': {len(data)} rows, expected {shape[0]}")
        width = shape[1]
    rows = []
    for i, row in enumerate(data):
        if not isinstance(row, list):
            raise ParseError(f"field '{name}[{i}]': expected a list")
        if len(row) != width:
            raise ParseError(f"field '{name}[{i}]': row {i} has length {len(row)}, expected {width}")
        rows.append(_vector(row, f"{name}[{i}]"))
    return np.vstack(rows)


def _field(name, build, *args):
    try:
        return build(*args)
    except ParseError:
        raise
    except (FpdOtError, ValueError) as exc:
        raise ParseError(f"field '{name}': {exc}") from exc


def instance_from_dict(data: dict, source: str = "<instance>") -> ProblemInstance:
    if not isinstance(data, dict):
        raise ParseError(f"{source}: top level must be a JSON object")
    for key in ("mu", "nu", "cost"):
        if key not in data:
            raise ParseError(f"{source}: missing required field '{key}'")
    mu = _field("mu", make_density, _vector(data["mu"], "mu"))
    nu = _field("nu", make_density, _vector(data["nu"], "nu"))
    cost = _field("cost", CostMatrix, _matrix(data["cost"], "cost", (mu.size, nu.size)))

    epsilon = data.get("epsilon")
    if epsilon is not None:
        if isinstance(epsilon, bool) or not isinstance(epsilon, (int, float)) or not epsilon > 0:
            raise ParseError(f"field 'epsilon': expected a positive number, got {epsilon!r}")
        epsilon = float(epsilon)

    reference = ReferenceDensity.uniform()
    ref = data.get("reference")
    if ref is not None:
        if not isinstance(ref, dict) or "kind" not in ref:
            raise ParseError("field 'reference': expected an object with a 'kind'")
        kind = ref["kind"]
        if kind == "uniform":
            reference = ReferenceDensity.uniform()
        elif kind == "product":
            reference = ReferenceDensity.product()
        elif kind == "matrix":
            if "matrix" not in ref:
                raise ParseError("field 'reference.matrix': required for kind 'matrix'")
            phi = _matrix(ref["matrix"], "reference.matrix", cost.shape)
            reference = _field("reference.matrix", ReferenceDensity.explicit, phi)
        else:
            raise ParseError(f"field 'reference.kind': unknown kind {kind!r}")

    moment = None
    if data.get("moment") is not None:
        mom = data["moment"]
        if not isinstance(mom, dict) or "chi" not in mom or "eta" not in mom:
            raise ParseError("field 'moment': expected an object with 'chi' and 'eta'")
        chi = _matrix(mom["chi"], "moment.chi", cost.shape)
        eta = mom["eta"]
        if isinstance(eta, bool) or not isinstance(eta, (int, float)):
            raise ParseError(f"field 'moment.eta': expected a number, got {eta!r}")
        moment = _field("moment", MomentConstraint, chi, float(eta))

    return ProblemInstance(mu, nu, cost, epsilon, reference, moment)


def parse_instance(path) -> ProblemInstance:
    """Read and validate a JSON instance file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return instance_from_dict(data, str(path))
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _load_matrix_file(path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix.lower() == ".csv":
            return np.loadtxt(path, delimiter=",", ndmin=2)
        return _matrix(json.loads(path.read_text()), str(path))
    except (OSError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


def instance_from_cost_csv(path) -> ProblemInstance:
    cost = _field("cost", CostMatrix, _load_matrix_file(path))
    n, m = cost.shape
    return ProblemInstance(uniform_density(n), uniform_density(m), cost)


def random_instance(size: int, seed: int) -> ProblemInstance:
    rng = np.random.default_rng(seed)
    a = rng.random(size) + 0.01
    b = rng.random(size) + 0.01
    cost = rng.random((size, size))
    return ProblemInstance(DiscreteDensity(a / a.sum()), DiscreteDensity(b / b.sum()),
                           CostMatrix(cost))


def _parse_reference(value: str) -> ReferenceDensity:
    if value == "uniform":
        return ReferenceDensity.uniform()
    if value == "product":
        return ReferenceDensity.product()
    if value.startswith("matrix:"):
        return _field("reference", ReferenceDensity.explicit, _load_matrix_file(value[len("matrix:"):]))
    raise ParseError(f"--reference: expected uniform, product or matrix:<path>, got {value!r}")


# ---------------------------------------------------------------- output

def _encode(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_encode(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if seq and isinstance(seq[0], (list, tuple, np.ndarray, dict)):
            items = [f"{pad}  {_encode(v, indent + 1)}" for v in seq]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        return "[" + ", ".join(_encode(v, indent) for v in seq) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # non-finite values (e.g. -inf potentials on zero-mass points) have no JSON form
        if not math.isfinite(x):
            return "null"
        text = format(x, ".17g")
        return text if any(ch in text for ch in ".en") else text + ".0"
    if obj is None:
        return "null"
    return json.dumps(obj)


def dumps_report(report: dict) -> str:
    """Serialize a report deterministically: insertion order, 17 significant digits."""
    return _encode(report) + "\n"


def _solve_fields(report, show_plan: bool, tolerance: float) -> dict:
    plan = report.plan
    out = {
        "converged": report.converged,
        "iterations": report.iterations,
    }
    if show_plan:
        out["plan"] = plan.entries
    out.update({
        "transport_cost": report.objective.transport_cost,
        "kl_term": report.objective.kl_term,
        "total_objective": report.objective.total,
        "marginal_residual": max(plan.row_marginal_error, plan.col_marginal_error),
        "tolerance": tolerance,
    })
    return out


# ---------------------------------------------------------------- commands

def _config(args, epsilon: float) -> SolverConfig:
    return SolverConfig(epsilon=epsilon, max_iterations=args.max_iter, tolerance=args.tol)


def _require_epsilon(args, instance: ProblemInstance) -> float:
    eps = args.epsilon if args.epsilon is not None else instance.epsilon
    if eps is None:
        raise ParseError(f"'{args.command}' requires --epsilon (or an 'epsilon' field in the instance)")
    if not eps > 0:
        raise ParseError(f"--epsilon must be positive, got {eps!r}")
    return eps


def run_solve(instance: ProblemInstance, args):
    eps = _require_epsilon(args, instance)
    ideal = build_ideal_design(instance.cost, eps, instance.reference, instance.mu, instance.nu)
    report = solve(instance.mu, instance.nu, ideal, _config(args, eps))
    out = {"command": "solve"}
    out.update(_solve_fields(report, not args.no_plan, args.tol))
    out["dual_log_u"] = report.log_u
    out["dual_log_v"] = report.log_v
    out["epsilon"] = eps
    out["log_normalizer"] = ideal.log_normalizer
    return out, EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def run_exact(instance: ProblemInstance, args):
    sol = solve_exact(instance.mu, instance.nu, instance.cost)
    plan = sol.plan
    out = {"command": "exact", "converged": True, "iterations": sol.pivots}
    if not args.no_plan:
        out["plan"] = plan.entries
    out.update({
        "transport_cost": sol.optimal_cost,
        "marginal_residual": max(plan.row_marginal_error, plan.col_marginal_error),
        "basis_size": sol.basis_size,
        "degenerate": sol.degenerate,
    })
    return out, EXIT_OK


def _parse_sweep(args, instance) -> List[float]:
    if args.sweep:
        try:
            eps = [float(x) for x in args.sweep.split(",") if x.strip()]
        except ValueError as exc:
            raise ParseError(f"--sweep: {exc}") from exc
        if not eps or any(not e > 0 for e in eps):
            raise ParseError("--sweep: expected a comma-separated list of positive numbers")
        return eps
    return [_require_epsilon(args, instance)]


def run_sweep(instance: ProblemInstance, args):
    epsilons = _parse_sweep(args, instance)
    results = epsilon_sweep(instance.mu, instance.nu, instance.cost, instance.reference,
                            epsilons, _config(args, epsilons[0]))
    rows = []
    for eps, rep in results:
        row = {"epsilon": eps}
        row.update(_solve_fields(rep, False, args.tol))
        rows.append(row)
    last = results[-1][1]
    out = {"command": "sweep"}
    out.update(_solve_fields(last, not args.no_plan, args.tol))
    out["converged"] = all(r.converged for _, r in results)
    out["iterations"] = sum(r.iterations for _, r in results)
    out["dual_log_u"] = last.log_u
    out["dual_log_v"] = last.log_v
    out["sweep"] = rows
    return out, EXIT_OK if out["converged"] else EXIT_NOT_CONVERGED


def run_constrained(instance: ProblemInstance, args):
    if instance.moment is None:
        raise ParseError("'constrained' requires a 'moment' field in the instance")
    eps = _require_epsilon(args, instance)
    ideal = build_ideal_design(instance.cost, eps, instance.reference, instance.mu, instance.nu)
    rep = solve_with_moment(instance.mu, instance.nu, ideal, instance.moment, _config(args, eps))
    plan = rep.plan
    out = {"command": "constrained", "converged": rep.converged, "iterations": rep.dykstra_iterations}
    if not args.no_plan:
        out["plan"] = plan.entries
    out.update({
        "transport_cost": rep.objective.transport_cost,
        "kl_term": rep.objective.kl_term,
        "total_objective": rep.objective.total,
        "marginal_residual": max(plan.row_marginal_error, plan.col_marginal_error),
        "moment_value": rep.moment_value,
        "constraint_active": rep.constraint_active,
        "tolerance": args.tol,
        "eta": instance.moment.eta,
        "multiplier": rep.multiplier,
        "epsilon": eps,
    })
    return out, EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


SMALL_EPSILONS = (1.0, 0.3, 0.1, 0.03, 0.01)


def run_verify(instance: ProblemInstance, args):
    """Two-route equivalence check plus both regularization limits."""
    eps = args.epsilon if args.epsilon is not None else (instance.epsilon or 0.5)
    mu, nu, cost = instance.mu, instance.nu, instance.cost
    config = _config(args, eps)
    checks = []

    two = solve_two_routes(mu, nu, cost, eps, instance.reference, config)
    checks.append({
        "name": "two_route_equivalence",
        "passed": bool(two.normalized.converged and two.unnormalized.converged
                       and two.max_plan_difference <= 1e-7),
        "value": two.max_plan_difference,
        "threshold": 1e-7,
    })

    big = 1e6
    ideal = build_ideal_design(cost, big, ReferenceDensity.product(), mu, nu)
    rep = solve(mu, nu, ideal, config.with_epsilon(big))
    gap = float(np.max(np.abs(rep.plan.entries - np.outer(mu.weights, nu.weights))))
    checks.append({"name": "large_epsilon_limit", "passed": bool(rep.converged and gap <= 1e-5),
                   "value": gap, "threshold": 1e-5})

    scale = float(cost.entries.max())
    lp = solve_exact(mu, nu, cost)
    if scale > 0:
        sweep = epsilon_sweep(mu, nu, cost, instance.reference,
                              [e * scale for e in SMALL_EPSILONS], config)
        costs = [r.objective.transport_cost for _, r in sweep]
        monotone = all(b <= a + 1e-9 * scale for a, b in zip(costs, costs[1:]))
        final = costs[-1]
        slack = max(0.01 * lp.optimal_cost, 1e-4 * scale if lp.optimal_cost < 0.01 * scale else 0.0)
        close = abs(final - lp.optimal_cost) <= slack
        converged = all(r.converged for _, r in sweep)
    else:
        final, monotone, close, converged = 0.0, True, True, True
        slack = 0.0
    checks.append({"name": "small_epsilon_limit",
                   "passed": bool(monotone and close and converged),
                   "value": abs(final - lp.optimal_cost), "threshold": slack})

    out = {"command": "verify"}
    out.update(_solve_fields(two.normalized, not args.no_plan, args.tol))
    out["dual_log_u"] = two.normalized.log_u
    out["dual_log_v"] = two.normalized.log_v
    out["epsilon"] = eps
    out["max_plan_difference"] = two.max_plan_difference
    out["lp_optimal_cost"] = lp.optimal_cost
    out["checks"] = checks
    out["passed"] = all(c["passed"] for c in checks)
    return out, EXIT_OK if out["passed"] else EXIT_NOT_CONVERGED


COMMANDS = {
    "solve": run_solve,
    "exact": run_exact,
    "sweep": run_sweep,
    "constrained": run_constrained,
    "verify": run_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpdot", description="Discrete KL-regularized optimal transport")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("instance", nargs="?", help="JSON instance file")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--max-iter", type=int, default=10000)
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--reference", help="uniform | product | matrix:<path>")
        p.add_argument("--sweep", help="comma-separated epsilon values")
        p.add_argument("--cost-csv", help="CSV cost matrix; marginals are uniform")
        p.add_argument("--no-plan", action="store_true")
        p.add_argument("--seed", type=int, default=0, help="seed for verify's random instance")
        p.add_argument("--size", type=int, default=3, help="size of verify's random instance")
    return parser


def _load(args) -> ProblemInstance:
    if args.instance and args.cost_csv:
        raise ParseError("give either an instance file or --cost-csv, not both")
    if args.instance:
        instance = parse_instance(args.instance)
    elif args.cost_csv:
        instance = instance_from_cost_csv(args.cost_csv)
    elif args.command == "verify":
        instance = random_instance(args.size, args.seed)
    else:
        raise ParseError("an instance file or --cost-csv is required")
    if args.reference:
        ref = _parse_reference(args.reference)
        instance = ProblemInstance(instance.mu, instance.nu, instance.cost, instance.epsilon,
                                   ref, instance.moment)
    return instance


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.max_iter < 1 or not args.tol > 0:
            raise ParseError("--max-iter must be >= 1 and --tol positive")
        instance = _load(args)
        report, code = COMMANDS[args.command](instance, args)
    except (InfeasibleSupport, EmptyFeasibleSet, Infeasible) as exc:
        print(f"fpdot {args.command}: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        # FpdOtError subclasses ValueError; both are input problems here
        print(f"fpdot {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(dumps_report(report))
    if code == EXIT_NOT_CONVERGED:
        print(f"fpdot {args.command}: did not converge or a check failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
