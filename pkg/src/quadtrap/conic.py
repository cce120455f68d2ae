"""Construction and checked solution of small SDP/SOCP subproblems.

Thin layer over cvxpy with three jobs the solvers do not do for us:

* builders reject non-affine expressions up front, so modelling bugs fail
  loudly instead of becoming nonconvex surprises;
* after a nominally optimal solve every constraint is re-verified numerically
  (eigenvalues for LMIs, residual norms for equalities/cones); violations
  downgrade the status to "inaccurate";
* solver fallback (CLARABEL, then CVXOPT, then SCS) with deterministic
  behaviour for fixed inputs.

Statuses: "optimal", "infeasible", "inaccurate", "failed".
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

__all__ = [
    "ConicError",
    "ConicProgram",
    "SolveResult",
    "solve",
    "lmi_feasible",
    "dump",
]

# Strict matrix inequalities are encoded as <= -margin * I unless a caller
# supplies a problem-specific margin.
DEFAULT_STRICT_MARGIN = 1e-9

# Post-solve re-verification tolerances (relative to constraint scale).
_EIG_SLACK_TOL = 1e-7
_RESIDUAL_TOL = 1e-8

_SOLVER_ORDER = ("CLARABEL", "CVXOPT", "SCS")


class ConicError(ValueError):
    """Malformed program: non-affine expression, duplicate name, bad shape."""


@dataclass
class SolveResult:
    """Outcome of one solve: status, variable values, checked residuals."""

    status: str
    values: dict = field(default_factory=dict)
    objective: float | None = None
    max_violation: float = 0.0
    solver: str | None = None
    message: str = ""


class ConicProgram:
    """A named bag of variables, affine conic constraints and an affine objective."""

    def __init__(self, name: str = ""):
        self.name = name
        self._vars: dict[str, cp.Variable] = {}
        # (kind, payload...) records; kinds: psd, eq, nonneg, soc
        self._constraints: list[tuple] = []
        self._objective = None

    # -- variables ---------------------------------------------------------

    def _register(self, name: str, var: cp.Variable) -> cp.Variable:
        if name in self._vars:
            raise ConicError(f"duplicate variable name {name!r}")
        self._vars[name] = var
        return var

    def scalar(self, name: str, nonneg: bool = False) -> cp.Variable:
        return self._register(name, cp.Variable(name=name, nonneg=nonneg))

    def vector(self, name: str, n: int) -> cp.Variable:
        return self._register(name, cp.Variable(n, name=name))

    def sym_matrix(self, name: str, n: int) -> cp.Variable:
        return self._register(name, cp.Variable((n, n), name=name, symmetric=True))

    def value(self, name: str):
        """Solved value of a variable (call after solve/lmi_feasible)."""
        var = self._vars[name]
        if var.value is None:
            return None
        if var.shape == ():
            return float(var.value)
        return np.asarray(var.value)

    # -- constraints -------------------------------------------------------

    @staticmethod
    def _require_affine(expr, what: str):
        if not isinstance(expr, cp.Expression):
            expr = cp.Constant(expr)
        if not expr.is_affine():
            raise ConicError(f"{what} must be affine in the decision variables")
        return expr

    def add_lmi_psd(self, expr, strict_margin: float = 0.0) -> None:
        """Require expr >= strict_margin * I (positive semidefinite sense)."""
        expr = self._require_affine(expr, "LMI expression")
        if expr.ndim != 2 or expr.shape[0] != expr.shape[1]:
            raise ConicError(f"LMI expression must be square, got shape {expr.shape}")
        if strict_margin:
            expr = expr - strict_margin * np.eye(expr.shape[0])
        sym = 0.5 * (expr + expr.T)
        self._constraints.append(("psd", sym))

    def add_lmi_nsd(self, expr, strict_margin: float = 0.0) -> None:
        """Require expr <= -strict_margin * I; stored as the mirrored PSD record."""
        expr = self._require_affine(expr, "LMI expression")
        self.add_lmi_psd(-expr, strict_margin=strict_margin)

    def add_eq(self, expr) -> None:
        """Require expr == 0 elementwise."""
        expr = self._require_affine(expr, "equality expression")
        self._constraints.append(("eq", expr))

    def add_nonneg(self, expr) -> None:
        """Require expr >= 0 elementwise."""
        expr = self._require_affine(expr, "inequality expression")
        self._constraints.append(("nonneg", expr))

    def add_soc(self, vec_expr, bound) -> None:
        """Require ||vec_expr||_2 <= bound."""
        vec_expr = self._require_affine(vec_expr, "second-order cone expression")
        bound = self._require_affine(bound, "second-order cone bound")
        self._constraints.append(("soc", vec_expr, bound))

    def minimize(self, expr) -> None:
        expr = self._require_affine(expr, "objective")
        if expr.ndim != 0:
            raise ConicError("objective must be scalar")
        self._objective = expr

    # -- introspection ------------------------------------------------------

    @property
    def num_variables(self) -> int:
        return sum(int(np.prod(v.shape)) if v.shape else 1 for v in self._vars.values())

    def _cvxpy_constraints(self) -> list:
        cons = []
        for record in self._constraints:
            kind = record[0]
            if kind == "psd":
                cons.append(record[1] >> 0)
            elif kind == "eq":
                cons.append(record[1] == 0)
            elif kind == "nonneg":
                cons.append(record[1] >= 0)
            elif kind == "soc":
                cons.append(cp.norm(record[1], 2) <= record[2])
        return cons


def _scale_of(value: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(value))) if value.size else 0.0)


def _verify_constraints(program: ConicProgram) -> tuple[float, str]:
    """Numerically re-check every constraint at the solver's solution.

    Returns (worst violation, description of the worst offender). LMIs are
    checked by eigenvalue, everything else by residual, each relative to the
    constraint's own scale.
    """
    worst = 0.0
    offender = ""

    def consider(violation: float, what: str):
        nonlocal worst, offender
        if violation > worst:
            worst, offender = violation, what

    for record in program._constraints:
        kind = record[0]
        value = np.atleast_1d(np.asarray(record[1].value, dtype=float))
        if kind == "psd":
            sym = 0.5 * (value + value.T)
            lam_min = float(np.linalg.eigvalsh(sym)[0])
            tol = _EIG_SLACK_TOL * _scale_of(value)
            if lam_min < -tol:
                consider(-lam_min / _scale_of(value), "semidefinite constraint")
        elif kind == "eq":
            err = float(np.max(np.abs(value)))
            if err > _RESIDUAL_TOL * _scale_of(value):
                consider(err / _scale_of(value), "equality constraint")
        elif kind == "nonneg":
            err = float(-np.min(value, initial=0.0))
            if err > _RESIDUAL_TOL * _scale_of(value):
                consider(err / _scale_of(value), "inequality constraint")
        elif kind == "soc":
            lhs = float(np.linalg.norm(np.asarray(record[1].value, dtype=float)))
            rhs = float(record[2].value)
            err = lhs - rhs
            scale = max(1.0, abs(rhs))
            if err > _RESIDUAL_TOL * scale:
                consider(err / scale, "second-order cone constraint")
    return worst, offender


def _solve_constant_program(program: ConicProgram) -> SolveResult:
    # No decision variables: the program is a numeric feasibility statement.
    for record in program._constraints:
        kind = record[0]
        value = np.asarray(record[1].value, dtype=float)
        if kind == "psd":
            sym = 0.5 * (value + value.T)
            if float(np.linalg.eigvalsh(sym)[0]) < -_EIG_SLACK_TOL * _scale_of(value):
                return SolveResult(status="infeasible", message="constant semidefinite constraint violated")
        elif kind == "eq":
            if float(np.max(np.abs(value), initial=0.0)) > _RESIDUAL_TOL * _scale_of(value):
                return SolveResult(status="infeasible", message="constant equality violated")
        elif kind == "nonneg":
            if float(np.min(value, initial=0.0)) < -_RESIDUAL_TOL * _scale_of(value):
                return SolveResult(status="infeasible", message="constant inequality violated")
        elif kind == "soc":
            if float(np.linalg.norm(value)) > float(record[2].value) + _RESIDUAL_TOL:
                return SolveResult(status="infeasible", message="constant cone constraint violated")
    obj = float(program._objective.value) if program._objective is not None else 0.0
    return SolveResult(status="optimal", objective=obj)


def _solver_settings(solver: str, accuracy_target: float) -> dict:
    if solver == "CLARABEL":
        return {
            "tol_gap_abs": accuracy_target,
            "tol_gap_rel": accuracy_target,
            "tol_feas": accuracy_target,
        }
    if solver == "CVXOPT":
        return {"abstol": accuracy_target, "reltol": accuracy_target, "feastol": accuracy_target}
    if solver == "SCS":
        return {"eps": max(accuracy_target, 1e-9)}
    return {}


def solve(program: ConicProgram, accuracy_target: float = 1e-8) -> SolveResult:
    """Solve the program and return a re-verified result.

    A result reports status "optimal" only when the solver claims optimality
    *and* every constraint re-checks numerically (eigenvalue slack within
    1e-7, residuals within 1e-8, relative to each constraint's scale);
    otherwise the status is downgraded to "inaccurate".
    """
    if program.num_variables == 0:
        return _solve_constant_program(program)

    objective = cp.Minimize(program._objective if program._objective is not None else 0)
    problem = cp.Problem(objective, program._cvxpy_constraints())

    errors = []
    saw_inaccurate = False
    for solver in _SOLVER_ORDER:
        if solver not in cp.installed_solvers():
            continue
        try:
            with warnings.catch_warnings():
                # every solution is re-verified below and inaccurate statuses
                # are surfaced through SolveResult, so cvxpy's blanket warning
                # adds nothing but noise on expected-infeasible probes
                warnings.filterwarnings(
                    "ignore", message="Solution may be inaccurate", category=UserWarning
                )
                problem.solve(solver=solver, **_solver_settings(solver, accuracy_target))
        except (cp.error.SolverError, cp.error.DCPError, ValueError) as exc:
            errors.append(f"{solver}: {exc}")
            continue
        status = problem.status
        if status in (cp.OPTIMAL, cp.INFEASIBLE, cp.UNBOUNDED):
            break
        saw_inaccurate = saw_inaccurate or status is not None and "inaccurate" in str(status)
        errors.append(f"{solver}: status {status}")
    else:
        final = "inaccurate" if saw_inaccurate else "failed"
        return SolveResult(status=final, message="; ".join(errors) or "no solver available")

    if problem.status == cp.INFEASIBLE:
        return SolveResult(status="infeasible", solver=solver)
    if problem.status == cp.UNBOUNDED:
        return SolveResult(status="failed", solver=solver, message="problem is unbounded")
    if problem.status != cp.OPTIMAL:
        return SolveResult(status="inaccurate", solver=solver, message=f"solver status {problem.status}")

    violation, offender = _verify_constraints(program)
    values = {name: program.value(name) for name in program._vars}
    obj_value = float(problem.value) if problem.value is not None else None
    if violation > 0.0:
        return SolveResult(
            status="inaccurate",
            values=values,
            objective=obj_value,
            max_violation=violation,
            solver=solver,
            message=f"{offender} violated by {violation:.3e} after solve",
        )
    return SolveResult(
        status="optimal",
        values=values,
        objective=obj_value,
        max_violation=violation,
        solver=solver,
    )


def lmi_feasible(program: ConicProgram, accuracy_target: float = 1e-8) -> bool:
    """Feasibility oracle for a program with no objective.

    True only for a clean feasible solve; "inaccurate" and "failed" both count
    as not shown feasible. Variable witnesses remain readable through
    ``program.value`` afterwards.
    """
    if program._objective is not None:
        raise ConicError("feasibility programs must not set an objective")
    return solve(program, accuracy_target=accuracy_target).status == "optimal"


def dump(program: ConicProgram) -> str:
    """Human-readable summary of variables, constraints and objective."""
    lines = [f"conic program {program.name!r}:"]
    for name, var in program._vars.items():
        shape = "scalar" if var.shape == () else "x".join(map(str, var.shape))
        attr = " (nonneg)" if var.attributes.get("nonneg") else ""
        attr += " (symmetric)" if var.attributes.get("symmetric") else ""
        lines.append(f"  var {name}: {shape}{attr}")
    for record in program._constraints:
        kind = record[0]
        if kind == "psd":
            lines.append(f"  constraint: {record[1].shape[0]}x{record[1].shape[1]} matrix >= 0")
        elif kind == "eq":
            lines.append(f"  constraint: {record[1].shape or (1,)} == 0")
        elif kind == "nonneg":
            lines.append(f"  constraint: {record[1].shape or (1,)} >= 0")
        elif kind == "soc":
            lines.append("  constraint: ||.||_2 <= bound")
    if program._objective is not None:
        lines.append("  objective: minimize (affine)")
    else:
        lines.append("  objective: none (feasibility)")
    return "\n".join(lines)
