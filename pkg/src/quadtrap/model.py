"""Quadratic dynamical systems and their shifted-coordinate form.

A system is the triple (A, {Q_i}, d) describing

    dx/dt = A x + Q(x) + d,        Q(x)_i = x^T Q_i x,

with every Q_i symmetric. Shifting coordinates by a vector m (y = x - m)
rewrites the dynamics as dy/dt = L(m) y + Q(y) + c(m); the shifted form is
what the trapping-region machinery works with.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelError",
    "QuadraticSystem",
    "ShiftedSystem",
    "make_system",
    "validate",
    "eval_quadratic",
    "eval_rhs",
    "shift",
    "eval_shifted_rhs",
    "system_to_dict",
    "system_from_dict",
    "load_system",
    "save_system",
]

# Largest relative asymmetry in a Q_i that is silently symmetrized away.
ASYMMETRY_TOL = 1e-9


class ModelError(ValueError):
    """Inconsistent or malformed system definition."""


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class QuadraticSystem:
    """Immutable container for dx/dt = A x + Q(x) + d.

    Construct through :func:`make_system` or :func:`validate`, which check
    shapes, finiteness and Q_i symmetry. Arrays are read-only.
    """

    n: int
    A: np.ndarray
    Q: np.ndarray  # shape (n, n, n); Q[i] is the form for component i
    d: np.ndarray


@dataclass(frozen=True)
class ShiftedSystem:
    """Shifted dynamics dy/dt = L y + Q(y) + c around the point m.

    L is also the Jacobian of the original right-hand side at m, so the
    first-order expansion of c(m + dm) is c(m) + L(m) dm.
    """

    m: np.ndarray
    L: np.ndarray
    c: np.ndarray


def validate(system: QuadraticSystem) -> QuadraticSystem:
    """Return a checked copy of ``system`` with each Q_i symmetrized.

    Raises ModelError on shape mismatch, non-finite entries, or a Q_i whose
    asymmetry exceeds ASYMMETRY_TOL relative to its magnitude (that much
    asymmetry is a modelling error, not floating-point noise).
    """
    n = int(system.n)
    if n < 1:
        raise ModelError(f"state dimension must be positive, got {n}")
    A = np.asarray(system.A, dtype=float)
    Q = np.asarray(system.Q, dtype=float)
    d = np.asarray(system.d, dtype=float)
    if A.shape != (n, n):
        raise ModelError(f"A must be {n}x{n}, got shape {A.shape}")
    if Q.shape != (n, n, n):
        raise ModelError(f"Q must hold {n} matrices of size {n}x{n}, got shape {Q.shape}")
    if d.shape != (n,):
        raise ModelError(f"d must be a length-{n} vector, got shape {d.shape}")
    for arr, name in ((A, "A"), (Q, "Q"), (d, "d")):
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"{name} contains non-finite entries")
    Qsym = np.empty_like(Q)
    for i in range(n):
        asym = np.max(np.abs(Q[i] - Q[i].T))
        scale = max(1.0, float(np.max(np.abs(Q[i]))))
        if asym > ASYMMETRY_TOL * scale:
            raise ModelError(
                f"Q[{i}] is asymmetric (max |Q - Q^T| = {asym:.3e}); "
                "symmetrize it explicitly if that is intended"
            )
        Qsym[i] = 0.5 * (Q[i] + Q[i].T)
    return QuadraticSystem(n=n, A=_frozen(A), Q=_frozen(Qsym), d=_frozen(d))


def make_system(A, Q, d=None) -> QuadraticSystem:
    """Build and validate a system from raw arrays; d defaults to zero."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0] if A.ndim == 2 else -1
    if d is None and n > 0:
        d = np.zeros(n)
    return validate(QuadraticSystem(n=n, A=A, Q=np.asarray(Q, dtype=float), d=np.asarray(d, dtype=float)))


def eval_quadratic(system: QuadraticSystem, x: np.ndarray) -> np.ndarray:
    """Evaluate Q(x), componentwise x^T Q_i x. Supports batched x of shape (..., n)."""
    x = np.asarray(x, dtype=float)
    return np.einsum("...j,ijk,...k->...i", x, system.Q, x)


def eval_rhs(system: QuadraticSystem, x: np.ndarray) -> np.ndarray:
    """Evaluate A x + Q(x) + d. Supports batched x of shape (..., n)."""
    x = np.asarray(x, dtype=float)
    return x @ system.A.T + eval_quadratic(system, x) + system.d


def shift(system: QuadraticSystem, m: np.ndarray) -> ShiftedSystem:
    """Shift coordinates to y = x - m.

    Returns L(m) = A + 2 * stack_i (Q_i m)^T and c(m) = d + A m + Q(m); the
    quadratic part is unchanged. Row i of the shift correction is 2 (Q_i m)^T
    because x^T Q_i x expanded around m contributes the cross term 2 m^T Q_i y.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (system.n,):
        raise ModelError(f"shift vector must have length {system.n}, got shape {m.shape}")
    L = system.A + 2.0 * np.einsum("ijk,k->ij", system.Q, m)
    c = system.d + system.A @ m + eval_quadratic(system, m)
    return ShiftedSystem(m=_frozen(m), L=_frozen(L), c=_frozen(c))


def eval_shifted_rhs(system: QuadraticSystem, shifted: ShiftedSystem, y: np.ndarray) -> np.ndarray:
    """Evaluate L y + Q(y) + c; equals eval_rhs(system, y + m) identically."""
    y = np.asarray(y, dtype=float)
    return y @ shifted.L.T + eval_quadratic(system, y) + shifted.c


def system_to_dict(system: QuadraticSystem) -> dict:
    return {
        "n": system.n,
        "A": system.A.tolist(),
        "Q": system.Q.tolist(),
        "d": system.d.tolist(),
    }


def system_from_dict(data: dict) -> QuadraticSystem:
    """Build a validated system from the JSON dict form {n, A, Q, d}."""
    try:
        n = int(data["n"])
        A = np.asarray(data["A"], dtype=float)
        Q = np.asarray(data["Q"], dtype=float)
        d = np.asarray(data["d"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed system definition: {exc}") from exc
    return validate(QuadraticSystem(n=n, A=A, Q=Q, d=d))


def load_system(path) -> QuadraticSystem:
    """Load and validate a system from a JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ModelError(f"cannot read system file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"system file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelError(f"system file {path} must contain a JSON object")
    return system_from_dict(data)


def save_system(system: QuadraticSystem, path) -> None:
    with open(path, "w") as fh:
        json.dump(system_to_dict(system), fh, indent=2)
        fh.write("\n")
