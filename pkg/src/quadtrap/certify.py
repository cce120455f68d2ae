"""Solver-free verification of trapping-ellipsoid certificates.

Given a system and a claimed certificate (m, P, r, chi), this module checks
the sufficient conditions for a trapping ellipsoid by plain numerical linear
algebra:
no conic solver is involved, so a passing report is independent evidence
that the optimization pipeline produced a sound object.

Checks, in order:

  a. P is symmetric and positive definite;
  b. the trapping block matrix Theta(m, P, r, chi) has lambda_max <= -eps/2;
  c. P is energy-neutral for the quadratic term: kernel residual
     ||G^T vec(P)|| <= 1e-7 ||P||_F, cross-checked by sampling
     |y^T P Q(y)| <= 1e-8 on random unit vectors;
  d. the Lyapunov derivative V_dot = 2 (x-m)^T P f(x) is strictly negative
     at sampled points on the ellipsoid boundary and on its 2x and 10x
     dilations.

All slacks are computed after normalizing (P, r^2) by lambda_min(P), which
leaves the ellipsoid (and every hypothesis) unchanged but makes the report
invariant under the joint rescaling (t P, t r^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lossless
from .model import QuadraticSystem, eval_rhs, shift

__all__ = [
    "VerificationReport",
    "trapping_lmi_matrix",
    "verify",
]

# Half the pipeline default feasibility margin; certificates are produced
# with Theta <= -eps I, so eps/2 leaves headroom for round-trips.
DEFAULT_EPSILON = 1e-6

_KERNEL_RESIDUAL_RTOL = 1e-7
_SAMPLED_CUBIC_TOL = 1e-8
_SYMMETRY_RTOL = 1e-9


def trapping_lmi_matrix(L: np.ndarray, c: np.ndarray, P: np.ndarray, r: float, chi: float) -> np.ndarray:
    """Assemble Theta = [[P L + L^T P + chi P, P c], [(P c)^T, -chi r^2]]."""
    Pc = (P @ c).reshape(-1, 1)
    top = P @ L + L.T @ P + chi * P
    return np.block([[top, Pc], [Pc.T, np.array([[-chi * float(r) ** 2]])]])


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one verification run: per-check verdicts and worst slacks.

    Slacks are all "distance into the feasible side": every one must be
    nonnegative (strictly positive for the decrease check) on a pass.
    """

    passed: bool
    checks: dict = field(default_factory=dict)
    slacks: dict = field(default_factory=dict)
    normalization: float = 1.0
    samples: int = 0
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": dict(self.checks),
            "slacks": {k: float(v) for k, v in self.slacks.items()},
            "normalization": self.normalization,
            "samples": self.samples,
            "message": self.message,
        }


def _unit_directions(n: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal((samples, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def verify(
    system: QuadraticSystem,
    certificate,
    samples: int = 100,
    epsilon: float = DEFAULT_EPSILON,
    rng_seed: int = 0,
) -> VerificationReport:
    """Check a certificate against the trapping hypotheses; see module docstring.

    ``certificate`` is anything with m, P, r, chi attributes (the pipeline's
    EllipsoidCertificate, or a stand-in for tampering tests). The report never
    raises on a bad certificate; it records which check failed.
    """
    m = np.asarray(certificate.m, dtype=float)
    P = np.asarray(certificate.P, dtype=float)
    r = float(certificate.r)
    chi = float(certificate.chi)
    n = system.n

    checks: dict[str, bool] = {}
    slacks: dict[str, float] = {}

    if m.shape != (n,) or P.shape != (n, n):
        return VerificationReport(
            passed=False,
            checks={"shape": False},
            message=f"certificate shapes {m.shape}/{P.shape} do not match state dimension {n}",
        )

    # -- check (a): symmetric positive definite ------------------------------
    asym = float(np.max(np.abs(P - P.T)))
    sym_ok = asym <= _SYMMETRY_RTOL * max(1.0, float(np.max(np.abs(P))))
    Psym = 0.5 * (P + P.T)
    lam_min = float(np.linalg.eigvalsh(Psym)[0])
    checks["positive_definite"] = sym_ok and lam_min > 0.0 and r > 0.0 and chi > 0.0
    slacks["p_min_eigenvalue"] = lam_min
    if not checks["positive_definite"]:
        return VerificationReport(
            passed=False,
            checks=checks,
            slacks=slacks,
            samples=0,
            message="P is not symmetric positive definite (or r/chi nonpositive)",
        )

    # Joint rescaling (t P, t r^2) leaves the ellipsoid unchanged; normalize
    # so the remaining slacks are scale invariant.
    scale = lam_min
    Phat = Psym / scale
    r2hat = r * r / scale
    rhat = float(np.sqrt(r2hat))

    sh = shift(system, m)

    # -- check (b): trapping LMI strictly negative definite ------------------
    theta = trapping_lmi_matrix(sh.L, sh.c, Phat, rhat, chi)
    lam_max_theta = float(np.linalg.eigvalsh(theta)[-1])
    slacks["lmi_margin"] = -0.5 * epsilon - lam_max_theta
    checks["trapping_lmi"] = lam_max_theta <= -0.5 * epsilon

    # -- check (c): P is admissible for the quadratic term -------------------
    structure = lossless.build_structure(system)
    kernel_residual = lossless.residual(structure, Phat)
    rng = np.random.default_rng(rng_seed)
    y = _unit_directions(n, max(samples, 1), rng)
    cubic = np.einsum("bi,ij,bj->b", y, Phat, np.einsum("bj,ijk,bk->bi", y, system.Q, y))
    sampled_cubic = float(np.max(np.abs(cubic)))
    res_bound = _KERNEL_RESIDUAL_RTOL * float(np.linalg.norm(Phat))
    slacks["kernel_residual"] = res_bound - kernel_residual
    slacks["sampled_cubic"] = _SAMPLED_CUBIC_TOL - sampled_cubic
    checks["energy_neutral"] = kernel_residual <= res_bound and sampled_cubic <= _SAMPLED_CUBIC_TOL

    # -- check (d): Lyapunov decrease on and outside the boundary ------------
    dirs = _unit_directions(n, max(samples, 1), rng)
    ellip_norm = np.sqrt(np.einsum("bi,ij,bj->b", dirs, Phat, dirs))
    boundary = dirs * (rhat / ellip_norm)[:, None]
    worst = np.inf
    for factor in (1.0, 2.0, 10.0):
        x = m + factor * boundary
        vdot = 2.0 * np.einsum("bi,ij,bj->b", x - m, Phat, eval_rhs(system, x))
        worst = min(worst, float(np.min(-vdot)))
    slacks["decrease_margin"] = worst
    checks["boundary_decrease"] = worst > 0.0

    passed = all(checks.values())
    return VerificationReport(
        passed=passed,
        checks=checks,
        slacks=slacks,
        normalization=scale,
        samples=int(samples),
        message="" if passed else "failed: " + ", ".join(k for k, v in checks.items() if not v),
    )
