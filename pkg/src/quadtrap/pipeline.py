"""Optimization pipeline for trapping ellipsoids.

Stages, each usable on its own and chained by :func:`run_pipeline`:

1. ``optimize_shift``: alternating SDP search for a coordinate shift m that
   makes the shifted linear part uniformly dissipative over the admissible
   inner-product family (certificate exists iff the attained level a* < 0).
2. ``grid_search``: for each chi on a grid, ``ellipsoid_sdp`` minimizes the
   squared radius subject to the trapping block LMI; the sweep keeps the
   point with the smallest spherical radius alpha = r / sqrt(lambda_min(P)).
3. ``gevp_refine``: with (m, P) frozen, bisection on r against a
   one-variable LMI feasibility slice in chi; this is the generalized
   eigenvalue step and never increases r.
4. ``local_shift_search``: one linearized re-centering step (trust region on
   the shift update), re-solve + refine at the new shift, and keep the
   candidate only if its ellipsoid is contained in the incumbent's.

Certificates store (m, P, r, chi) plus derived metrics; soundness is checked
by the separate solver-free ``certify`` module.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import cvxpy as cp
import numpy as np

from . import conic, lossless
from .certify import trapping_lmi_matrix
from .model import QuadraticSystem, shift

__all__ = [
    "PipelineError",
    "MethodInapplicableError",
    "PipelineConfig",
    "EllipsoidCertificate",
    "ShiftSolution",
    "SweepPoint",
    "PipelineReport",
    "optimize_shift",
    "ellipsoid_sdp",
    "grid_search",
    "gevp_refine",
    "local_shift_search",
    "containment_check",
    "goyal_ball_radius",
    "run_pipeline",
    "sweep_to_csv",
    "save_certificate",
    "load_certificate",
]

# Relative bisection tolerance on r for the generalized-eigenvalue stage.
GEVP_REL_TOL = 1e-6

# Positive-definiteness floor for P in the shift subproblem (the trace
# normalization fixes the overall scale, the floor keeps P invertible).
_PD_FLOOR = 1e-6

# Soft constraint mode: largest tolerated kernel-equality residual before a
# solution is rejected as unsound.
_SOFT_RESIDUAL_TOL = 1e-7

# When the -epsilon margin (not P >= I) pins the scale of (P, r^2), the
# radius objective is flat along joint rescalings and the solver can drift to
# lambda_min(P) >> 1, eroding the verifier's scale-normalized margin. A tiny
# trace term resolves that degeneracy toward lambda_min(P) = 1.
_TRACE_REG = 1e-6


class PipelineError(RuntimeError):
    """A pipeline stage could not run as configured."""


class MethodInapplicableError(PipelineError):
    """The construction does not apply to this system (no admissible P, or
    the comparison method's spectral condition fails)."""


def _default_chi_grid() -> tuple:
    return tuple(float(x) for x in np.logspace(-1.0, 1.0, 100))


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the full pipeline; defaults reproduce the reference setup."""

    delta_m: float = 10.0  # shift search radius ||m|| <= delta_m
    epsilon: float = 1e-6  # strictness margin: Theta <= -epsilon I
    chi_grid: tuple = field(default_factory=_default_chi_grid)
    restarts: int = 10
    rng_seed: int = 0
    alternation_tol: float = 1e-8
    alternation_max_iters: int = 100
    constraint_mode: str = "hard"  # "hard" (basis parameterization) or "soft" (equality)
    local_search_trust_radius: float | None = None  # default max(1, 0.5 ||m||)

    def __post_init__(self):
        object.__setattr__(self, "chi_grid", tuple(float(x) for x in self.chi_grid))
        if self.delta_m <= 0:
            raise PipelineError("delta_m must be positive")
        if self.epsilon <= 0:
            raise PipelineError("epsilon must be positive")
        if not self.chi_grid or any(x <= 0 for x in self.chi_grid):
            raise PipelineError("chi_grid must be nonempty with positive entries")
        if self.restarts < 1 or self.alternation_max_iters < 1:
            raise PipelineError("restarts and alternation_max_iters must be at least 1")
        if self.alternation_tol <= 0:
            raise PipelineError("alternation_tol must be positive")
        if self.constraint_mode not in ("hard", "soft"):
            raise PipelineError(f"unknown constraint mode {self.constraint_mode!r}")
        if self.local_search_trust_radius is not None and self.local_search_trust_radius <= 0:
            raise PipelineError("local_search_trust_radius must be positive when set")

    def to_dict(self) -> dict:
        return {
            "delta_m": self.delta_m,
            "epsilon": self.epsilon,
            "chi_grid": list(self.chi_grid),
            "restarts": self.restarts,
            "rng_seed": self.rng_seed,
            "alternation_tol": self.alternation_tol,
            "alternation_max_iters": self.alternation_max_iters,
            "constraint_mode": self.constraint_mode,
            "local_search_trust_radius": self.local_search_trust_radius,
        }


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class EllipsoidCertificate:
    """Trapping-region claim: E = {x : (x - m)^T P (x - m) <= r^2}.

    alpha = r / sqrt(lambda_min(P)) is the radius of the smallest sphere
    containing E (centered at m); ultimate_bound = alpha + ||m|| bounds
    ||x(t)|| for trajectories once inside. Both are recomputed from
    (m, P, r) at construction so they cannot drift out of sync.
    """

    m: np.ndarray
    P: np.ndarray
    r: float
    chi: float
    alpha: float
    ultimate_bound: float
    stage: str
    residuals: dict = field(default_factory=dict)

    @classmethod
    def build(cls, m, P, r, chi, stage, residuals=None) -> "EllipsoidCertificate":
        m = _frozen(m)
        P = _frozen(P)
        lam_min = float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])
        if lam_min <= 0.0:
            raise PipelineError("certificate requires positive definite P")
        alpha = float(r) / float(np.sqrt(lam_min))
        return cls(
            m=m,
            P=P,
            r=float(r),
            chi=float(chi),
            alpha=alpha,
            ultimate_bound=alpha + float(np.linalg.norm(m)),
            stage=str(stage),
            residuals=dict(residuals or {}),
        )

    def rescaled(self, t: float) -> "EllipsoidCertificate":
        """Substitute (P, r^2) -> (t P, t r^2); the ellipsoid is unchanged."""
        if t <= 0:
            raise PipelineError("rescaling factor must be positive")
        return EllipsoidCertificate.build(
            self.m, t * self.P, float(np.sqrt(t)) * self.r, self.chi, self.stage
        )

    def to_dict(self, config: PipelineConfig | None = None, seed: int | None = None) -> dict:
        return {
            "m": self.m.tolist(),
            "P": self.P.tolist(),
            "r": self.r,
            "chi": self.chi,
            "alpha": self.alpha,
            "ultimate_bound": self.ultimate_bound,
            "stage": self.stage,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "config": config.to_dict() if config is not None else None,
            "seed": seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EllipsoidCertificate":
        try:
            return cls.build(
                np.asarray(data["m"], dtype=float),
                np.asarray(data["P"], dtype=float),
                float(data["r"]),
                float(data["chi"]),
                str(data.get("stage", "unknown")),
                residuals=data.get("residuals") or {},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PipelineError(f"malformed certificate: {exc}") from exc


def save_certificate(cert: EllipsoidCertificate, path, config: PipelineConfig | None = None, seed: int | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(cert.to_dict(config=config, seed=seed), fh, indent=2)
        fh.write("\n")


def load_certificate(path) -> EllipsoidCertificate:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise PipelineError(f"cannot read certificate file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PipelineError(f"certificate file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise PipelineError(f"certificate file {path} must contain a JSON object")
    return EllipsoidCertificate.from_dict(data)


@dataclass(frozen=True)
class ShiftSolution:
    """Best point found by the alternating shift search."""

    m: np.ndarray
    P: np.ndarray
    a: float
    iterations: int
    restarts_used: int
    certificate_exists: bool  # a < 0

    def to_dict(self) -> dict:
        return {
            "m": self.m.tolist(),
            "P": self.P.tolist(),
            "a": self.a,
            "iterations": self.iterations,
            "restarts_used": self.restarts_used,
            "certificate_exists": self.certificate_exists,
        }


@dataclass(frozen=True)
class SweepPoint:
    chi: float
    r: float  # nan when infeasible
    alpha: float  # nan when infeasible
    feasible: bool


@dataclass
class PipelineReport:
    """Everything one run produced, in the order the stages ran."""

    status: str  # "certified" | "no-certificate"
    failed_stage: str | None
    message: str
    config: PipelineConfig
    seed: int
    structure_dims: dict
    shift_solution: ShiftSolution | None
    shift_skipped: bool
    sweep: list
    certificates: dict
    final: EllipsoidCertificate | None
    goyal_radius: float | None
    runtime_s: float

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "failed_stage": self.failed_stage,
            "message": self.message,
            "config": self.config.to_dict(),
            "seed": self.seed,
            "structure_dims": dict(self.structure_dims),
            "shift": self.shift_solution.to_dict() if self.shift_solution else None,
            "shift_skipped": self.shift_skipped,
            "sweep": [
                {"chi": p.chi, "r": p.r, "alpha": p.alpha, "feasible": p.feasible}
                for p in self.sweep
            ],
            "certificates": {
                stage: cert.to_dict(config=self.config, seed=self.seed)
                for stage, cert in self.certificates.items()
            },
            "final": self.final.to_dict(config=self.config, seed=self.seed) if self.final else None,
            "goyal_radius": self.goyal_radius,
            "runtime_s": self.runtime_s,
        }


def sweep_to_csv(sweep, path) -> None:
    """Write the chi sweep as CSV with columns chi,r,alpha,feasible."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chi", "r", "alpha", "feasible"])
        for p in sweep:
            writer.writerow([f"{p.chi:.12g}", f"{p.r:.12g}", f"{p.alpha:.12g}", int(p.feasible)])


# ---------------------------------------------------------------------------
# shared subproblem pieces


class _StepFailed(Exception):
    """Internal: one alternation subproblem did not solve cleanly."""


def _lossless_P(prog: conic.ConicProgram, structure, config: PipelineConfig):
    """Attach a P decision variable constrained to the admissible family.

    Hard mode parameterizes P over the symmetric kernel basis (the constraint
    holds exactly by construction); soft mode uses a free symmetric variable
    plus the kernel equality rows. Returns the cvxpy expression and a
    function extracting the numeric P from solved values.
    """
    n = structure.n
    if config.constraint_mode == "hard":
        par = lossless.parameterize_hard(structure)
        theta = prog.vector("theta", par.dim)
        basis_flat = np.stack([B.reshape(-1) for B in par.basis])
        P_expr = cp.reshape(theta @ basis_flat, (n, n), order="C")

        def extract(values) -> np.ndarray:
            return par.assemble(np.atleast_1d(values["theta"]))

    else:
        P_var = prog.sym_matrix("P", n)
        prog.add_eq(structure.G.T @ cp.vec(P_var, order="F"))
        P_expr = P_var

        def extract(values) -> np.ndarray:
            P = np.asarray(values["P"], dtype=float)
            return 0.5 * (P + P.T)

    return P_expr, extract


def _theta_cvx(P_expr, L, c, chi, s_expr, n):
    """Trapping block LMI with cvxpy unknowns; s_expr stands for r^2."""
    top = P_expr @ L + L.T @ P_expr + chi * P_expr
    col = cp.reshape(P_expr @ c, (n, 1), order="F")
    corner = cp.reshape(-chi * s_expr, (1, 1), order="F")
    return cp.bmat([[top, col], [col.T, corner]])


def _make_certificate(system, structure, m, P, r, chi, stage, config) -> EllipsoidCertificate:
    sh = shift(system, m)
    theta = trapping_lmi_matrix(sh.L, sh.c, P, r, chi)
    kernel_vec = structure.G.T @ P.reshape(-1, order="F")
    residuals = {
        "lmi_lambda_max": float(np.linalg.eigvalsh(theta)[-1]),
        "p_lambda_min": float(np.linalg.eigvalsh(0.5 * (P + P.T))[0]),
        "kernel_residual": float(np.linalg.norm(kernel_vec)),
        "kernel_residual_max": float(np.max(np.abs(kernel_vec), initial=0.0)),
        "epsilon": float(config.epsilon),
    }
    return EllipsoidCertificate.build(m, P, r, chi, stage, residuals)


# ---------------------------------------------------------------------------
# stage 1: alternating shift search


def _shift_p_step(system, structure, m, config):
    """Fix m, minimize a over admissible P with trace(P) = n."""
    n = system.n
    sh = shift(system, m)
    prog = conic.ConicProgram("shift-p-step")
    a = prog.scalar("a")
    P_expr, extract = _lossless_P(prog, structure, config)
    prog.add_lmi_nsd(P_expr @ sh.L + sh.L.T @ P_expr - a * np.eye(n))
    prog.add_eq(cp.trace(P_expr) - float(n))
    prog.add_lmi_psd(P_expr - _PD_FLOOR * np.eye(n))
    prog.minimize(a)
    res = conic.solve(prog)
    if res.status != "optimal":
        raise _StepFailed(f"shift P-step {res.status}")
    return float(res.values["a"]), extract(res.values)


def _shift_m_step(system, P, config):
    """Fix P, minimize a over the shift m with ||m|| <= delta_m."""
    n = system.n
    prog = conic.ConicProgram("shift-m-step")
    a = prog.scalar("a")
    mv = prog.vector("m", n)
    rows = [cp.reshape(system.Q[i] @ mv, (1, n), order="F") for i in range(n)]
    L_expr = system.A + 2.0 * cp.vstack(rows)
    prog.add_lmi_nsd(P @ L_expr + L_expr.T @ P - a * np.eye(n))
    prog.add_soc(mv, float(config.delta_m))
    prog.minimize(a)
    res = conic.solve(prog)
    if res.status != "optimal":
        raise _StepFailed(f"shift m-step {res.status}")
    return float(res.values["a"]), np.asarray(res.values["m"], dtype=float)


def _alternate(system, structure, m0, config):
    m = np.asarray(m0, dtype=float)
    a_prev = np.inf
    iterations = 0
    for it in range(1, config.alternation_max_iters + 1):
        _, P = _shift_p_step(system, structure, m, config)
        a, m = _shift_m_step(system, P, config)
        iterations = it
        if abs(a_prev - a) <= config.alternation_tol:
            break
        a_prev = a
    # resync P with the final m so the returned pair is consistent
    a_final, P_final = _shift_p_step(system, structure, m, config)
    return a_final, m, P_final, iterations


def _least_squares_shift(system, delta_m):
    """Shift minimizing ||L(m)||_F, clipped to the admissible ball.

    Solves the linear least-squares problem min_m ||A + 2 S(m)||_F with
    S(m)[i, j] = (Q_i m)_j. This shift cancels as much of the linear
    coupling as the quadratic terms allow and is a strong deterministic
    warm start: the level a(m) is typically minimized in a narrow pocket
    around it that random unit-norm starts cannot reach when the
    alternation stalls on a flat plateau (the fixed-m subproblem then has a
    near-singular minimizer whose following m-subproblem is shift-blind).
    """
    n = system.n
    coeffs = 2.0 * system.Q.reshape(n * n, n)
    m_ls, *_ = np.linalg.lstsq(coeffs, -system.A.reshape(-1), rcond=None)
    norm = float(np.linalg.norm(m_ls))
    if norm > delta_m > 0:
        m_ls = m_ls * (delta_m / norm)
    return m_ls


def optimize_shift(system: QuadraticSystem, structure, config: PipelineConfig) -> ShiftSolution:
    """Alternating SDP search for the dissipativity level a*(m).

    Runs ``restarts`` alternations from deterministic random unit starts,
    plus one from the least-squares shift that minimizes ||L(m)||_F, and
    keeps the lowest level found. a* < 0 certifies that the downstream
    ellipsoid stages can succeed at this shift.
    """
    if config.constraint_mode == "hard" and structure.symmetric_dim == 0:
        raise MethodInapplicableError(
            "no symmetric admissible inner product exists for this system"
        )
    n = system.n
    starts = [_least_squares_shift(system, config.delta_m)]
    for k in range(config.restarts):
        rng = np.random.default_rng([config.rng_seed, k])
        direction = rng.standard_normal(n)
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 0 else np.zeros(n)
        starts.append(direction * min(1.0, config.delta_m))
    best = None
    last_failure = ""
    for m0 in starts:
        try:
            a, m, P, iters = _alternate(system, structure, m0, config)
        except _StepFailed as exc:
            last_failure = str(exc)
            continue
        if best is None or a < best[0]:
            best = (a, m, P, iters)
    if best is None:
        raise MethodInapplicableError(
            f"shift search failed on every restart ({last_failure or 'no solver success'})"
        )
    a, m, P, iters = best
    return ShiftSolution(
        m=_frozen(m),
        P=_frozen(P),
        a=a,
        iterations=iters,
        restarts_used=config.restarts,
        certificate_exists=a < 0.0,
    )


# ---------------------------------------------------------------------------
# stage 2: chi grid of radius-minimizing SDPs


def ellipsoid_sdp(system, structure, m, chi: float, config: PipelineConfig):
    """Minimize r^2 at fixed (m, chi) subject to Theta <= -eps I and P >= I.

    Returns (P, r) on success, None when the slice is infeasible or the
    solution fails its soundness re-checks.
    """
    n = system.n
    sh = shift(system, m)
    prog = conic.ConicProgram("ellipsoid-sdp")
    P_expr, extract = _lossless_P(prog, structure, config)
    s = prog.scalar("s", nonneg=True)
    prog.add_lmi_nsd(_theta_cvx(P_expr, sh.L, sh.c, float(chi), s, n), strict_margin=config.epsilon)
    prog.add_lmi_psd(P_expr - np.eye(n))
    prog.minimize(s + _TRACE_REG * cp.trace(P_expr))
    res = conic.solve(prog)
    if res.status != "optimal":
        return None
    P = extract(res.values)
    if config.constraint_mode == "soft":
        worst = float(np.max(np.abs(structure.G.T @ P.reshape(-1, order="F")), initial=0.0))
        if worst > _SOFT_RESIDUAL_TOL:
            return None
    r = float(np.sqrt(max(float(res.values["s"]), 0.0)))
    return P, r


def grid_search(system, structure, m, config: PipelineConfig):
    """Sweep the chi grid; return (best certificate or None, full sweep).

    "Best" minimizes the spherical radius alpha, not r: alpha is the
    quantity the ultimate bound is built from.
    """
    m = np.asarray(m, dtype=float)
    sweep = []
    best = None
    for chi in config.chi_grid:
        out = ellipsoid_sdp(system, structure, m, chi, config)
        if out is None:
            sweep.append(SweepPoint(chi=float(chi), r=float("nan"), alpha=float("nan"), feasible=False))
            continue
        P, r = out
        lam_min = float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])
        alpha = r / float(np.sqrt(lam_min))
        sweep.append(SweepPoint(chi=float(chi), r=r, alpha=alpha, feasible=True))
        if best is None or alpha < best[0]:
            best = (alpha, float(chi), P, r)
    if best is None:
        return None, sweep
    _, chi_best, P_best, r_best = best
    cert = _make_certificate(system, structure, m, P_best, r_best, chi_best, "grid", config)
    return cert, sweep


# ---------------------------------------------------------------------------
# stage 3: generalized-eigenvalue refinement


def gevp_refine(certificate: EllipsoidCertificate, system, config: PipelineConfig, structure=None) -> EllipsoidCertificate:
    """Bisect r downward at fixed (m, P), checking chi-feasibility each slice.

    Each slice is a one-variable LMI: does some chi >= 0 give
    Theta(m, P, r, chi) <= -eps I? The returned radius is within relative
    tolerance GEVP_REL_TOL of the infimum and never exceeds the input.
    """
    struct = structure if structure is not None else lossless.build_structure(system)
    n = system.n
    sh = shift(system, certificate.m)
    P = np.asarray(certificate.P, dtype=float)
    top_const = P @ sh.L + sh.L.T @ P
    Pc = (P @ sh.c).reshape(n, 1)

    def slice_witness(r: float):
        prog = conic.ConicProgram("gevp-slice")
        chi = prog.scalar("chi", nonneg=True)
        top = top_const + chi * P
        corner = cp.reshape(-chi * float(r * r), (1, 1), order="F")
        theta = cp.bmat([[top, Pc], [Pc.T, corner]])
        prog.add_lmi_nsd(theta, strict_margin=config.epsilon)
        if not conic.lmi_feasible(prog):
            return None
        return float(prog.value("chi"))

    chi_hi = slice_witness(certificate.r)
    if chi_hi is None:
        # input radius sits at (or numerically below) the feasibility boundary
        return replace(certificate, stage="gevp")
    lo, hi, chi_best = 0.0, float(certificate.r), chi_hi
    for _ in range(200):
        if hi - lo <= GEVP_REL_TOL * hi:
            break
        mid = 0.5 * (lo + hi)
        witness = slice_witness(mid)
        if witness is None:
            lo = mid
        else:
            hi, chi_best = mid, witness
    return _make_certificate(system, struct, certificate.m, P, hi, chi_best, "gevp", config)


# ---------------------------------------------------------------------------
# stage 4: local shift refinement


def containment_check(inner: EllipsoidCertificate, outer: EllipsoidCertificate) -> bool:
    """True when inner's ellipsoid provably sits inside outer's.

    Primary route: one-parameter S-procedure LMI. When the solver cannot
    settle it cleanly, fall back to the conservative sphere test: the
    sphere around inner (radius alpha_in) must fit inside the largest
    sphere inscribed in outer (radius r / sqrt(lambda_max(P))). Sufficient
    only, so a True answer stays sound either way.
    """

    def quadric(cert):
        P = np.asarray(cert.P, dtype=float)
        m = np.asarray(cert.m, dtype=float)
        Pm = P @ m
        return np.block([[P, -Pm[:, None]], [-Pm[None, :], np.array([[m @ Pm - cert.r**2]])]])

    prog = conic.ConicProgram("ellipsoid-containment")
    tau = prog.scalar("tau", nonneg=True)
    prog.add_lmi_psd(tau * quadric(inner) - quadric(outer))
    try:
        if conic.lmi_feasible(prog):
            return True
    except conic.ConicError:
        pass
    P_out = np.asarray(outer.P, dtype=float)
    lam_max = float(np.linalg.eigvalsh(0.5 * (P_out + P_out.T))[-1])
    inscribed = float(outer.r) / float(np.sqrt(lam_max))
    slack = float(np.linalg.norm(inner.m - outer.m)) + inner.alpha - inscribed
    return slack <= 1e-12 * max(1.0, inscribed)


def local_shift_search(certificate: EllipsoidCertificate, system, structure, config: PipelineConfig) -> EllipsoidCertificate:
    """Try one re-centering step around the incumbent certificate.

    Step 1 freezes (P, chi), linearizes the shifted offset c(m) in the shift
    update dm (the linearization is exact to first order because L(m) is the
    Jacobian of the right-hand side at m) and minimizes r^2 inside a trust
    region. Step 2 re-solves the full SDP at the new shift and refines it.
    The candidate replaces the incumbent only if it solves, refines, and is
    contained in the incumbent ellipsoid; otherwise the incumbent is kept.
    """
    n = system.n
    m1 = np.asarray(certificate.m, dtype=float)
    P1 = np.asarray(certificate.P, dtype=float)
    chi1 = float(certificate.chi)
    sh1 = shift(system, m1)
    radius = config.local_search_trust_radius
    if radius is None:
        radius = max(1.0, 0.5 * float(np.linalg.norm(m1)))

    prog = conic.ConicProgram("local-shift-step")
    dm = prog.vector("dm", n)
    s = prog.scalar("s", nonneg=True)
    rows = [cp.reshape(system.Q[i] @ dm, (1, n), order="F") for i in range(n)]
    L_expr = sh1.L + 2.0 * cp.vstack(rows)
    c_expr = sh1.c + sh1.L @ dm  # first-order model of c(m1 + dm)
    top = P1 @ L_expr + L_expr.T @ P1 + chi1 * P1
    col = cp.reshape(P1 @ c_expr, (n, 1), order="F")
    corner = cp.reshape(-chi1 * s, (1, 1), order="F")
    prog.add_lmi_nsd(cp.bmat([[top, col], [col.T, corner]]), strict_margin=config.epsilon)
    prog.add_soc(dm, float(radius))
    prog.minimize(s)
    res = conic.solve(prog)
    if res.status != "optimal":
        return certificate

    m2 = m1 + np.asarray(res.values["dm"], dtype=float)
    out = ellipsoid_sdp(system, structure, m2, chi1, config)
    if out is None:
        return certificate
    P2, r2 = out
    candidate = _make_certificate(system, structure, m2, P2, r2, chi1, "local-search", config)
    candidate = gevp_refine(candidate, system, config, structure=structure)
    candidate = replace(candidate, stage="local-search")
    if containment_check(candidate, certificate):
        return candidate
    return certificate


# ---------------------------------------------------------------------------
# comparison ball


def goyal_ball_radius(system, S, m) -> float:
    """Radius of the comparison trapping ball 2 ||S c(m)|| / |lambda_1|.

    lambda_1 = lambda_max(S L(m) + L(m)^T S) must be negative; otherwise the
    comparison construction does not apply and MethodInapplicableError is
    raised.
    """
    S = np.asarray(S, dtype=float)
    m = np.asarray(m, dtype=float)
    sh = shift(system, m)
    H = S @ sh.L + sh.L.T @ S
    lam1 = float(np.linalg.eigvalsh(0.5 * (H + H.T))[-1])
    if lam1 >= 0.0:
        raise MethodInapplicableError(
            f"comparison ball needs lambda_max(S L + L^T S) < 0, got {lam1:.3e}"
        )
    return float(2.0 * np.linalg.norm(S @ sh.c) / abs(lam1))


# ---------------------------------------------------------------------------
# full pipeline


def run_pipeline(system: QuadraticSystem, config: PipelineConfig | None = None, fixed_shift=None) -> PipelineReport:
    """Run all stages in order and collect every artifact into one report.

    ``fixed_shift`` skips the alternating search and pins m (useful when the
    shift is known, e.g. an equilibrium). A no-certificate outcome is a
    regular report with the failing stage named, not an exception.
    """
    config = config if config is not None else PipelineConfig()
    t0 = time.perf_counter()
    structure = lossless.build_structure(system)
    dims = {"general": structure.general_dim, "symmetric": structure.symmetric_dim}

    state = {
        "shift_solution": None,
        "sweep": [],
        "certificates": {},
        "final": None,
        "goyal": None,
    }

    def report(status, failed_stage=None, message=""):
        return PipelineReport(
            status=status,
            failed_stage=failed_stage,
            message=message,
            config=config,
            seed=config.rng_seed,
            structure_dims=dims,
            shift_solution=state["shift_solution"],
            shift_skipped=fixed_shift is not None,
            sweep=state["sweep"],
            certificates=state["certificates"],
            final=state["final"],
            goyal_radius=state["goyal"],
            runtime_s=time.perf_counter() - t0,
        )

    if fixed_shift is not None:
        m_star = np.asarray(fixed_shift, dtype=float)
        if m_star.shape != (system.n,):
            raise PipelineError(f"fixed shift must have length {system.n}")
    else:
        try:
            state["shift_solution"] = optimize_shift(system, structure, config)
        except MethodInapplicableError as exc:
            return report("no-certificate", failed_stage="shift", message=str(exc))
        if not state["shift_solution"].certificate_exists:
            return report(
                "no-certificate",
                failed_stage="shift",
                message=f"alternating search reached a = {state['shift_solution'].a:.6e} >= 0",
            )
        m_star = state["shift_solution"].m

    grid_cert, sweep = grid_search(system, structure, m_star, config)
    state["sweep"] = sweep
    if grid_cert is None:
        return report("no-certificate", failed_stage="grid", message="no feasible point on the chi grid")
    state["certificates"]["grid"] = grid_cert

    gevp_cert = gevp_refine(grid_cert, system, config, structure=structure)
    state["certificates"]["gevp"] = gevp_cert

    final = local_shift_search(gevp_cert, system, structure, config)
    if final.stage == "local-search":
        state["certificates"]["local-search"] = final
    state["final"] = final

    try:
        state["goyal"] = goyal_ball_radius(system, final.P, final.m)
    except MethodInapplicableError:
        state["goyal"] = None

    return report("certified")
