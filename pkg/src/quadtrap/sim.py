"""Trajectory integration and Monte-Carlo falsification of trapping claims.

The integrator is an embedded Dormand-Prince 4(5) pair with FSAL, stepping a
whole batch of trajectories in lockstep. The accept/reject test uses the
*maximum* over per-trajectory RMS error norms, so sharing steps across a
batch can only shorten steps; every trajectory individually meets the
requested tolerances. That is what makes 1000-trial Monte-Carlo sweeps cheap
enough to run in tests while staying honest about accuracy.

State norms here are Euclidean. A trajectory whose norm passes 1e12 is
treated as numerically divergent: single integrations come back flagged,
Monte-Carlo sweeps raise, because a divergent trial falsifies a boundedness
claim and must never be averaged away.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import QuadraticSystem, eval_rhs

__all__ = [
    "SimError",
    "SimulationDivergence",
    "SimOptions",
    "Trajectory",
    "InvarianceResult",
    "MonteCarloResult",
    "integrate",
    "check_invariance",
    "empirical_ultimate_bound",
    "trajectory_to_csv",
]

BLOWUP_NORM = 1e12
# A step underflow with the state this large means the controller is chasing a
# finite-time singularity; a smooth quadratic field at this norm never forces
# steps below the underflow guard on its own.
_UNDERFLOW_ESCAPE_NORM = 1e6

# Dormand-Prince coefficients; row 7 of the A-table equals the 5th-order
# weights (FSAL), so stage 7 doubles as the first stage of the next step.
_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = (3 / 40, 9 / 40)
_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_A[6, :6] = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_ERR_WEIGHTS = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class SimError(RuntimeError):
    """Integration could not proceed (step underflow, bad options)."""


class SimulationDivergence(SimError):
    """A trajectory exceeded the blow-up norm during a Monte-Carlo sweep."""

    def __init__(self, message, trial=None, t=None, x0=None):
        super().__init__(message)
        self.trial = trial
        self.t = t
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float)


class _BlowUp(Exception):
    """Internal: lockstep batch hit the blow-up norm; carries which trials."""

    def __init__(self, t, mask, level=BLOWUP_NORM):
        super().__init__(f"state norm exceeded {level:g} at t = {t:.6g}")
        self.t = t
        self.mask = mask


@dataclass(frozen=True)
class SimOptions:
    """Integration and Monte-Carlo settings."""

    horizon: float = 200.0
    rtol: float = 1e-8
    atol: float = 1e-10
    tail_fraction: float = 0.5  # statistics over the final fraction of the horizon
    trials: int = 1000
    init_half_width: float = 100.0  # initial states drawn uniformly from [-w, w]^n
    rng_seed: int = 0
    max_step: float | None = None  # default horizon / 400, keeps tail sampling dense

    def __post_init__(self):
        if self.horizon <= 0:
            raise SimError("horizon must be positive")
        if self.rtol <= 0 or self.atol <= 0:
            raise SimError("tolerances must be positive")
        if not 0.0 < self.tail_fraction < 1.0:
            raise SimError("tail_fraction must lie in (0, 1)")
        if self.trials < 1:
            raise SimError("trials must be at least 1")
        if self.init_half_width <= 0:
            raise SimError("init_half_width must be positive")
        if self.max_step is not None and self.max_step <= 0:
            raise SimError("max_step must be positive when set")

    @property
    def effective_max_step(self) -> float:
        return self.max_step if self.max_step is not None else self.horizon / 400.0

    @property
    def tail_start(self) -> float:
        return self.horizon * (1.0 - self.tail_fraction)


@dataclass(frozen=True)
class Trajectory:
    """Accepted integration steps of a single trajectory."""

    t: np.ndarray  # (K,), strictly increasing
    x: np.ndarray  # (K, n)
    diverged: bool
    stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class InvarianceResult:
    """Did a trajectory stay inside the ellipsoid after first entering it?"""

    entered: bool
    passed: bool  # vacuously true when the trajectory never entered
    entry_time: float | None
    violation_time: float | None
    max_level_after_entry: float  # max V / r^2 after entry, nan if never entered


@dataclass(frozen=True)
class MonteCarloResult:
    """Empirical ultimate bound over a batch of random initial conditions."""

    bound: float  # max over trials of the tail-window max of ||x(t)||
    per_trial_max: np.ndarray
    tail_start: float
    trials: int
    rng_seed: int
    entered_count: int | None = None  # only when a certificate was supplied
    violations: tuple = ()  # (trial, time) pairs of invariance breaks

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "per_trial_max": self.per_trial_max.tolist(),
            "tail_start": self.tail_start,
            "trials": self.trials,
            "rng_seed": self.rng_seed,
            "entered_count": self.entered_count,
            "violations": [list(v) for v in self.violations],
        }


def _rms_by_trial(values: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(values * values, axis=-1))


def _initial_step(rhs, X, f, rtol, atol, span, max_step) -> float:
    """Standard two-derivative heuristic, taken over the worst trial."""
    scale = atol + rtol * np.abs(X)
    d0 = float(np.max(_rms_by_trial(X / scale), initial=0.0))
    d1 = float(np.max(_rms_by_trial(f / scale), initial=0.0))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span, max_step)
    f1 = rhs(X + h0 * f)
    d2 = float(np.max(_rms_by_trial((f1 - f) / scale), initial=0.0)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span, max_step)


def _propagate(rhs, t0, t1, X0, rtol, atol, observer, max_step=np.inf) -> dict:
    """Advance the whole batch from t0 to t1, reporting accepted steps.

    ``observer(t, X)`` is called at t0 and after every accepted step. Raises
    _BlowUp as soon as any trial's norm passes BLOWUP_NORM.
    """
    span = t1 - t0
    t = float(t0)
    X = np.array(X0, dtype=float)
    observer(t, X)
    f = rhs(X)
    h = _initial_step(rhs, X, f, rtol, atol, span, max_step)
    stats = {"steps": 0, "rejected": 0, "rhs_evals": 2}
    K = np.empty((7,) + X.shape)
    while t1 - t > 1e-12 * max(span, 1.0):
        h = min(h, max_step, t1 - t)
        if h < 1e-14 * max(span, 1.0):
            # Near a finite-time singularity the error controller drives h to
            # zero before the norm can cross BLOWUP_NORM, so a collapsed step
            # with an already enormous state is an escape, not a solver fault.
            norms = np.linalg.norm(X, axis=-1)
            if np.any(norms >= _UNDERFLOW_ESCAPE_NORM):
                raise _BlowUp(t, norms >= _UNDERFLOW_ESCAPE_NORM, level=_UNDERFLOW_ESCAPE_NORM)
            raise SimError(f"step size underflow at t = {t:.6g}")
        K[0] = f
        for i in range(1, 6):
            K[i] = rhs(X + h * np.tensordot(_A[i, :i], K[:i], axes=1))
        X_new = X + h * np.tensordot(_A[6, :6], K[:6], axes=1)
        K[6] = rhs(X_new)
        stats["rhs_evals"] += 6
        err_vec = h * np.tensordot(_ERR_WEIGHTS, K, axes=1)
        scale = atol + rtol * np.maximum(np.abs(X), np.abs(X_new))
        err = float(np.max(_rms_by_trial(err_vec / scale), initial=0.0))
        if err <= 1.0:
            t = t1 if t1 - (t + h) <= 1e-12 * max(span, 1.0) else t + h
            X = X_new
            f = K[6]
            stats["steps"] += 1
            norms = np.linalg.norm(X, axis=-1)
            if np.any(norms > BLOWUP_NORM):
                raise _BlowUp(t, norms > BLOWUP_NORM)
            observer(t, X)
            factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
            h *= max(_MIN_FACTOR, factor)
        else:
            stats["rejected"] += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
    return stats


def integrate(system: QuadraticSystem, x0, options: SimOptions) -> Trajectory:
    """Integrate one trajectory over [0, horizon] at the requested tolerances.

    Divergence does not raise here: the partial trajectory comes back with
    ``diverged=True`` so callers can inspect how the state escaped.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.n,):
        raise SimError(f"initial state must have length {system.n}, got shape {x0.shape}")
    ts: list[float] = []
    xs: list[np.ndarray] = []

    def observer(t, X):
        ts.append(t)
        xs.append(X[0].copy())

    rhs = lambda X: eval_rhs(system, X)
    diverged = False
    stats: dict = {}
    try:
        stats = _propagate(
            rhs, 0.0, options.horizon, x0[None, :], options.rtol, options.atol,
            observer, max_step=options.effective_max_step,
        )
    except _BlowUp as exc:
        diverged = True
        stats = {"blowup_time": exc.t}
    return Trajectory(t=np.asarray(ts), x=np.asarray(xs), diverged=diverged, stats=stats)


def check_invariance(trajectory: Trajectory, certificate, tol: float = 1e-6) -> InvarianceResult:
    """Check V(x(t)) <= r^2 (1 + tol) for all samples after first entry.

    V is the certificate's quadratic level (x - m)^T P (x - m). A trajectory
    that never enters passes vacuously, with ``entered=False`` making that
    explicit.
    """
    m = np.asarray(certificate.m, dtype=float)
    P = np.asarray(certificate.P, dtype=float)
    r2 = float(certificate.r) ** 2
    y = trajectory.x - m
    level = np.einsum("bi,ij,bj->b", y, P, y)
    inside = level <= r2
    if not np.any(inside):
        return InvarianceResult(
            entered=False, passed=True, entry_time=None, violation_time=None,
            max_level_after_entry=float("nan"),
        )
    k0 = int(np.argmax(inside))
    after = level[k0:]
    max_ratio = float(np.max(after) / r2)
    bad = after > r2 * (1.0 + tol)
    if np.any(bad):
        kv = k0 + int(np.argmax(bad))
        return InvarianceResult(
            entered=True, passed=False, entry_time=float(trajectory.t[k0]),
            violation_time=float(trajectory.t[kv]), max_level_after_entry=max_ratio,
        )
    return InvarianceResult(
        entered=True, passed=True, entry_time=float(trajectory.t[k0]),
        violation_time=None, max_level_after_entry=max_ratio,
    )


_MC_CHUNK = 256


def empirical_ultimate_bound(system: QuadraticSystem, options: SimOptions, certificate=None) -> MonteCarloResult:
    """Monte-Carlo estimate of the ultimate bound from random initial states.

    Each trial starts uniformly in [-w, w]^n (trial j uses its own seed
    stream derived from (rng_seed, j), so results do not depend on batch
    layout). The statistic per trial is the max of ||x(t)|| over the tail
    window; the reported bound is the max over trials. Supplying a
    certificate additionally streams the invariance check V <= r^2 (1+1e-6)
    after first entry for every trial. Any divergent trial raises
    SimulationDivergence naming the offending initial condition.
    """
    n = system.n
    tail_start = options.tail_start
    rhs = lambda X: eval_rhs(system, X)

    if certificate is not None:
        m_c = np.asarray(certificate.m, dtype=float)
        P_c = np.asarray(certificate.P, dtype=float)
        r2_c = float(certificate.r) ** 2

    per_trial_max = np.zeros(options.trials)
    entered = np.zeros(options.trials, dtype=bool)
    violated = np.zeros(options.trials, dtype=bool)
    violations: list[tuple] = []

    for start in range(0, options.trials, _MC_CHUNK):
        stop = min(start + _MC_CHUNK, options.trials)
        idx = np.arange(start, stop)
        X0 = np.stack([
            np.random.default_rng([options.rng_seed, int(j)]).uniform(
                -options.init_half_width, options.init_half_width, n
            )
            for j in idx
        ])
        tail_max = np.zeros(len(idx))

        def observer(t, X):
            if t >= tail_start:
                np.maximum(tail_max, np.linalg.norm(X, axis=-1), out=tail_max)
            if certificate is not None:
                y = X - m_c
                level = np.einsum("bi,ij,bj->b", y, P_c, y)
                newly_bad = entered[idx] & ~violated[idx] & (level > r2_c * (1.0 + 1e-6))
                for b in np.nonzero(newly_bad)[0]:
                    violations.append((int(idx[b]), float(t)))
                    violated[idx[b]] = True
                entered[idx] |= level <= r2_c

        try:
            _propagate(
                rhs, 0.0, options.horizon, X0, options.rtol, options.atol,
                observer, max_step=options.effective_max_step,
            )
        except _BlowUp as exc:
            trial = int(idx[np.argmax(exc.mask)])
            raise SimulationDivergence(
                f"trial {trial} diverged at t = {exc.t:.6g} "
                f"(initial state {np.array2string(X0[trial - start], precision=6)})",
                trial=trial, t=exc.t, x0=X0[trial - start],
            ) from None
        per_trial_max[idx] = tail_max

    return MonteCarloResult(
        bound=float(np.max(per_trial_max)),
        per_trial_max=per_trial_max,
        tail_start=tail_start,
        trials=options.trials,
        rng_seed=options.rng_seed,
        entered_count=int(np.count_nonzero(entered)) if certificate is not None else None,
        violations=tuple(violations),
    )


def trajectory_to_csv(trajectory: Trajectory, path) -> None:
    """Write samples as CSV with columns t, x1, ..., xn."""
    n = trajectory.x.shape[1] if trajectory.x.ndim == 2 else 0
    header = ",".join(["t"] + [f"x{i + 1}" for i in range(n)])
    data = np.column_stack([trajectory.t, trajectory.x])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12g")
