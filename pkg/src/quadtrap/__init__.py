"""Trapping-ellipsoid certificates of global boundedness for quadratic systems.

The package splits into dynamics (:mod:`~quadtrap.model`), the admissible
inner-product families (:mod:`~quadtrap.lossless`), a checked SDP layer
(:mod:`~quadtrap.conic`), the optimization pipeline
(:mod:`~quadtrap.pipeline`), a solver-free verifier
(:mod:`~quadtrap.certify`) and a Monte-Carlo simulation harness
(:mod:`~quadtrap.sim`). The ``quadtrap`` console script fronts all of it.
"""

from .certify import VerificationReport, verify
from .fixtures import academic2d, build_fixture, lorenz, mls
from .lossless import LosslessStructure, build_structure, check_lossless
from .model import (
    ModelError,
    QuadraticSystem,
    ShiftedSystem,
    eval_quadratic,
    eval_rhs,
    load_system,
    make_system,
    save_system,
    shift,
    validate,
)
from .pipeline import (
    EllipsoidCertificate,
    MethodInapplicableError,
    PipelineConfig,
    PipelineError,
    PipelineReport,
    ShiftSolution,
    goyal_ball_radius,
    load_certificate,
    run_pipeline,
    save_certificate,
)
from .sim import (
    MonteCarloResult,
    SimOptions,
    SimulationDivergence,
    Trajectory,
    check_invariance,
    empirical_ultimate_bound,
    integrate,
)

__version__ = "0.1.0"

__all__ = [
    "ModelError",
    "QuadraticSystem",
    "ShiftedSystem",
    "make_system",
    "validate",
    "eval_quadratic",
    "eval_rhs",
    "shift",
    "load_system",
    "save_system",
    "LosslessStructure",
    "build_structure",
    "check_lossless",
    "PipelineConfig",
    "PipelineError",
    "MethodInapplicableError",
    "EllipsoidCertificate",
    "ShiftSolution",
    "PipelineReport",
    "run_pipeline",
    "goyal_ball_radius",
    "save_certificate",
    "load_certificate",
    "VerificationReport",
    "verify",
    "SimOptions",
    "Trajectory",
    "MonteCarloResult",
    "SimulationDivergence",
    "integrate",
    "check_invariance",
    "empirical_ultimate_bound",
    "lorenz",
    "mls",
    "academic2d",
    "build_fixture",
    "__version__",
]
