"""Named example systems used in tests, docs and the CLI.

Each builder returns a validated :class:`~quadtrap.model.QuadraticSystem`.
``REFERENCE_RESULTS`` holds reference spherical trapping radii for the
comparison printout; the airfoil entry is comparison-only (the reduced
order model's matrices are not reproduced here).
"""

from __future__ import annotations

import numpy as np

from .model import QuadraticSystem, make_system

__all__ = ["lorenz", "mls", "academic2d", "FIXTURES", "REFERENCE_RESULTS", "build_fixture"]


def lorenz(sigma: float = 10.0, rho: float = 28.0, eta: float = 8.0 / 3.0) -> QuadraticSystem:
    """Lorenz attractor: x1' = sigma (x2 - x1), x2' = rho x1 - x2 - x1 x3,
    x3' = x1 x2 - eta x3."""
    A = np.array([
        [-sigma, sigma, 0.0],
        [rho, -1.0, 0.0],
        [0.0, 0.0, -eta],
    ])
    Q = np.zeros((3, 3, 3))
    Q[1, 0, 2] = Q[1, 2, 0] = -0.5  # -x1 x3
    Q[2, 0, 1] = Q[2, 1, 0] = 0.5  # x1 x2
    return make_system(A, Q)


def mls() -> QuadraticSystem:
    """Modified Lorenz-Stenflo system, four states, fixed coefficients.

    x1' = 2 (x2 - x1) + 1.5 x4
    x2' = 26 x1 - x1 x3 - x2
    x3' = 2 x1 x2 - 0.7 x3
    x4' = -x1 - 2 x4

    The quadratic term is not energy-neutral for the identity, but admits a
    four-parameter symmetric family; that is what makes this system a good
    stress case for the generalized analysis.
    """
    sigma, kappa, beta, gamma = 2.0, 0.7, 26.0, 1.5
    A = np.array([
        [-sigma, sigma, 0.0, gamma],
        [beta, -1.0, 0.0, 0.0],
        [0.0, 0.0, -kappa, 0.0],
        [-1.0, 0.0, 0.0, -sigma],
    ])
    Q = np.zeros((4, 4, 4))
    Q[1, 0, 2] = Q[1, 2, 0] = -0.5  # -x1 x3
    Q[2, 0, 1] = Q[2, 1, 0] = 1.0  # 2 x1 x2
    return make_system(A, Q)


def academic2d() -> QuadraticSystem:
    """Two-state example with a globally asymptotically stable equilibrium.

    x1' = -x1 - x1 x2,  x2' = -4 x2 + x1^2 + 1; the equilibrium sits at
    (0, 0.25) and the only admissible symmetric inner product is the
    identity (up to scale).
    """
    A = np.array([
        [-1.0, 0.0],
        [0.0, -4.0],
    ])
    Q = np.zeros((2, 2, 2))
    Q[0, 0, 1] = Q[0, 1, 0] = -0.5  # -x1 x2
    Q[1, 0, 0] = 1.0  # x1^2
    return make_system(A, Q, d=np.array([0.0, 1.0]))


FIXTURES = {
    "lorenz": lorenz,
    "mls": mls,
    "academic2d": academic2d,
}

# Published spherical trapping radii / ultimate bounds for comparison output.
REFERENCE_RESULTS = {
    "mls": {"prior_radius": None, "proposed_radius": 25.721, "ultimate_bound": 50.94},
    "academic2d": {"prior_radius": 0.289, "proposed_radius": 7.07e-4, "ultimate_bound": None},
    "airfoil": {"prior_radius": 1637.56, "prior_ultimate_bound": 2031.3, "proposed_ultimate_bound": 480.6},
}


def build_fixture(name: str, **params) -> QuadraticSystem:
    """Look up a fixture builder by name; raises KeyError on unknown names."""
    try:
        builder = FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(sorted(FIXTURES))}") from None
    return builder(**params)
