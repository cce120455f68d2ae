"""Inner-product matrices under which the quadratic term is energy-neutral.

For a quadratic map Q the cubic form y^T S Q(y) is linear in the matrix S.
Collecting its coefficients over all degree-3 monomials y_i y_k y_l gives a
matrix G of shape (n^2, M) with

    y^T S Q(y) = 0 for all y    <=>    G^T vec(S) = 0,

so the admissible S form a linear subspace: the kernel of G^T. This module
builds G, extracts orthonormal bases of that kernel (over all matrices and
over symmetric matrices), and checks candidate matrices against it.

Monomial ordering: sorted index triples i <= k <= l enumerated by
``itertools.combinations_with_replacement(range(n), 3)``, i.e. lexicographic
order (every monomial has degree 3, so graded-lex coincides with plain lex).
vec() is column-major throughout: vec(S)[i + j*n] = S[i, j].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy.linalg import null_space

from .model import QuadraticSystem, eval_quadratic

__all__ = [
    "LosslessError",
    "MonomialBasis",
    "LosslessStructure",
    "LosslessCheck",
    "HardParameterization",
    "cubic_monomials",
    "coefficient_matrix",
    "build_structure",
    "residual",
    "check_lossless",
    "parameterize_hard",
]

# Relative singular-value cutoff for all kernel computations in this module.
NULLSPACE_RTOL = 1e-9


class LosslessError(ValueError):
    """No admissible matrix family, or a malformed candidate."""


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered degree-3 monomials in n variables, as sorted index triples."""

    n: int
    triples: tuple
    position: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.triples)


def cubic_monomials(n: int) -> MonomialBasis:
    """Enumerate the C(n+2, 3) cubic monomials in the documented order."""
    triples = tuple(combinations_with_replacement(range(n), 3))
    return MonomialBasis(n=n, triples=triples, position={t: k for k, t in enumerate(triples)})


def coefficient_matrix(system: QuadraticSystem, monomials: MonomialBasis | None = None) -> np.ndarray:
    """Build G with G^T vec(S) = coefficients of y^T S Q(y) per monomial.

    Entry bookkeeping: the term S[i, j] * Q[j][k, l] * y_i y_k y_l lands in
    row i + j*n (column-major vec) and the column of the sorted triple
    (i, k, l).
    """
    n = system.n
    mono = monomials or cubic_monomials(n)
    G = np.zeros((n * n, mono.size))
    pos = mono.position
    for j in range(n):
        Qj = system.Q[j]
        for i in range(n):
            row = i + j * n
            for k in range(n):
                for l in range(n):
                    coeff = Qj[k, l]
                    if coeff != 0.0:
                        G[row, pos[tuple(sorted((i, k, l)))]] += coeff
    return G


def _symmetric_vec_basis(n: int) -> np.ndarray:
    """Columns: vec of an orthonormal (trace inner product) symmetric basis.

    E_ii = e_i e_i^T and E_ij = (e_i e_j^T + e_j e_i^T) / sqrt(2) for i < j.
    """
    cols = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            cols.append(E.reshape(-1, order="F"))
    return np.column_stack(cols)


def _unvec(v: np.ndarray, n: int) -> np.ndarray:
    return v.reshape((n, n), order="F")


@dataclass(frozen=True)
class LosslessStructure:
    """Kernel description of the admissible inner-product matrices.

    ``general_basis`` spans {S : y^T S Q(y) = 0 for all y} over all n x n
    matrices; ``symmetric_basis`` spans its intersection with the symmetric
    matrices. Both bases are orthonormal under the trace inner product.
    """

    n: int
    monomials: MonomialBasis
    G: np.ndarray
    general_basis: tuple
    symmetric_basis: tuple

    @property
    def general_dim(self) -> int:
        return len(self.general_basis)

    @property
    def symmetric_dim(self) -> int:
        return len(self.symmetric_basis)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "general_dim": self.general_dim,
            "symmetric_dim": self.symmetric_dim,
            "general_basis": [B.tolist() for B in self.general_basis],
            "symmetric_basis": [B.tolist() for B in self.symmetric_basis],
        }


def build_structure(system: QuadraticSystem) -> LosslessStructure:
    """Compute G and orthonormal kernel bases for ``system``.

    Kernels come from SVD with singular values below NULLSPACE_RTOL times the
    largest treated as zero. The symmetric family is computed by restricting
    G^T to the symmetric subspace first (not by symmetrizing general kernel
    elements, which could miss solutions).
    """
    n = system.n
    mono = cubic_monomials(n)
    G = coefficient_matrix(system, mono)

    GT = G.T  # (M, n^2), rows are monomial constraints
    scale = np.linalg.norm(GT, 2) if GT.size else 0.0
    if scale == 0.0:
        general = np.eye(n * n)
    else:
        general = null_space(GT, rcond=NULLSPACE_RTOL)

    K = _symmetric_vec_basis(n)  # (n^2, n(n+1)/2), orthonormal columns
    GTK = GT @ K
    if np.linalg.norm(GTK, 2) == 0.0:
        theta = np.eye(K.shape[1])
    else:
        theta = null_space(GTK, rcond=NULLSPACE_RTOL)

    general_basis = tuple(_frozen(_unvec(general[:, k], n)) for k in range(general.shape[1]))
    symmetric_basis = tuple(_frozen(_unvec(K @ theta[:, k], n)) for k in range(theta.shape[1]))
    G.flags.writeable = False
    return LosslessStructure(
        n=n,
        monomials=mono,
        G=G,
        general_basis=general_basis,
        symmetric_basis=symmetric_basis,
    )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def residual(structure: LosslessStructure, S: np.ndarray) -> float:
    """Euclidean norm of G^T vec(S), zero iff S is admissible."""
    S = np.asarray(S, dtype=float)
    if S.shape != (structure.n, structure.n):
        raise LosslessError(f"candidate must be {structure.n}x{structure.n}, got {S.shape}")
    return float(np.linalg.norm(structure.G.T @ S.reshape(-1, order="F")))


@dataclass(frozen=True)
class LosslessCheck:
    ok: bool
    residual: float
    sampled_max: float  # max |y^T S Q(y)| over random unit y, a solver-free cross-check


def check_lossless(
    system: QuadraticSystem,
    S: np.ndarray,
    tol: float = 1e-9,
    structure: LosslessStructure | None = None,
    samples: int = 100,
) -> LosslessCheck:
    """Decide whether y^T S Q(y) vanishes identically, up to tol * ||S||_F.

    The verdict comes from the kernel residual; the sampled cubic maximum is
    reported alongside as an independent cross-check (it stays at the same
    scale as the residual for admissible S and is strictly positive for
    inadmissible ones).
    """
    S = np.asarray(S, dtype=float)
    struct = structure or build_structure(system)
    res = residual(struct, S)
    rng = np.random.default_rng(0)
    y = rng.standard_normal((samples, system.n))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    cubic = np.einsum("bi,ij,bj->b", y, S, eval_quadratic(system, y))
    sampled = float(np.max(np.abs(cubic))) if samples else 0.0
    ok = res <= tol * max(np.linalg.norm(S), np.finfo(float).tiny)
    if np.linalg.norm(S) == 0.0:
        ok = True
    return LosslessCheck(ok=bool(ok), residual=res, sampled_max=sampled)


@dataclass(frozen=True)
class HardParameterization:
    """Map theta -> sum_k theta_k B_k over the symmetric admissible family."""

    basis: tuple

    @property
    def dim(self) -> int:
        return len(self.basis)

    def assemble(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise LosslessError(f"expected {self.dim} coordinates, got shape {theta.shape}")
        return np.einsum("k,kij->ij", theta, np.stack(self.basis))


def parameterize_hard(structure: LosslessStructure) -> HardParameterization:
    """Return the symmetric-family parameterization used by the hard constraint mode.

    Raises LosslessError when the family is trivial: with no admissible
    symmetric matrix at all there is nothing to optimize over.
    """
    if structure.symmetric_dim == 0:
        raise LosslessError(
            "the quadratic term admits no symmetric energy-neutral inner product; "
            "the trapping-region construction does not apply to this system"
        )
    return HardParameterization(basis=structure.symmetric_basis)
