"""Gaussian sketching and the stabilized randomized Nystrom factorization.

The factorization route never forms (Omega^T A Omega)^{-1}: a thin QR of
the sketch image, a truncated pivoted Cholesky of the small Gram matrix,
and a triangular solve produce A_nys = U_hat diag(eigvals) U_hat^T.  The
numerical rank reported by the pivoted Cholesky is the single source of
truth for rank deficiency.

Leave-one-out downdates reduce to eigendecompositions of k x k
diagonal-minus-rank-one matrices; ``loo_downdate`` computes one through
the stable factored route.
"""

from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .lakernels import (
    PivotedCholesky,
    cholp,
    dpr1_downdate_eig,
    thin_qr,
    thin_svd,
    tri_solve_right,
    Dpr1Eig,
)
from .randomness import generator

#: relative clamp for roundoff negatives in downdated spectra
NEGATIVE_CLAMP_REL = 1e-12


class RankContractError(ValueError):
    """A full-rank-only operation was called on a rank-deficient factorization."""


@dataclass
class SketchPair:
    """Gaussian test matrix Omega and its image Y = A Omega."""

    omega: np.ndarray
    y: np.ndarray
    seed: int
    matvec_units: int

    @property
    def n(self):
        return self.omega.shape[0]

    @property
    def k(self):
        return self.omega.shape[1]

    def drop_column(self, i):
        """The sketch with column i removed (no new matvecs)."""
        keep = [j for j in range(self.k) if j != i]
        return SketchPair(self.omega[:, keep], self.y[:, keep], self.seed,
                          self.matvec_units)

    def permuted(self, perm):
        """The sketch with its columns reordered (for exchangeability tests)."""
        perm = np.asarray(perm)
        return SketchPair(self.omega[:, perm], self.y[:, perm], self.seed,
                          self.matvec_units)


def gaussian_sketch(op, k, seed):
    """Draw a standard Gaussian n x k test matrix and apply the operator.

    Deterministic given (seed, n, k); see ``randomness`` for the
    generator contract.
    """
    if not 1 <= k <= op.dim:
        raise ValueError(f"sketch size k={k} outside [1, {op.dim}]")
    omega = generator(seed).standard_normal((op.dim, k))
    y = op.apply(omega)
    return SketchPair(omega, y, seed, k * op.matvec_cost)


@dataclass
class NystromFactorization:
    """Output of the stabilized factorization.

    A_nys = u_hat diag(eigvals) u_hat^T with u_hat orthonormal; the
    auxiliary factors (chol, u_tilde, z) feed the leave-one-out
    machinery.
    """

    eigvals: np.ndarray
    u_hat: np.ndarray
    chol: PivotedCholesky
    u_tilde: np.ndarray
    z: np.ndarray
    rank: int
    sketch: SketchPair

    @property
    def k(self):
        return self.sketch.k

    @property
    def full_rank(self):
        return self.rank == self.sketch.k

    def trace(self):
        return float(np.sum(self.eigvals))

    def quadratic_form(self, vectors, fvals=None):
        """v_j^T g(A_nys) v_j per column, with g = identity or diag values."""
        proj = self.u_hat.T @ vectors
        weights = self.eigvals if fvals is None else fvals
        return np.einsum("ij,ij->j", proj, weights[:, None] * proj)

    def reconstruct_dense(self):
        return (self.u_hat * self.eigvals) @ self.u_hat.T


def nys_svd(sketch, stop_tolerance=None):
    """Stabilized Nystrom factorization of a sketch pair.

    Thin QR of Y, truncated pivoted Cholesky of Omega^T Y, a
    permutation-aware triangular solve Z = R / C, and a thin SVD of Z.
    An indefiniteness error from the Cholesky signals a non-PSD
    operator.
    """
    omega, y = sketch.omega, sketch.y
    q, r = thin_qr(y)
    gram = omega.T @ y
    chol = cholp((gram + gram.T) / 2.0, stop_tolerance=stop_tolerance)
    rank = chol.rank
    # Z = R / C with the pivot permutation applied to R's columns
    z = tri_solve_right(r[:, chol.perm[:rank]], chol.leading)
    u_tilde, sig = thin_svd(z)
    return NystromFactorization(
        eigvals=sig ** 2,
        u_hat=q @ u_tilde,
        chol=chol,
        u_tilde=u_tilde,
        z=z,
        rank=rank,
        sketch=sketch,
    )


def clamp_downdate_eigvals(values, top):
    """Zero out roundoff negatives; anything below the clamp is an error."""
    return specfun._clamp(values, top if top > 0 else 1.0)


@dataclass
class DowndateResult:
    """Leave-one-out downdate A_{-i} = u_hat (diag(eigvals) - b b^T) u_hat^T."""

    index: int
    b: np.ndarray
    eig: Dpr1Eig

    @property
    def eigvals(self):
        return self.eig.eigvals

    @property
    def eigvecs(self):
        return self.eig.eigvecs


def loo_position(fact, i):
    """Position of sketch column i in the pivoted Cholesky ordering."""
    pos = np.nonzero(fact.chol.perm == i)[0]
    if pos.size != 1:
        raise ValueError(f"column {i} not found in the pivot permutation")
    return int(pos[0])


def loo_direction(fact, i):
    """Unit vector s_i = C^{-T} P^T e_i / ||.|| of the rank-one downdate."""
    k = fact.k
    e = np.zeros(k)
    e[loo_position(fact, i)] = 1.0
    # row solve: e^T C^{-1} = (C^{-T} e)^T
    s = tri_solve_right(e[None, :], fact.chol.leading)[0]
    return s / np.linalg.norm(s)


def loo_downdate(fact, i):
    """Eigendecomposition of the rank-one downdated factorization.

    Requires a full-rank factorization; with rank < k the caller
    short-circuits because the approximation is already exact almost
    surely.  Tiny negative eigenvalues from roundoff are clamped to zero
    so downstream spectral functions stay on their domain.
    """
    if not fact.full_rank:
        raise RankContractError(
            f"leave-one-out downdate needs full numerical rank "
            f"(rank {fact.rank} < k {fact.k})")
    if not 0 <= i < fact.k:
        raise ValueError(f"column index {i} outside [0, {fact.k})")
    s = loo_direction(fact, i)
    b = fact.u_tilde.T @ (fact.z @ s)
    eig = dpr1_downdate_eig(fact.eigvals, b)
    top = float(fact.eigvals[0]) if fact.eigvals.size else 1.0
    clamped = clamp_downdate_eigvals(eig.eigvals, top)
    return DowndateResult(index=i, b=b, eig=Dpr1Eig(clamped, eig.eigvecs))


@dataclass
class FunNystrom:
    """Factorized f(A_nys) = u_hat diag(fvals) u_hat^T."""

    u_hat: np.ndarray
    fvals: np.ndarray
    function: object = field(default=None, compare=False)

    def trace(self):
        vals = np.sort(self.fvals)[::-1]
        total = 0.0
        for v in vals:
            total += v
        return float(total)

    def quadratic_form(self, vectors):
        proj = self.u_hat.T @ np.atleast_2d(vectors.T).T
        return np.einsum("ij,ij->j", proj, self.fvals[:, None] * proj)

    def apply(self, block):
        return self.u_hat @ (self.fvals[:, None] * (self.u_hat.T @ block))


def fun_nystrom(fact, f):
    """Apply a spectral function through the factorized eigendecomposition."""
    top = float(fact.eigvals[0]) if fact.eigvals.size else 1.0
    fvals = specfun.evaluate(f, fact.eigvals, scale=top)
    return FunNystrom(u_hat=fact.u_hat, fvals=np.atleast_1d(fvals), function=f)
