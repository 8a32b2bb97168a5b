"""Dense linear algebra at sketch scale.

Thin QR, truncated pivoted Cholesky with rank-revealing termination,
right triangular solves, a reference symmetric eigensolver, thin SVD,
and an O(k^2)-per-eigenvalue eigensolver for symmetric
diagonal-minus-rank-one (DPR1) downdates via the secular equation.

All routines are pure on their inputs and safe to call concurrently.
"""

from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import solve_triangular

_EPS = np.finfo(float).eps

#: deflation threshold for small rank-one weights, relative to ||b||
DEFLATE_B_REL = 1e-14
#: merge threshold for clustered diagonal entries, relative to max|d|
DEFLATE_D_REL = 1e-14
#: iteration cap for the safeguarded secular solver
MAX_SECULAR_ITERS = 128


class IndefiniteMatrixError(ValueError):
    """Pivoted Cholesky hit a diagonal below -stop_tolerance."""


class SingularTriangularError(ValueError):
    """Triangular solve met a numerically zero diagonal entry."""

    def __init__(self, index):
        super().__init__(f"triangular factor is singular at diagonal index {index}")
        self.index = index


class SecularConvergenceError(RuntimeError):
    """Secular iteration failed to converge (unreachable with bisection)."""

    def __init__(self, interval):
        super().__init__(f"secular equation did not converge in interval {interval}")
        self.interval = interval


def thin_qr(y):
    """Thin QR with the sign convention diag(R) >= 0."""
    q, r = np.linalg.qr(y)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, signs[:, None] * r


@dataclass
class PivotedCholesky:
    """P^T S P = C^T C with C upper trapezoidal (rank x k)."""

    factor: np.ndarray
    perm: np.ndarray
    rank: int

    @property
    def leading(self):
        """The rank x rank upper triangular leading block."""
        return self.factor[:, : self.rank]


def cholp(s, stop_tolerance=None):
    """Truncated pivoted Cholesky of a symmetric PSD matrix.

    Greedy diagonal pivoting; terminates once the largest remaining
    diagonal entry drops to stop_tolerance, which defaults to
    k * eps * max(diag(S)) in the LAPACK dpstrf style.  A largest
    remaining diagonal below -stop_tolerance signals an indefinite
    input and raises.
    """
    s = np.asarray(s, dtype=float)
    k = s.shape[0]
    if s.ndim != 2 or s.shape[1] != k:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    scale = max(np.max(np.abs(s)), 1.0) if s.size else 1.0
    if np.max(np.abs(s - s.T)) > 1e-12 * scale:
        raise ValueError("input is not symmetric to working precision")
    work = (s + s.T) / 2.0
    if stop_tolerance is None:
        stop_tolerance = k * _EPS * max(float(np.max(np.diag(work))), 0.0)
    perm = np.arange(k)
    rank = k
    for t in range(k):
        rem = np.diag(work)[t:]
        j = t + int(np.argmax(rem))
        pivot = work[j, j]
        if pivot <= stop_tolerance:
            if pivot < -stop_tolerance:
                raise IndefiniteMatrixError(
                    f"largest remaining diagonal {pivot:.6g} below "
                    f"-{stop_tolerance:.6g} at step {t}")
            rank = t
            break
        if j != t:
            work[:, [t, j]] = work[:, [j, t]]
            work[[t, j], :] = work[[j, t], :]
            perm[[t, j]] = perm[[j, t]]
        root = np.sqrt(pivot)
        work[t, t] = root
        if t + 1 < k:
            work[t, t + 1:] /= root
            row = work[t, t + 1:]
            work[t + 1:, t + 1:] -= np.outer(row, row)
    factor = np.triu(work)[:rank, :]
    return PivotedCholesky(factor=factor, perm=perm, rank=rank)


def tri_solve_right(m, t, transpose=False, lower=False):
    """M T^{-1} (or M T^{-T} with ``transpose``) for triangular T.

    Raises SingularTriangularError naming the first numerically zero
    diagonal entry.
    """
    t = np.asarray(t, dtype=float)
    diag = np.abs(np.diag(t))
    floor = 1e-14 * max(float(np.max(np.abs(t))), 0.0) if t.size else 0.0
    bad = np.nonzero(diag <= floor)[0]
    if bad.size:
        raise SingularTriangularError(int(bad[0]))
    m = np.asarray(m, dtype=float)
    # X T = M  <=>  T^T X^T = M^T; with transpose, X T^T = M <=> T X^T = M^T
    trans = "N" if transpose else "T"
    xt = solve_triangular(t, m.T, trans=trans, lower=lower)
    return xt.T


def sym_eig_dense(s):
    """Reference symmetric eigendecomposition, eigenvalues descending."""
    s = np.asarray(s, dtype=float)
    scale = max(float(np.max(np.abs(s))), 1.0) if s.size else 1.0
    if np.max(np.abs(s - s.T)) > 1e-12 * scale:
        raise ValueError("input is not symmetric to working precision")
    vals, vecs = np.linalg.eigh((s + s.T) / 2.0)
    return vals[::-1].copy(), vecs[:, ::-1].copy()


def thin_svd(z):
    """Thin SVD returning only the left factor and singular values."""
    u, sig, _ = np.linalg.svd(z, full_matrices=False)
    return u, sig


# ---------------------------------------------------------------------------
# DPR1 downdate eigensolver
# ---------------------------------------------------------------------------


@dataclass
class Dpr1Eig:
    """Eigendecomposition diag(d) - b b^T = V diag(eigvals) V^T."""

    eigvals: np.ndarray
    eigvecs: np.ndarray


@numba.njit(cache=True)
def _secular_kernel(d, b2, bsum):  # pragma: no cover - exercised via wrapper
    """Roots of 1 - sum_j b2_j / (d_j - mu) = 0 for distinct descending d.

    Fills mu (descending) and denom[j, r] = d_j - mu_r, the latter
    evaluated without cancellation by anchoring each root at its nearest
    pole.  Root r lies in (d_{r+1}, d_r) for r < m-1 and in
    (d_{m-1} - bsum, d_{m-1}) for the last root.  Each root is found by
    a safeguarded rational-Newton iteration started from a closed-form
    two-pole guess.  Returns the index of a non-converged interval, or
    -1 on success.
    """
    m = d.size
    mu = np.empty(m)
    denom = np.empty((m, m))
    bad = -1
    for r in range(m):
        upper = d[r]
        lower = d[r + 1] if r < m - 1 else d[m - 1] - bsum
        width = upper - lower
        half = 0.5 * width
        mid = 0.5 * (upper + lower)

        w_mid = 1.0
        for j in range(m):
            w_mid -= b2[j] / (d[j] - mid)

        # anchor at the pole nearer the root; the secular function is
        # strictly decreasing, so the sign at the midpoint decides the half
        if r == m - 1:
            a = m - 1
        elif w_mid > 0.0:
            a = r
        else:
            a = r + 1
        da = d[a]
        if w_mid > 0.0:
            lo, hi = mid - da, upper - da
        else:
            lo, hi = lower - da, mid - da

        # starting point: freeze the far poles at their midpoint value and
        # solve the remaining two-pole model c x^2 - (c w + P + N) x + P w
        # in closed form for x = d_r - mu
        p_w = b2[r]
        n_w = b2[r + 1] if r < m - 1 else 0.0
        c_far = w_mid + p_w / half - n_w / half
        x0 = half
        if r == m - 1:
            if c_far > 0.0:
                x_cand = p_w / c_far
                if 0.0 < x_cand < width:
                    x0 = x_cand
        else:
            bq = c_far * width + p_w + n_w
            disc = bq * bq - 4.0 * c_far * p_w * width
            if disc >= 0.0 and c_far != 0.0:
                sq = np.sqrt(disc)
                x1 = (bq - sq) / (2.0 * c_far)
                x2 = (bq + sq) / (2.0 * c_far)
                if 0.0 < x1 < width:
                    x0 = x1
                elif 0.0 < x2 < width:
                    x0 = x2
            elif bq != 0.0:
                x_cand = p_w * width / bq
                if 0.0 < x_cand < width:
                    x0 = x_cand
        tau = -x0 if a == r else width - x0
        if not lo < tau < hi:
            tau = 0.5 * (lo + hi)

        ok = False
        for _ in range(MAX_SECULAR_ITERS):
            g = 1.0
            gp = 0.0
            gscale = 1.0
            for j in range(m):
                dd = (d[j] - da) - tau
                t = b2[j] / dd
                g -= t
                gp -= t / dd
                gscale += abs(t)
            # bracket update: g > 0 means the root lies above this point
            if g > 0.0:
                lo = tau
            else:
                hi = tau
            # rational update: fit c + S/(0 - tau) to (g, g'); the model
            # shares the secular function's pole at the anchor, so steps
            # stay accurate where plain Newton stalls
            s_coef = gp * tau * tau
            c_coef = g + s_coef / tau
            cand = s_coef / c_coef if c_coef != 0.0 else tau - g / gp
            if not (lo < cand < hi and np.isfinite(cand)):
                cand = 0.5 * (lo + hi)
            if (
                abs(g) <= 32.0 * _EPS * gscale
                or hi - lo <= 4.0 * _EPS * max(abs(lo), abs(hi)) + 1e-300
                or abs(cand - tau) <= 2.0 * _EPS * abs(cand)
            ):
                ok = True
                break
            tau = cand
        if not ok:
            bad = r
        mu[r] = da + tau
        for j in range(m):
            denom[j, r] = (d[j] - da) - tau
    return mu, denom, bad


def _secular_roots(d, b2, bsum):
    mu, denom, bad = _secular_kernel(d, b2, bsum)
    if bad >= 0:
        raise SecularConvergenceError(interval=bad)
    return mu, denom


@numba.njit(cache=True)
def _loewner_weights(d, denom, b_sign):  # pragma: no cover - via wrapper
    """Recompute rank-one weights from the solved roots.

    Matching the characteristic polynomial at the poles gives
    bt_j^2 = prod_r (d_j - mu_r) / prod_{l != j} (d_j - d_l); evaluated
    through O(1) factor ratios (root r paired with pole r below the
    diagonal, pole r+1 above) so products neither overflow nor lose
    accuracy.  Using these weights instead of the raw b restores
    numerical orthogonality of the eigenvectors when roots cluster.
    """
    m = d.size
    out = np.empty(m)
    for j in range(m):
        prod = denom[j, m - 1]
        for r in range(j):
            prod *= denom[j, r] / (d[j] - d[r])
        for r in range(j, m - 1):
            prod *= denom[j, r] / (d[j] - d[r + 1])
        out[j] = b_sign[j] * np.sqrt(abs(prod))
    return out


def dpr1_downdate_eig(d, b):
    """Eigendecomposition of diag(d) - b b^T in O(k^2) per eigenpair.

    ``d`` must be non-increasing.  Tiny weights deflate; clustered
    diagonal entries are merged by Givens rotations before the secular
    solve.  Eigenvectors come from the solved roots via recomputed
    weights, so V stays orthogonal even for crowded spectra.
    """
    d = np.asarray(d, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    k = d.size
    if b.shape != (k,):
        raise ValueError(f"shape mismatch: d has {k} entries, b has {b.shape}")
    if k == 0:
        raise ValueError("empty problem")
    if np.any(np.diff(d) > 0):
        raise ValueError("diagonal must be non-increasing")

    d_scale = max(float(np.max(np.abs(d))), 0.0)
    b_norm = float(np.linalg.norm(b))

    keep = np.abs(b) > DEFLATE_B_REL * b_norm
    survivors = np.nonzero(keep)[0]

    # merge clustered diagonals among survivors: chains of adjacent gaps
    # below tol collapse onto one coordinate via Givens rotations
    rotations = []
    tol_d = DEFLATE_D_REL * max(d_scale, _EPS)
    merged = []
    lead = None
    for idx in survivors:
        if lead is not None and d[lead] - d[idx] <= tol_d:
            r = np.hypot(b[lead], b[idx])
            c, sn = b[lead] / r, b[idx] / r
            rotations.append((lead, idx, c, sn))
            new_lead = c * c * d[lead] + sn * sn * d[idx]
            new_gone = sn * sn * d[lead] + c * c * d[idx]
            d[lead], d[idx] = new_lead, new_gone
            b[lead], b[idx] = r, 0.0
        else:
            lead = idx
            merged.append(idx)
    inner = np.asarray(merged, dtype=int)

    eigvals = d.copy()
    vecs = np.eye(k)

    m = inner.size
    if m == 1:
        j = inner[0]
        eigvals[j] = d[j] - b[j] ** 2
    elif m > 1:
        d_in = d[inner]
        b_in = b[inner]
        b2 = b_in ** 2
        mu, denom = _secular_roots(d_in, b2, float(b2.sum()))
        weights = _loewner_weights(d_in, denom, np.sign(b_in))
        v_in = weights[:, None] / denom
        v_in /= np.linalg.norm(v_in, axis=0)[None, :]
        eigvals[inner] = mu
        vecs[np.ix_(inner, inner)] = v_in

    for lead, gone, c, sn in reversed(rotations):
        row_l = vecs[lead].copy()
        row_g = vecs[gone]
        vecs[lead] = c * row_l - sn * row_g
        vecs[gone] = sn * row_l + c * row_g

    order = np.argsort(-eigvals, kind="stable")
    return Dpr1Eig(eigvals=eigvals[order], eigvecs=vecs[:, order])
