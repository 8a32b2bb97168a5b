"""Closed-form error bounds as executable oracles.

Every bound is a function of the trailing eigenvalues of A and the
spectral function f.  Tail slices follow the 1-based convention
``trailing(eigvals, j)`` = (lambda_j, ..., lambda_n).  Estimators have
k floors below which a bound is undefined; ``mse_bounds`` returns None
for those entries so sweeps can render gaps instead of failing.

The i-FlexTrace bound carries a (k+1)/k prefactor and evaluates gamma
at k-2 while the FlexTrace bound uses gamma(., k-1); the offset is
transcribed literally from the underlying analysis.
"""

import math

import numpy as np

from . import specfun


def trailing(eigvals, j):
    """Tail slice (lambda_j, ..., lambda_n), 1-based start index."""
    eigvals = np.asarray(eigvals, dtype=float)
    if j < 1:
        raise ValueError(f"tail start index must be >= 1, got {j}")
    return eigvals[j - 1:]


def _f_norms(f, tail):
    """(nuclear, frobenius) norms of f(diag(tail))."""
    if tail.size == 0:
        return 0.0, 0.0
    vals = np.atleast_1d(specfun.evaluate(f, tail, scale=float(tail[0])))
    return float(np.sum(vals)), float(np.sqrt(np.sum(vals ** 2)))


def gamma(tail, k):
    """Oversampling factor of the funNystrom error bound.

    gamma(D, k) = 16 (k-4)(k-2) / 3 * ||D||_2
                + 16 e^4 k^2 / 125 * (||D^{1/2}||_*^2 + 2 ||D||_*) + 2,
    for the diagonal tail matrix D; requires k >= 4.
    """
    if k < 4:
        raise ValueError(f"gamma needs k >= 4, got {k}")
    tail = np.asarray(tail, dtype=float)
    if tail.size == 0:
        return 2.0
    spectral = float(np.max(tail))
    nuclear = float(np.sum(tail))
    nuclear_sqrt = float(np.sum(np.sqrt(tail)))
    return (16.0 * (k - 4) * (k - 2) / 3.0 * spectral
            + 16.0 * math.e ** 4 * k ** 2 / 125.0
            * (nuclear_sqrt ** 2 + 2.0 * nuclear)
            + 2.0)


def funnys_error_bound(tail, f, k, norm="frobenius"):
    """Bound on E[ ||f(A) - f(A_nys)||^2 ] for a unitarily invariant norm.

    ``tail`` is the trailing spectrum from index k-3 on.  The bound is
    2 |f(D)|^2 + gamma(D, k) |f(D^{1/2})|^2.
    """
    if k < 4:
        raise ValueError(f"bound needs k >= 4, got {k}")
    if norm not in ("frobenius", "nuclear"):
        raise ValueError(f"unknown norm {norm!r}")
    tail = np.asarray(tail, dtype=float)
    nuc_f, fro_f = _f_norms(f, tail)
    nuc_h, fro_h = _f_norms(f, np.sqrt(tail)) if tail.size else (0.0, 0.0)
    head = fro_f if norm == "frobenius" else nuc_f
    half = fro_h if norm == "frobenius" else nuc_h
    return 2.0 * head ** 2 + gamma(tail, k) * half ** 2


def bias_bound_ft(tail, f, k):
    """Bound on the downward bias: (k-3) ||f(Lambda_{k-2:n})||_*."""
    if k < 4:
        raise ValueError(f"bound needs k >= 4, got {k}")
    tail = np.asarray(tail, dtype=float)
    nuc, _ = _f_norms(f, tail)
    return (k - 3) * nuc


def mse_bounds(eigvals, f, k):
    """MSE bounds for the three estimators, None below each k floor.

    iFT (k >= 6): (k+1)/k (4 |f(L_{k-5:})|_F^2
                           + 2 gamma(L_{k-5:}, k-2) |f(L_{k-5:}^{1/2})|_F^2)
    FT  (k >= 5): 4 (|f(L_{k-4:})|_F^2 + |f(L_{k-4:})|_*^2)
                  + 2 gamma(L_{k-4:}, k-1) (|f^{1/2}|_F^2 + |f^{1/2}|_*^2)
    FN  (k >= 4): 2 |f(L_{k-3:})|_*^2 + gamma(L_{k-3:}, k) |f^{1/2}|_*^2
    """
    eigvals = np.asarray(eigvals, dtype=float)
    out = {"iFT": None, "FT": None, "FN": None}

    if k >= 6:
        tail = trailing(eigvals, k - 5)
        _, fro_f = _f_norms(f, tail)
        _, fro_h = _f_norms(f, np.sqrt(tail))
        out["iFT"] = ((k + 1) / k) * (
            4.0 * fro_f ** 2 + 2.0 * gamma(tail, k - 2) * fro_h ** 2)

    if k >= 5:
        tail = trailing(eigvals, k - 4)
        nuc_f, fro_f = _f_norms(f, tail)
        nuc_h, fro_h = _f_norms(f, np.sqrt(tail))
        out["FT"] = (4.0 * (fro_f ** 2 + nuc_f ** 2)
                     + 2.0 * gamma(tail, k - 1) * (fro_h ** 2 + nuc_h ** 2))

    if k >= 4:
        tail = trailing(eigvals, k - 3)
        nuc_f, _ = _f_norms(f, tail)
        nuc_h, _ = _f_norms(f, np.sqrt(tail))
        out["FN"] = 2.0 * nuc_f ** 2 + gamma(tail, k) * nuc_h ** 2

    return out


def gaussian_moment_formulas(r, k):
    """Fourth moments of the pseudoinverse of an r x k standard Gaussian.

    Exact Schatten-4 and Frobenius fourth moments plus the spectral
    upper bound, valid for oversampling rho = k - r >= 4.
    """
    rho = k - r
    if rho < 4:
        raise ValueError(f"needs k - r >= 4, got {rho}")
    denom = rho * (rho - 1) * (rho - 3)
    return {
        "schatten4": r * (k - 1) / denom,
        "frobenius4": (r * r * rho - 2 * r * (r - 1)) / denom,
        "spectral4_upper": math.e ** 4 * k ** 2 / ((rho + 1) ** 3 * (rho - 3)),
    }
