"""Trace estimators built on Gaussian sketches of an SPSD operator.

Single-pass estimators consume one k-column sketch: Girard-Hutchinson,
the plain and leave-one-out Nystrom trace estimators, the exchangeable
XNysTrace, and the FlexTrace family for traces of matrix functions.
The idealized variants (funNystrom++ and i-FlexTrace) additionally
apply f(A) exactly through a dense-eigendecomposition oracle and are
flagged multi-pass.

All estimators are pure functions of (operator, seed): a shared seed
means a shared sketch, which is what the paired-comparison harness
relies on.  Each also has a ``*_from_sketch`` form taking an explicit
sketch, used for permutation tests and randomness reuse.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import specfun
from .lakernels import _EPS, dpr1_downdate_eig, sym_eig_dense
from .nystrom import (
    SketchPair,
    clamp_downdate_eigvals,
    fun_nystrom,
    gaussian_sketch,
    nys_svd,
)
from .randomness import generator

#: dense-materialization guard for the exact f(A) oracle
ORACLE_DIM_GUARD = 2000
#: size guard for the reference (naive) FlexTrace implementation
NAIVE_DIM_GUARD = 500


@dataclass
class TraceEstimate:
    """One estimator output with its budget accounting.

    ``loo_terms`` holds the k per-index leave-one-out estimates when the
    estimator is an average of them; the value is then their mean.
    """

    value: float
    estimator: str
    function: str
    k: int
    matvec_units: int
    seed: int
    loo_terms: np.ndarray = None
    multipass: bool = False
    x_fallback: bool = False


class FunctionOracle:
    """Exact f(A) access through a dense eigendecomposition.

    Desk-scale only (dimension guard); one oracle serves every spectral
    function, so idealized estimators over several f share it.
    """

    def __init__(self, eigvals, basis):
        self.eigvals = eigvals
        self.basis = basis
        self.dim = basis.shape[0]

    @classmethod
    def from_operator(cls, op, guard=ORACLE_DIM_GUARD):
        if op.dim > guard:
            raise ValueError(
                f"oracle materialization limited to n <= {guard}, got {op.dim}")
        dense = op.materialize()
        vals, vecs = sym_eig_dense(dense)
        return cls(np.maximum(vals, 0.0), vecs)

    def _fvals(self, f):
        top = float(self.eigvals[0]) if self.eigvals.size else 1.0
        return np.atleast_1d(specfun.evaluate(f, self.eigvals, scale=top))

    def apply(self, f, block):
        """f(A) applied to a vector or block."""
        block = np.asarray(block, dtype=float)
        vec = block.ndim == 1
        cols = block.reshape(self.dim, -1)
        out = self.basis @ (self._fvals(f)[:, None] * (self.basis.T @ cols))
        return out[:, 0] if vec else out

    def trace(self, f):
        """Exact tr f(A) from the stored spectrum."""
        return specfun.trace_f_diag(f, self.eigvals)

    def as_operator(self, f):
        from .operators import LinearOperator

        return LinearOperator(self.dim, lambda b: self.apply(f, b),
                              name=f"oracle-f({f.name})")


def _as_list(f_or_fs):
    if isinstance(f_or_fs, (list, tuple)):
        return list(f_or_fs), False
    return [f_or_fs], True


def _estimate(value, name, f, sketch, **extra):
    return TraceEstimate(
        value=float(value), estimator=name,
        function=f.name if f is not None else "identity",
        k=sketch.k, matvec_units=sketch.matvec_units, seed=sketch.seed,
        **extra)


def _check_oracle(op, oracle):
    if oracle.dim != op.dim:
        raise ValueError(
            f"oracle dimension {oracle.dim} does not match operator {op.dim}")


# ---------------------------------------------------------------------------
# plain-trace estimators
# ---------------------------------------------------------------------------


def girard_hutchinson_from_sketch(sketch):
    """Quadratic-form average over the sketch columns."""
    quads = np.einsum("ij,ij->j", sketch.omega, sketch.y)
    value = float(np.sum(quads)) / sketch.k
    return _estimate(value, "girard-hutchinson", None, sketch, loo_terms=quads)


def girard_hutchinson(op, k, seed):
    """(1/k) sum_i w_i^T A w_i over fresh Gaussian probes.

    Unlike the Nystrom sketch, probe counts above the dimension are
    legitimate here, so the k <= n cap does not apply.
    """
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    omega = generator(seed).standard_normal((op.dim, k))
    sketch = SketchPair(omega, op.apply(omega), seed, k * op.matvec_cost)
    return girard_hutchinson_from_sketch(sketch)


def nystrom_pp_from_sketch(sketch):
    fact1 = nys_svd(sketch.drop_column(0))
    w1 = sketch.omega[:, 0]
    quad_a = float(w1 @ sketch.y[:, 0])
    quad_nys = float(fact1.quadratic_form(w1[:, None])[0])
    value = fact1.trace() + quad_a - quad_nys
    return _estimate(value, "nystrom-pp", None, sketch)


def nystrom_pp(op, k, seed):
    """Leave-one-out Nystrom++: tr(A_{-1}) + w_1^T (A - A_{-1}) w_1.

    Consumes the same k-column sketch; A w_1 is already column 1 of Y.
    """
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    return nystrom_pp_from_sketch(gaussian_sketch(op, k, seed))


def _downdate_workspace(fact):
    """Per-index downdate directions and sketch projections.

    Returns (B, X, fallback): column i of B is the rank-one downdate
    weight b_i, column i of X is U_hat^T w_i.  X normally comes from the
    O(k^3) identity X = u_tilde^T Z^{-T} C P^T; a numerically singular Z
    triggers the direct O(n k^2) fallback, flagged to the caller.
    """
    k = fact.k
    chol = fact.chol
    c_lead = chol.leading
    # columns of C^{-T} are rows of C^{-1}; normalize, then undo the pivot
    c_inv = solve_triangular(c_lead, np.eye(k))
    s_pos = c_inv.T / np.linalg.norm(c_inv, axis=1)[None, :]
    s = s_pos[:, np.argsort(chol.perm)]
    b_mat = fact.u_tilde.T @ (fact.z @ s)

    lam = fact.eigvals
    ill = lam[-1] <= (k * _EPS) ** 2 * lam[0]
    m = None
    if not ill:
        try:
            m = np.linalg.solve(fact.z.T, c_lead)
        except np.linalg.LinAlgError:
            ill = True
    if ill:
        x_mat = fact.u_hat.T @ fact.sketch.omega
        return b_mat, x_mat, True
    x0 = fact.u_tilde.T @ m
    x_mat = np.empty_like(x0)
    x_mat[:, chol.perm] = x0
    return b_mat, x_mat, False


def xnystrace_from_sketch(sketch):
    fact = nys_svd(sketch)
    if not fact.full_rank:
        return _estimate(fact.trace(), "xnystrace", None, sketch)
    b_mat, x_mat, fb = _downdate_workspace(fact)
    lam = fact.eigvals
    quad_a = np.einsum("ij,ij->j", sketch.omega, sketch.y)
    tr_loo = fact.trace() - np.einsum("ij,ij->j", b_mat, b_mat)
    quad_loo = (np.einsum("ij,ij->j", x_mat, lam[:, None] * x_mat)
                - np.einsum("ij,ij->j", b_mat, x_mat) ** 2)
    terms = tr_loo + quad_a - quad_loo
    value = float(np.sum(terms)) / sketch.k
    return _estimate(value, "xnystrace", None, sketch, loo_terms=terms,
                     x_fallback=fb)


def xnystrace(op, k, seed):
    """Exchangeable trace estimator: the Nystrom++ term averaged over
    every leave-one-out index, through the fast downdate path.

    Needs no eigensolves: tr(A_{-i}) = tr(Lambda) - |b_i|^2 and the
    quadratic form of the downdate is explicit in b_i.  Rank deficiency
    short-circuits to tr(A_nys), the exact case.
    """
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    return xnystrace_from_sketch(gaussian_sketch(op, k, seed))


# ---------------------------------------------------------------------------
# matrix-function estimators
# ---------------------------------------------------------------------------


def fun_nys_trace(fact, f):
    """tr f(A_nys) through the factorized eigendecomposition."""
    value = fun_nystrom(fact, f).trace()
    return _estimate(value, "fun-nys", f, fact.sketch)


def fun_nys(op, f_or_fs, k, seed):
    """Build one factorization and read off tr f(A_nys) per function."""
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    fs, single = _as_list(f_or_fs)
    fact = nys_svd(gaussian_sketch(op, k, seed))
    out = [fun_nys_trace(fact, f) for f in fs]
    return out[0] if single else out


def fun_nys_pp_from_sketch(sketch, oracle, f):
    fact1 = nys_svd(sketch.drop_column(0))
    fnys = fun_nystrom(fact1, f)
    w1 = sketch.omega[:, 0]
    quad_fa = float(w1 @ oracle.apply(f, w1))
    quad_fnys = float(fnys.quadratic_form(w1[:, None])[0])
    value = fnys.trace() + quad_fa - quad_fnys
    return _estimate(value, "fun-nys-pp", f, sketch, multipass=True)


def fun_nys_pp(op, oracle, f, k, seed):
    """funNystrom++: tr f(A_{-1}) + w_1^T (f(A) - f(A_{-1})) w_1.

    f(A) w_1 comes from the oracle, so the estimator is multi-pass.
    """
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    _check_oracle(op, oracle)
    return fun_nys_pp_from_sketch(gaussian_sketch(op, k, seed), oracle, f)


def _loo_spectra(fact, b_mat, x_mat):
    """Downdated spectra and rotated projections for every index.

    Yields (i, eigvals_i, g_i) with g_i = V_i^T x_i; eigenvalues are
    clamped so spectral functions stay on their domain.
    """
    lam = fact.eigvals
    top = float(lam[0]) if lam.size else 1.0
    for i in range(fact.k):
        eig = dpr1_downdate_eig(lam, b_mat[:, i])
        vals = clamp_downdate_eigvals(eig.eigvals, top)
        g = eig.eigvecs.T @ x_mat[:, i]
        yield i, vals, g


def flextrace_from_sketch(sketch, f_or_fs):
    fs, single = _as_list(f_or_fs)
    fact = nys_svd(sketch)
    lam = fact.eigvals
    top = float(lam[0]) if lam.size else 1.0

    if not fact.full_rank:
        out = [_estimate(specfun.trace_f_diag(f, lam, scale=top),
                         "flextrace", f, sketch) for f in fs]
        return out[0] if single else out

    b_mat, x_mat, fb = _downdate_workspace(fact)
    flam = [np.atleast_1d(specfun.evaluate(f, lam, scale=top)) for f in fs]
    terms = np.empty((len(fs), sketch.k))
    for i, vals, g in _loo_spectra(fact, b_mat, x_mat):
        x = x_mat[:, i]
        g2 = g * g
        for a, f in enumerate(fs):
            fvals = np.atleast_1d(specfun.evaluate(f, vals, scale=top))
            terms[a, i] = (specfun.trace_f_diag(f, vals, scale=top)
                           + x @ (flam[a] * x) - fvals @ g2)
    out = [
        _estimate(np.sum(terms[a]) / sketch.k, "flextrace", f, sketch,
                  loo_terms=terms[a].copy(), x_fallback=fb)
        for a, f in enumerate(fs)
    ]
    return out[0] if single else out


def flextrace_fast(op, f_or_fs, k, seed):
    """Single-pass exchangeable estimator of tr f(A) (accelerated).

    One sketch, one factorization; each leave-one-out term costs one
    O(k^2) downdate eigendecomposition.  A list of functions reuses the
    sketch and all downdates, so extra functions are nearly free.  With
    numerical rank below k the factorization is exact almost surely and
    tr f(Lambda) is returned directly.

    k = 1 is permitted (the downdate is empty) but high-variance.
    """
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    return flextrace_from_sketch(gaussian_sketch(op, k, seed), f_or_fs)


def i_flextrace_from_sketch(sketch, oracle, f_or_fs):
    fs, single = _as_list(f_or_fs)
    fact = nys_svd(sketch)
    lam = fact.eigvals
    top = float(lam[0]) if lam.size else 1.0
    quad_fa = [
        np.einsum("ij,ij->j", sketch.omega, oracle.apply(f, sketch.omega))
        for f in fs
    ]

    k = sketch.k
    terms = np.empty((len(fs), k))
    if not fact.full_rank:
        # the factorization is exact almost surely; every downdate equals it
        x_mat = fact.u_hat.T @ sketch.omega
        for a, f in enumerate(fs):
            fvals = np.atleast_1d(specfun.evaluate(f, lam, scale=top))
            tr_f = specfun.trace_f_diag(f, lam, scale=top)
            quad_fnys = np.einsum("ij,ij->j", x_mat, fvals[:, None] * x_mat)
            terms[a] = tr_f + quad_fa[a] - quad_fnys
    else:
        b_mat, x_mat, _ = _downdate_workspace(fact)
        for i, vals, g in _loo_spectra(fact, b_mat, x_mat):
            g2 = g * g
            for a, f in enumerate(fs):
                fvals = np.atleast_1d(specfun.evaluate(f, vals, scale=top))
                terms[a, i] = (specfun.trace_f_diag(f, vals, scale=top)
                               + quad_fa[a][i] - fvals @ g2)
    out = [
        _estimate(np.sum(terms[a]) / k, "i-flextrace", f, sketch,
                  loo_terms=terms[a].copy(), multipass=True)
        for a, f in enumerate(fs)
    ]
    return out[0] if single else out


def i_flextrace(op, oracle, f_or_fs, k, seed):
    """Idealized exchangeable estimator with exact f(A) quadratic forms.

    Unbiased for every spectral function in the supported family; the
    oracle terms make it multi-pass, so it serves as a reference rather
    than a single-pass method.
    """
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    _check_oracle(op, oracle)
    return i_flextrace_from_sketch(gaussian_sketch(op, k, seed), oracle,
                                   f_or_fs)


def flextrace_naive_from_sketch(sketch, f):
    fact = nys_svd(sketch)
    lam = fact.eigvals
    top = float(lam[0]) if lam.size else 1.0
    if not fact.full_rank:
        value = specfun.trace_f_diag(f, lam, scale=top)
        return _estimate(value, "flextrace-naive", f, sketch)

    fnys = fun_nystrom(fact, f)
    k = sketch.k
    terms = np.empty(k)
    for i in range(k):
        fnys_i = fun_nystrom(nys_svd(sketch.drop_column(i)), f)
        w = sketch.omega[:, i]
        terms[i] = (fnys_i.trace()
                    + float(fnys.quadratic_form(w[:, None])[0])
                    - float(fnys_i.quadratic_form(w[:, None])[0]))
    value = float(np.sum(terms)) / k
    return _estimate(value, "flextrace-naive", f, sketch, loo_terms=terms)


def flextrace_naive(op, f, k, seed):
    """Reference transcription of the estimator's defining formula.

    Every leave-one-out approximation is refactorized from scratch; kept
    for testing the accelerated path, guarded to small dimensions.
    """
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if op.dim > NAIVE_DIM_GUARD:
        raise ValueError(
            f"naive implementation limited to n <= {NAIVE_DIM_GUARD}, "
            f"got {op.dim}")
    return flextrace_naive_from_sketch(gaussian_sketch(op, k, seed), f)


# ---------------------------------------------------------------------------
# registry (drives the benchmark harness)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorInfo:
    name: str
    runner: object = field(compare=False)
    needs_oracle: bool = False
    identity_only: bool = False


def _run_identity_only(fn):
    def runner(op, fs, k, seed, oracle=None):
        out = []
        for f in fs:
            if not f.is_identity:
                raise ValueError(
                    f"estimator supports only the identity function, "
                    f"got {f.name}")
            est = fn(op, k, seed)
            est.function = f.name
            out.append(est)
        return out

    return runner


def _run_flextrace(op, fs, k, seed, oracle=None):
    return flextrace_fast(op, list(fs), k, seed)


def _run_flextrace_naive(op, fs, k, seed, oracle=None):
    return [flextrace_naive(op, f, k, seed) for f in fs]


def _run_fun_nys(op, fs, k, seed, oracle=None):
    return fun_nys(op, list(fs), k, seed)


def _run_i_flextrace(op, fs, k, seed, oracle=None):
    return i_flextrace(op, oracle, list(fs), k, seed)


def _run_fun_nys_pp(op, fs, k, seed, oracle=None):
    return [fun_nys_pp(op, oracle, f, k, seed) for f in fs]


REGISTRY = {
    info.name: info
    for info in (
        EstimatorInfo("girard-hutchinson",
                      _run_identity_only(girard_hutchinson),
                      identity_only=True),
        EstimatorInfo("nystrom-pp", _run_identity_only(nystrom_pp),
                      identity_only=True),
        EstimatorInfo("xnystrace", _run_identity_only(xnystrace),
                      identity_only=True),
        EstimatorInfo("fun-nys", _run_fun_nys),
        EstimatorInfo("fun-nys-pp", _run_fun_nys_pp, needs_oracle=True),
        EstimatorInfo("i-flextrace", _run_i_flextrace, needs_oracle=True),
        EstimatorInfo("flextrace", _run_flextrace),
        EstimatorInfo("flextrace-naive", _run_flextrace_naive),
    )
}

_CANONICAL = {name.replace("-", ""): name for name in REGISTRY}


def resolve_estimator(name):
    """Case- and punctuation-insensitive estimator lookup."""
    key = name.strip().lower().replace("-", "").replace("_", "").replace(" ", "")
    if key not in _CANONICAL:
        raise KeyError(f"unknown estimator {name!r}; "
                       f"known: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[_CANONICAL[key]]
