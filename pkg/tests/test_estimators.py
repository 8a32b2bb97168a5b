import numpy as np
import pytest

from conftest import random_spd_operator
from flextrace import specfun
from flextrace.estimators import (
    FunctionOracle,
    flextrace_fast,
    flextrace_from_sketch,
    flextrace_naive,
    fun_nys,
    fun_nys_pp,
    fun_nys_trace,
    girard_hutchinson,
    girard_hutchinson_from_sketch,
    i_flextrace,
    i_flextrace_from_sketch,
    nystrom_pp,
    resolve_estimator,
    xnystrace,
    xnystrace_from_sketch,
)
from flextrace.nystrom import SketchPair, gaussian_sketch, nys_svd
from flextrace.operators import (
    dense_operator,
    make_synthetic,
    profile_exp,
    profile_explicit,
    profile_poly,
)
from flextrace.randomness import derive_seed

IDENT = specfun.identity()
LOG1P = specfun.log1p()
SQRT = specfun.sqrt()


# ---------------------------------------------------------------------------
# Girard-Hutchinson
# ---------------------------------------------------------------------------


def test_gh_fixed_probe():
    op = dense_operator(np.eye(2))
    omega = np.array([[1.0], [2.0]])
    sketch = SketchPair(omega, op.apply(omega), seed=0, matvec_units=1)
    assert girard_hutchinson_from_sketch(sketch).value == 5.0


def test_gh_zero_operator():
    op = dense_operator(np.zeros((3, 3)))
    assert girard_hutchinson(op, 4, seed=1).value == 0.0


def test_gh_mean_and_variance():
    # Var[w' A w] = 2 ||A||_F^2 = 28 for diag(1, 2, 3)
    op = dense_operator(np.diag([1.0, 2.0, 3.0]))
    est = girard_hutchinson(op, 100_000, seed=5)
    quads = est.loo_terms
    se = np.sqrt(28.0 / quads.size)
    assert abs(est.value - 6.0) <= 4.0 * se
    sample_var = np.var(quads, ddof=1)
    assert abs(sample_var - 28.0) <= 5.0 * 28.0 * np.sqrt(2.0 / quads.size) * 3


def test_gh_loo_terms_mean_invariant():
    op = dense_operator(np.diag([2.0, 1.0]))
    est = girard_hutchinson(op, 50, seed=2)
    assert est.value == pytest.approx(np.mean(est.loo_terms), rel=1e-12)


# ---------------------------------------------------------------------------
# Nystrom++ and XNysTrace
# ---------------------------------------------------------------------------


def test_nystrom_pp_zero():
    op = dense_operator(np.zeros((4, 4)))
    assert nystrom_pp(op, 3, seed=1).value == 0.0


def test_nystrom_pp_rank_one_unbiased(rng):
    lam = np.r_[np.array([3.0]), np.zeros(19)]
    op, _, _ = random_spd_operator(rng, 20, eigvals=lam)
    vals = [nystrom_pp(op, 2, seed=derive_seed(7, t)).value
            for t in range(3000)]
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - 3.0) <= 4.0 * se


def test_nystrom_pp_matches_flextrace_first_term(rng):
    op, _, _ = random_spd_operator(rng, 25, decay=0.7)
    k, seed = 6, 31
    pp = nystrom_pp(op, k, seed)
    ft = flextrace_fast(op, IDENT, k, seed)
    assert pp.value == pytest.approx(ft.loo_terms[0], rel=1e-8)


def test_nystrom_pp_requires_k2():
    op = dense_operator(np.eye(3))
    with pytest.raises(ValueError):
        nystrom_pp(op, 1, seed=0)


def test_xnystrace_identity_collapse(rng):
    op, _, _ = random_spd_operator(rng, 30, decay=0.75)
    for seed in (0, 1, 2):
        xn = xnystrace(op, 7, seed)
        ft = flextrace_fast(op, IDENT, 7, seed)
        assert abs(xn.value - ft.value) <= 1e-10 * abs(xn.value)


def test_xnystrace_identity_full_sketch(rng):
    op = dense_operator(np.eye(3))
    vals = [xnystrace(op, 3, seed=derive_seed(3, t)).value for t in range(500)]
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - 3.0) <= max(4.0 * se, 1e-9)


def test_xnystrace_exchangeable(rng):
    op, _, _ = random_spd_operator(rng, 25, decay=0.7)
    sk = gaussian_sketch(op, 6, seed=9)
    base = xnystrace_from_sketch(sk).value
    for _ in range(5):
        perm = rng.permutation(6)
        val = xnystrace_from_sketch(sk.permuted(perm)).value
        assert abs(val - base) <= 1e-10 * abs(base)


def test_xnystrace_rank_deficient_short_circuit(rng):
    lam = np.r_[np.array([2.0, 1.0]), np.zeros(18)]
    op, _, _ = random_spd_operator(rng, 20, eigvals=lam)
    est = xnystrace(op, 6, seed=2)
    assert est.value == pytest.approx(3.0, rel=1e-9)


# ---------------------------------------------------------------------------
# FunNys and funNystrom++
# ---------------------------------------------------------------------------


def test_fun_nys_exact_low_rank(rng):
    lam = np.r_[np.array([4.0, 2.0]), np.zeros(28)]
    op, _, _ = random_spd_operator(rng, 30, eigvals=lam)
    truth = specfun.trace_f_diag(LOG1P, lam)
    est = fun_nys(op, LOG1P, 5, seed=1)
    assert est.value == pytest.approx(truth, abs=1e-10)


def test_fun_nys_identity_full():
    op = dense_operator(np.eye(3))
    assert fun_nys(op, IDENT, 3, seed=0).value == pytest.approx(3.0, rel=1e-10)


def test_fun_nys_underestimates_poly():
    op = make_synthetic(profile_poly(1000), seed=0, rotated=False)
    truth = op.true_trace(LOG1P)
    est = fun_nys(op, LOG1P, 100, seed=3)
    assert est.value <= truth


def test_fun_nys_monotone_sandwich(rng):
    # single-trial guarantee: tr f(A_nys) <= tr f(A) up to roundoff
    op, lam, _ = random_spd_operator(rng, 40, decay=0.85)
    truth = specfun.trace_f_diag(LOG1P, lam)
    for t in range(20):
        est = fun_nys(op, LOG1P, 8, seed=t)
        assert est.value <= truth * (1.0 + 1e-9)


def test_fun_nys_pp_identity_matches_nystrom_pp(rng):
    op, _, _ = random_spd_operator(rng, 25, decay=0.7)
    oracle = FunctionOracle.from_operator(op)
    k, seed = 6, 17
    a = fun_nys_pp(op, oracle, IDENT, k, seed)
    b = nystrom_pp(op, k, seed)
    assert a.value == pytest.approx(b.value, rel=1e-10)
    assert a.multipass


def test_fun_nys_pp_unbiased(rng):
    op = make_synthetic(profile_exp(30), seed=1, rotated=False)
    oracle = FunctionOracle.from_operator(op)
    truth = op.true_trace(LOG1P)
    vals = [fun_nys_pp(op, oracle, LOG1P, 6, derive_seed(11, t)).value
            for t in range(3000)]
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - truth) <= 4.0 * se


def test_fun_nys_pp_exact_when_tiny_rank(rng):
    lam = np.r_[np.array([2.0]), np.zeros(19)]
    op, _, _ = random_spd_operator(rng, 20, eigvals=lam)
    oracle = FunctionOracle.from_operator(op)
    truth = specfun.trace_f_diag(SQRT, lam)
    est = fun_nys_pp(op, oracle, SQRT, 4, seed=5)
    # sqrt amplifies eps-level rank noise to sqrt(eps)
    assert est.value == pytest.approx(truth, abs=1e-7)


def test_fun_nys_pp_dimension_mismatch(rng):
    op, _, _ = random_spd_operator(rng, 10)
    other, _, _ = random_spd_operator(rng, 12)
    with pytest.raises(ValueError):
        fun_nys_pp(op, FunctionOracle.from_operator(other), LOG1P, 4, 0)


# ---------------------------------------------------------------------------
# i-FlexTrace
# ---------------------------------------------------------------------------


def test_i_flextrace_identity_collapse(rng):
    op, _, _ = random_spd_operator(rng, 30, decay=0.7)
    oracle = FunctionOracle.from_operator(op)
    for seed in (3, 4):
        ift = i_flextrace(op, oracle, IDENT, 6, seed)
        xn = xnystrace(op, 6, seed)
        assert ift.value == pytest.approx(xn.value, rel=1e-9)


def test_i_flextrace_variance_not_worse_than_fun_nys_pp(rng):
    # paired-trial symmetrization comparison
    op = make_synthetic(profile_exp(30), seed=2, rotated=False)
    oracle = FunctionOracle.from_operator(op)
    truth = op.true_trace(LOG1P)
    k = 6
    se_i, se_p = [], []
    for t in range(2000):
        seed = derive_seed(23, t)
        se_i.append(i_flextrace(op, oracle, LOG1P, k, seed).value - truth)
        se_p.append(fun_nys_pp(op, oracle, LOG1P, k, seed).value - truth)
    mse_i = np.mean(np.square(se_i))
    mse_p = np.mean(np.square(se_p))
    spread = np.std(np.square(se_p), ddof=1) / np.sqrt(len(se_p))
    assert mse_i <= mse_p + 3.0 * spread


def test_i_flextrace_exchangeable(rng):
    op, _, _ = random_spd_operator(rng, 20, decay=0.7)
    oracle = FunctionOracle.from_operator(op)
    sk = gaussian_sketch(op, 5, seed=3)
    base = i_flextrace_from_sketch(sk, oracle, LOG1P).value
    for _ in range(5):
        perm = rng.permutation(5)
        val = i_flextrace_from_sketch(sk.permuted(perm), oracle, LOG1P).value
        assert val == pytest.approx(base, rel=1e-9)


# ---------------------------------------------------------------------------
# FlexTrace: fast vs naive, multi-function, properties
# ---------------------------------------------------------------------------


def test_flextrace_fast_matches_naive(rng):
    for trial in range(20):
        n = int(rng.integers(15, 60))
        op, _, _ = random_spd_operator(rng, n, decay=float(rng.uniform(0.5, 0.9)))
        k = int(rng.integers(2, min(12, n)))
        f = [IDENT, LOG1P, SQRT][trial % 3]
        seed = derive_seed(41, trial)
        fast = flextrace_fast(op, f, k, seed)
        naive = flextrace_naive(op, f, k, seed)
        assert fast.value == pytest.approx(naive.value, rel=1e-8)


def test_flextrace_multi_function_equals_single(rng):
    op, _, _ = random_spd_operator(rng, 30, decay=0.8)
    k, seed = 7, 13
    multi = flextrace_fast(op, [IDENT, LOG1P], k, seed)
    for f, est in zip([IDENT, LOG1P], multi):
        single = flextrace_fast(op, f, k, seed)
        assert est.value == pytest.approx(single.value, rel=1e-12)


def test_flextrace_exchangeable(rng):
    op, _, _ = random_spd_operator(rng, 25, decay=0.7)
    sk = gaussian_sketch(op, 6, seed=21)
    base = flextrace_from_sketch(sk, LOG1P).value
    for _ in range(5):
        perm = rng.permutation(6)
        val = flextrace_from_sketch(sk.permuted(perm), LOG1P).value
        assert val == pytest.approx(base, rel=1e-10)


def test_flextrace_exact_low_rank(rng):
    lam = np.r_[np.array([3.0, 2.0, 1.0]), np.zeros(27)]
    op, _, _ = random_spd_operator(rng, 30, eigvals=lam)
    truth = specfun.trace_f_diag(LOG1P, lam)
    est = flextrace_fast(op, LOG1P, 6, seed=2)
    assert est.value == pytest.approx(truth, abs=1e-9)
    assert est.loo_terms is None  # short-circuit, no leave-one-out terms


def test_flextrace_k1_permitted(rng):
    op, _, _ = random_spd_operator(rng, 10, decay=0.5)
    est = flextrace_fast(op, LOG1P, 1, seed=0)
    assert np.isfinite(est.value)


def test_flextrace_quadratic_function_matches_idealized(rng):
    # x^2 is exact on sketch quadratic forms, so both routes coincide
    square = specfun.unsafe_custom(lambda x: x ** 2, "square")
    op, _, _ = random_spd_operator(rng, 25, decay=0.7)
    oracle = FunctionOracle.from_operator(op)
    for seed in (5, 6):
        ft = flextrace_fast(op, square, 6, seed)
        ift = i_flextrace(op, oracle, square, 6, seed)
        assert ft.value == pytest.approx(ift.value, rel=1e-7)


def test_flextrace_loo_terms_mean(rng):
    op, _, _ = random_spd_operator(rng, 20, decay=0.7)
    est = flextrace_fast(op, LOG1P, 5, seed=8)
    assert est.value == pytest.approx(np.mean(est.loo_terms), rel=1e-12)


def test_flextrace_bias_sign_and_magnitude(rng):
    # truth - E[FT] in [0, (k-3) ||f(tail)||_*], tested with MC slack
    from flextrace.bounds import bias_bound_ft, trailing

    op = make_synthetic(profile_exp(30), seed=3, rotated=False)
    lam = op.eigenvalues
    k = 6
    truth = op.true_trace(LOG1P)
    vals = [flextrace_fast(op, LOG1P, k, derive_seed(77, t)).value
            for t in range(3000)]
    gap = truth - np.mean(vals)
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    bound = bias_bound_ft(trailing(lam, k - 2), LOG1P, k)
    assert gap >= -4.0 * se
    assert gap <= bound + 4.0 * se


def test_naive_guard():
    op = make_synthetic(profile_exp(501), seed=0, rotated=False)
    with pytest.raises(ValueError):
        flextrace_naive(op, LOG1P, 4, seed=0)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


def test_registry_resolution_aliases():
    assert resolve_estimator("FlexTrace").name == "flextrace"
    assert resolve_estimator("XNysTrace").name == "xnystrace"
    assert resolve_estimator("FunNys").name == "fun-nys"
    assert resolve_estimator("i-FlexTrace").name == "i-flextrace"
    assert resolve_estimator("fun_nys_pp").name == "fun-nys-pp"
    assert resolve_estimator("Girard-Hutchinson").name == "girard-hutchinson"


def test_registry_unknown_name():
    with pytest.raises(KeyError):
        resolve_estimator("slq")


def test_identity_only_estimators_reject_functions(rng):
    op, _, _ = random_spd_operator(rng, 10)
    info = resolve_estimator("xnystrace")
    with pytest.raises(ValueError):
        info.runner(op, [LOG1P], 4, 0)


def test_oracle_guard():
    op = make_synthetic(profile_exp(2001), seed=0, rotated=False)
    with pytest.raises(ValueError):
        FunctionOracle.from_operator(op)
