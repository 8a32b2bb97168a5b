import numpy as np
import pytest

from flextrace.lakernels import (
    IndefiniteMatrixError,
    SingularTriangularError,
    cholp,
    dpr1_downdate_eig,
    sym_eig_dense,
    thin_qr,
    thin_svd,
    tri_solve_right,
)


# ---------------------------------------------------------------------------
# thin QR
# ---------------------------------------------------------------------------


def test_qr_identity():
    q, r = thin_qr(np.eye(3))
    np.testing.assert_allclose(q, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(r, np.eye(3), atol=1e-15)


def test_qr_3_4_5():
    q, r = thin_qr(np.array([[3.0], [4.0]]))
    np.testing.assert_allclose(q, [[0.6], [0.8]], atol=1e-15)
    np.testing.assert_allclose(r, [[5.0]], atol=1e-15)


def test_qr_random_residuals(rng):
    y = rng.standard_normal((50, 8))
    q, r = thin_qr(y)
    assert np.linalg.norm(q.T @ q - np.eye(8)) <= 1e-12 * 8
    assert np.linalg.norm(q @ r - y) <= 1e-12 * np.linalg.norm(y)
    assert np.all(np.diag(r) >= 0.0)


# ---------------------------------------------------------------------------
# pivoted Cholesky
# ---------------------------------------------------------------------------


def test_cholp_identity():
    res = cholp(np.eye(3))
    assert res.rank == 3
    s_perm = np.eye(3)[np.ix_(res.perm, res.perm)]
    np.testing.assert_allclose(res.factor.T @ res.factor, s_perm, atol=1e-14)


def test_cholp_rank_one():
    s = np.ones((2, 2))
    res = cholp(s)
    assert res.rank == 1
    np.testing.assert_allclose(res.factor, [[1.0, 1.0]], atol=1e-14)


def test_cholp_detects_rank_of_sketch_gram(rng):
    # Gram matrix of a rank-2 quadratic form sampled with 4 vectors
    basis = rng.standard_normal((20, 2))
    a = basis @ basis.T
    omega = rng.standard_normal((20, 4))
    s = omega.T @ a @ omega
    res = cholp((s + s.T) / 2.0)
    assert res.rank == 2


def test_cholp_reconstruction_and_diagonal(rng):
    for _ in range(20):
        k = int(rng.integers(2, 12))
        c = np.triu(rng.standard_normal((k, k)))
        s = c.T @ c
        res = cholp(s)
        s_perm = s[np.ix_(res.perm, res.perm)]
        np.testing.assert_allclose(res.factor.T @ res.factor, s_perm,
                                   atol=1e-10 * np.linalg.norm(s))
        diag = np.diag(res.factor[:, : res.rank])
        assert np.all(diag > 0.0)
        assert np.all(np.diff(diag) <= 1e-14)


def test_cholp_recovers_trapezoidal_rank(rng):
    # C^T C for a random trapezoidal C has rank = rows(C)
    for _ in range(500):
        k = int(rng.integers(2, 10))
        r = int(rng.integers(1, k + 1))
        c = np.triu(rng.standard_normal((r, k)))
        # keep the leading block well conditioned
        c[np.arange(r), np.arange(r)] = 1.0 + rng.random(r)
        res = cholp(c.T @ c)
        assert res.rank == r


def test_cholp_indefinite_error():
    with pytest.raises(IndefiniteMatrixError):
        cholp(np.diag([1.0, -1.0]))


def test_cholp_zero_matrix():
    res = cholp(np.zeros((3, 3)))
    assert res.rank == 0


def test_cholp_rejects_asymmetric():
    with pytest.raises(ValueError):
        cholp(np.array([[1.0, 0.5], [0.0, 1.0]]))


# ---------------------------------------------------------------------------
# triangular solves
# ---------------------------------------------------------------------------


def test_tri_solve_diag():
    out = tri_solve_right(np.eye(2), np.diag([2.0, 4.0]))
    np.testing.assert_allclose(out, np.diag([0.5, 0.25]), atol=1e-15)


def test_tri_solve_singular_names_index():
    t = np.triu(np.ones((3, 3)))
    t[1, 1] = 0.0
    with pytest.raises(SingularTriangularError) as exc:
        tri_solve_right(np.eye(3), t)
    assert exc.value.index == 1


def test_tri_solve_multiply_back(rng):
    t = np.triu(rng.standard_normal((6, 6)))
    t[np.arange(6), np.arange(6)] = 1.0 + rng.random(6)
    m = rng.standard_normal((4, 6))
    x = tri_solve_right(m, t)
    np.testing.assert_allclose(x @ t, m, atol=1e-12 * np.linalg.norm(m))
    xt = tri_solve_right(m, t, transpose=True)
    np.testing.assert_allclose(xt @ t.T, m, atol=1e-12 * np.linalg.norm(m))


# ---------------------------------------------------------------------------
# dense eigensolver and thin SVD
# ---------------------------------------------------------------------------


def test_sym_eig_diag():
    vals, vecs = sym_eig_dense(np.diag([2.0, 1.0]))
    np.testing.assert_allclose(vals, [2.0, 1.0])
    np.testing.assert_allclose(np.abs(vecs), np.eye(2), atol=1e-15)


def test_sym_eig_swap():
    vals, vecs = sym_eig_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(vals, [1.0, -1.0], atol=1e-15)
    np.testing.assert_allclose(np.abs(vecs), np.full((2, 2), 1 / np.sqrt(2)),
                               atol=1e-15)


def test_sym_eig_random_residual(rng):
    s = rng.standard_normal((20, 20))
    s = (s + s.T) / 2.0
    vals, vecs = sym_eig_dense(s)
    np.testing.assert_allclose(vecs @ (vals[:, None] * vecs.T), s,
                               atol=1e-10 * np.abs(vals).max())
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(20), atol=1e-12)


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        sym_eig_dense(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_thin_svd_diag():
    u, sig = thin_svd(np.diag([3.0, 2.0]))
    np.testing.assert_allclose(sig, [3.0, 2.0])
    np.testing.assert_allclose(np.abs(u), np.eye(2), atol=1e-15)


def test_thin_svd_column():
    u, sig = thin_svd(np.array([[1.0], [1.0]]))
    np.testing.assert_allclose(sig, [np.sqrt(2.0)])
    np.testing.assert_allclose(np.abs(u), np.full((2, 1), 1 / np.sqrt(2)),
                               atol=1e-15)


def test_thin_svd_frobenius_identity(rng):
    z = rng.standard_normal((10, 4))
    _, sig = thin_svd(z)
    assert np.sum(sig ** 2) == pytest.approx(np.linalg.norm(z) ** 2, rel=1e-12)


# ---------------------------------------------------------------------------
# DPR1 downdate eigensolver
# ---------------------------------------------------------------------------


def _dpr1_errors(d, b):
    res = dpr1_downdate_eig(d, b)
    m = np.diag(d) - np.outer(b, b)
    ref_vals, _ = sym_eig_dense(m)
    scale = max(np.abs(d).max(), 1e-300)
    val_err = np.max(np.abs(res.eigvals - ref_vals)) / scale
    orth = np.max(np.abs(res.eigvecs.T @ res.eigvecs - np.eye(d.size)))
    rec = (res.eigvecs * res.eigvals) @ res.eigvecs.T
    rec_err = np.max(np.abs(rec - m)) / scale
    return res, val_err, orth, rec_err


def test_dpr1_decoupled():
    res = dpr1_downdate_eig(np.array([3.0, 1.0]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(res.eigvals, [2.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(np.abs(res.eigvecs), np.eye(2), atol=1e-14)


def test_dpr1_closed_form_2x2():
    d = np.array([2.0, 1.0])
    b = np.array([np.sqrt(0.5), np.sqrt(0.5)])
    res = dpr1_downdate_eig(d, b)
    np.testing.assert_allclose(res.eigvals,
                               [1.0 + np.sqrt(0.5), 1.0 - np.sqrt(0.5)],
                               atol=1e-14)


def test_dpr1_matches_dense_oracle_k12(rng):
    d = np.sort(rng.random(12))[::-1]
    b = rng.standard_normal(12) * 0.3
    res, val_err, orth, _ = _dpr1_errors(d, b)
    assert val_err <= 1e-10
    m = np.diag(d) - np.outer(b, b)
    _, ref_vecs = sym_eig_dense(m)
    # principal angles between the full subspaces of both factorizations
    angles = np.linalg.svd(res.eigvecs.T @ ref_vecs, compute_uv=False)
    assert np.all(angles <= 1.0 + 1e-8)
    assert np.min(angles) >= 1.0 - 1e-8


def test_dpr1_interlacing_and_trace(rng):
    for _ in range(50):
        k = int(rng.integers(2, 20))
        d = np.sort(rng.random(k))[::-1]
        b = rng.standard_normal(k) * 0.5
        res = dpr1_downdate_eig(d, b)
        bb = float(b @ b)
        mu = res.eigvals
        slack = 1e-10 * max(d[0], 1.0)
        for i in range(k):
            upper = d[i]
            lower = (d[i + 1] if i + 1 < k else d[k - 1]) - bb
            assert mu[i] <= upper + slack
            assert mu[i] >= lower - slack
        assert np.sum(mu) == pytest.approx(np.sum(d) - bb,
                                           rel=1e-10, abs=1e-12)


def test_dpr1_randomized_battery(rng):
    # includes clustered diagonals at 1e-13 spacing and zero weights
    for t in range(1000):
        k = int(rng.integers(2, 33))
        style = t % 4
        d = np.sort(rng.random(k))[::-1]
        if style == 1:
            d = 0.5 ** np.arange(k, dtype=float)
        elif style == 2 and k > 2:
            d[1] = d[0] - 1e-13
        b = rng.standard_normal(k) * float(rng.choice([0.01, 0.3, 2.0]))
        if style == 3 and k > 2:
            b[int(rng.integers(0, k))] = 0.0
        res, val_err, orth, rec_err = _dpr1_errors(d, b)
        assert val_err <= 1e-9, (t, val_err)
        assert orth <= 1e-10, (t, orth)
        assert rec_err <= 1e-9, (t, rec_err)


def test_dpr1_duplicate_diagonal_deflation():
    d = np.array([1.0, 1.0, 1.0, 0.3])
    b = np.array([0.5, 0.4, 0.3, 0.2])
    _, val_err, orth, rec_err = _dpr1_errors(d, b)
    assert max(val_err, orth, rec_err) <= 1e-12


def test_dpr1_zero_weight_vector():
    d = np.array([3.0, 2.0, 1.0])
    res = dpr1_downdate_eig(d, np.zeros(3))
    np.testing.assert_array_equal(res.eigvals, d)
    np.testing.assert_array_equal(res.eigvecs, np.eye(3))


def test_dpr1_k1():
    res = dpr1_downdate_eig(np.array([2.0]), np.array([1.2]))
    assert res.eigvals[0] == pytest.approx(2.0 - 1.44, abs=1e-15)


def test_dpr1_large_downdate(rng):
    # |b|^2 far above d_1: the result is indefinite but still exact
    d = np.sort(rng.random(6))[::-1]
    b = rng.standard_normal(6) * 4.0
    _, val_err, orth, rec_err = _dpr1_errors(d, b)
    assert max(val_err, orth, rec_err) <= 1e-9


def test_dpr1_input_validation():
    with pytest.raises(ValueError):
        dpr1_downdate_eig(np.array([1.0, 2.0]), np.zeros(2))
    with pytest.raises(ValueError):
        dpr1_downdate_eig(np.array([2.0, 1.0]), np.zeros(3))
