import numpy as np
import pytest

from flextrace.operators import dense_operator


def random_spd_operator(rng, n, eigvals=None, decay=0.6):
    """Dense operator with a known spectrum in a random orthogonal basis."""
    if eigvals is None:
        eigvals = decay ** np.arange(n)
    eigvals = np.asarray(eigvals, dtype=float)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = (q * eigvals) @ q.T
    a = (a + a.T) / 2.0
    return dense_operator(a), eigvals, a


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
