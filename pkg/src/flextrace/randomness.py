"""Reproducible random number generation.

All randomness in the library flows through the counter-based Philox
generator keyed by ``numpy.random.SeedSequence``.  Standard normal draws
use NumPy's ziggurat transform.  Given the same seed, runs are
bit-for-bit reproducible on one platform.

Per-trial seeds are derived by hashing ``(base_seed, trial_index)``
through ``SeedSequence``, so trials are statistically independent yet
individually reconstructible.
"""

import numpy as np


def generator(seed):
    """Philox generator for an integer seed (or tuple of integers)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def derive_seed(base_seed, *indices):
    """Hash (base_seed, *indices) into a fresh 63-bit integer seed."""
    ss = np.random.SeedSequence((int(base_seed),) + tuple(int(i) for i in indices))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
