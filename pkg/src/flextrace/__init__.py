"""Matrix-free trace estimation of operator monotone matrix functions.

Estimate tr(f(A)) of a symmetric positive semi-definite operator from a
single pass of matrix-vector products, through a stabilized randomized
Nystrom factorization and exchangeable leave-one-out estimators.
"""

from . import bench, bounds, lakernels, operators, specfun, svg
from .estimators import (
    FunctionOracle,
    TraceEstimate,
    flextrace_fast,
    flextrace_naive,
    fun_nys,
    fun_nys_pp,
    fun_nys_trace,
    girard_hutchinson,
    i_flextrace,
    nystrom_pp,
    resolve_estimator,
    xnystrace,
)
from .nystrom import gaussian_sketch, loo_downdate, nys_svd, fun_nystrom
from .operators import (
    KernelSpec,
    LinearOperator,
    SpectrumProfile,
    build_kernel,
    gramian,
    make_synthetic,
    read_matrix_market,
)
from .specfun import SpectralFunction, identity, log1p, power, ratio, sqrt

__version__ = "0.1.0"

__all__ = [
    "FunctionOracle",
    "KernelSpec",
    "LinearOperator",
    "SpectralFunction",
    "SpectrumProfile",
    "TraceEstimate",
    "bench",
    "bounds",
    "build_kernel",
    "flextrace_fast",
    "flextrace_naive",
    "fun_nys",
    "fun_nys_pp",
    "fun_nys_trace",
    "fun_nystrom",
    "gaussian_sketch",
    "girard_hutchinson",
    "gramian",
    "i_flextrace",
    "identity",
    "lakernels",
    "log1p",
    "loo_downdate",
    "make_synthetic",
    "nys_svd",
    "nystrom_pp",
    "operators",
    "power",
    "ratio",
    "read_matrix_market",
    "resolve_estimator",
    "specfun",
    "sqrt",
    "svg",
    "xnystrace",
]
