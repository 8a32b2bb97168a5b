"""Spectral functions f applied to eigenvalues.

The estimators in this library target tr(f(A)) for f in the operator
monotone family with f(0) = 0: identity, log(1+x), sqrt(x), x^p for
0 < p <= 1, and x/(x+zeta) for zeta > 0.  An ``unsafe_custom`` escape
hatch admits arbitrary scalar maps (e.g. f(x) = x^2) for
experimentation; no accuracy guarantees apply to those.
"""

from dataclasses import dataclass, field

import numpy as np

#: Relative clamp width for small negative inputs produced by roundoff.
CLAMP_REL = 1e-12


class FunctionDomainError(ValueError):
    """Input to a spectral function lies outside [0, inf) beyond roundoff."""


@dataclass(frozen=True)
class SpectralFunction:
    """A scalar spectral map, tagged with its parameters.

    ``trusted`` marks membership in the operator monotone family with
    f(0) = 0; custom functions are untrusted and carry no guarantees.
    """

    kind: str
    p: float = 0.0
    zeta: float = 0.0
    fn: object = field(default=None, compare=False)
    label: str = ""

    @property
    def name(self):
        return self.label or self.kind

    @property
    def trusted(self):
        return self.kind != "custom"

    @property
    def is_identity(self):
        return self.kind == "identity" or (self.kind == "power" and self.p == 1.0)

    def __call__(self, x, scale=None):
        return evaluate(self, x, scale=scale)


def identity():
    return SpectralFunction("identity")


def log1p():
    return SpectralFunction("log1p")


def sqrt():
    return SpectralFunction("sqrt")


def power(p):
    """f(x) = x^p for 0 < p <= 1.

    p = 0 is rejected: x^0 with the f(0) = 0 convention is discontinuous
    at the origin and is never needed.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"power exponent must lie in (0, 1], got {p}")
    return SpectralFunction("power", p=float(p), label=f"power(p={p:g})")


def ratio(zeta):
    """f(x) = x / (x + zeta) for zeta > 0."""
    if not zeta > 0.0:
        raise ValueError(f"ratio shift must be positive, got {zeta}")
    return SpectralFunction("ratio", zeta=float(zeta), label=f"ratio(zeta={zeta:g})")


def unsafe_custom(fn, label):
    """Wrap an arbitrary scalar map; outside the supported family."""
    return SpectralFunction("custom", fn=fn, label=label)


def _clamp(x, scale):
    """Clamp tiny negatives (roundoff from downdates) to zero.

    ``scale`` is the largest eigenvalue in context; defaults to 1 when
    unknown.  Anything below -CLAMP_REL * scale is a genuine domain
    violation and raises.
    """
    x = np.asarray(x, dtype=float)
    tol = CLAMP_REL * (scale if scale is not None and scale > 0 else 1.0)
    if np.any(x < -tol):
        worst = float(np.min(x))
        raise FunctionDomainError(
            f"negative input {worst:.6g} below clamp tolerance {-tol:.6g}"
        )
    return np.where(x < 0.0, 0.0, x)


def evaluate(f, x, scale=None):
    """Evaluate f elementwise on x >= 0 (tiny negatives clamped).

    Returns a scalar for scalar input, an ndarray otherwise.
    """
    scalar = np.isscalar(x) or np.ndim(x) == 0
    x = _clamp(x, scale)
    kind = f.kind
    if kind == "identity":
        out = x.copy()
    elif kind == "log1p":
        out = np.log1p(x)
    elif kind == "sqrt":
        out = np.sqrt(x)
    elif kind == "power":
        out = np.power(x, f.p)
    elif kind == "ratio":
        out = x / (x + f.zeta)
    elif kind == "custom":
        out = np.asarray(f.fn(x), dtype=float)
    else:
        raise ValueError(f"unknown spectral function kind {kind!r}")
    return float(out) if scalar else out


def trace_f_diag(f, eigvals, scale=None):
    """tr f(A) = sum_i f(lambda_i) for an explicit spectrum.

    Terms are summed in descending-magnitude order for determinism.
    """
    eigvals = np.asarray(eigvals, dtype=float)
    if eigvals.size == 0:
        return 0.0
    if scale is None:
        scale = float(np.max(eigvals))
    vals = evaluate(f, eigvals, scale=scale)
    vals = np.sort(np.atleast_1d(vals))[::-1]
    total = 0.0
    for v in vals:
        total += v
    return float(total)


def parse_function(spec):
    """Parse a CLI function spec.

    Accepted forms: ``identity``, ``log1p``, ``sqrt``, ``power:p=0.5``,
    ``ratio:zeta=1``.
    """
    text = spec.strip().lower()
    head, _, args = text.partition(":")
    params = {}
    if args:
        for item in args.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ValueError(f"malformed function parameter {item!r} in {spec!r}")
            params[key.strip()] = float(val)
    if head == "identity":
        return identity()
    if head == "log1p":
        return log1p()
    if head == "sqrt":
        return sqrt()
    if head == "power":
        if "p" not in params:
            raise ValueError(f"power needs p=<value>, got {spec!r}")
        return power(params["p"])
    if head == "ratio":
        if "zeta" not in params:
            raise ValueError(f"ratio needs zeta=<value>, got {spec!r}")
        return ratio(params["zeta"])
    raise ValueError(f"unknown spectral function {spec!r}")
