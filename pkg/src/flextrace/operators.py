"""Matrix-free SPSD operators and concrete constructors.

An operator is a dimension plus a block matvec.  Constructors cover
synthetic spectra (diagonal or randomly rotated), Gramians X X^T of
sparse data matrices, and dense kernel matrices.  Operators are
immutable after construction and safe to apply concurrently.
"""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.spatial.distance import pdist, squareform

from . import specfun
from .randomness import generator


class LinearOperator:
    """Symmetric PSD operator of dimension ``dim`` with a block matvec.

    ``matvec_cost`` is the number of matvec accounting units consumed
    per applied column (2 for Gramians: one product with X and one with
    X^T).
    """

    def __init__(self, dim, apply_fn, matvec_cost=1, name="operator"):
        if dim < 1:
            raise ValueError(f"operator dimension must be positive, got {dim}")
        self.dim = int(dim)
        self._apply = apply_fn
        self.matvec_cost = int(matvec_cost)
        self.name = name

    def apply(self, block):
        """Apply A to an (n,) vector or (n, m) block of columns."""
        block = np.asarray(block, dtype=float)
        vec = block.ndim == 1
        if block.shape[0] != self.dim:
            raise ValueError(
                f"block has leading dimension {block.shape[0]}, expected {self.dim}"
            )
        out = self._apply(block.reshape(self.dim, -1))
        return out[:, 0] if vec else out

    def materialize(self):
        """Dense n x n matrix (test/oracle use only)."""
        return self.apply(np.eye(self.dim))

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} n={self.dim}>"


def dense_operator(matrix, name="dense", matvec_cost=1):
    """Wrap an explicit symmetric matrix as an operator."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    return LinearOperator(matrix.shape[0], lambda b: matrix @ b,
                          matvec_cost=matvec_cost, name=name)


# ---------------------------------------------------------------------------
# synthetic spectra
# ---------------------------------------------------------------------------

_PROFILE_KINDS = ("flat", "poly", "exp", "step", "explicit")


class SpectrumProfile:
    """A named eigenvalue profile: flat, poly, exp, step, or explicit."""

    def __init__(self, kind, n, **params):
        kind = kind.lower()
        if kind not in _PROFILE_KINDS:
            raise ValueError(f"unknown spectrum profile {kind!r}")
        if n < 1:
            raise ValueError(f"profile dimension must be positive, got {n}")
        self.kind = kind
        self.n = int(n)
        self.params = params
        self._eigvals = self._generate()
        if np.any(np.diff(self._eigvals) > 0):
            raise ValueError("profile eigenvalues must be non-increasing")
        if self._eigvals[-1] < 0:
            raise ValueError("profile eigenvalues must be non-negative")

    def _generate(self):
        n = self.n
        p = self.params
        if self.kind == "flat":
            if n == 1:
                return np.array([3.0])
            i = np.arange(n, dtype=float)
            return 3.0 - 2.0 * i / (n - 1)
        if self.kind == "poly":
            expo = float(p.get("exponent", 2.0))
            return np.arange(1, n + 1, dtype=float) ** (-expo)
        if self.kind == "exp":
            base = float(p.get("base", 0.9))
            return base ** np.arange(n, dtype=float)
        if self.kind == "step":
            cut = int(p.get("cut", 50))
            low = float(p.get("low", 1e-3))
            vals = np.full(n, low)
            vals[: min(cut, n)] = 1.0
            return vals
        vals = np.asarray(p["eigvals"], dtype=float)
        if vals.shape != (n,):
            raise ValueError("explicit profile needs an eigenvalue list of length n")
        return vals.copy()

    @property
    def eigenvalues(self):
        return self._eigvals.copy()

    def __repr__(self):
        return f"SpectrumProfile({self.kind!r}, n={self.n})"


def profile_flat(n):
    return SpectrumProfile("flat", n)


def profile_poly(n, exponent=2.0):
    return SpectrumProfile("poly", n, exponent=exponent)


def profile_exp(n, base=0.9):
    return SpectrumProfile("exp", n, base=base)


def profile_step(n, cut=50, low=1e-3):
    return SpectrumProfile("step", n, cut=cut, low=low)


def profile_explicit(eigvals):
    eigvals = np.asarray(eigvals, dtype=float)
    return SpectrumProfile("explicit", eigvals.size, eigvals=eigvals)


class SyntheticOperator(LinearOperator):
    """Operator with an exactly known spectrum; exposes the true trace."""

    def __init__(self, dim, apply_fn, eigvals, name):
        super().__init__(dim, apply_fn, matvec_cost=1, name=name)
        self.eigenvalues = eigvals

    def true_trace(self, f):
        """Exact tr f(A) = sum_i f(lambda_i)."""
        return specfun.trace_f_diag(f, self.eigenvalues)


def random_orthogonal(n, rng):
    """Seeded Haar-ish orthogonal matrix: QR of a Gaussian with the R
    diagonal sign fixed, which makes the draw deterministic and uniform."""
    g = rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def make_synthetic(profile, seed=0, rotated=False):
    """Operator with the profile's eigenvalues, optionally rotated.

    With ``rotated`` off, A is the diagonal matrix of the eigenvalues
    (applied entrywise).  With it on, A = U diag(lam) U^T for a seeded
    random orthogonal U, applied in factored form.  Both expose the same
    exact traces.
    """
    lam = profile.eigenvalues
    n = profile.n
    if not rotated:
        col = lam[:, None]
        return SyntheticOperator(n, lambda b: col * b, lam,
                                 name=f"{profile.kind}-diag")
    u = random_orthogonal(n, generator(seed))

    def apply_fn(block):
        return u @ (lam[:, None] * (u.T @ block))

    return SyntheticOperator(n, apply_fn, lam, name=f"{profile.kind}-rotated")


# ---------------------------------------------------------------------------
# sparse matrices and Gramians
# ---------------------------------------------------------------------------


class MatrixMarketError(ValueError):
    """Malformed MatrixMarket input; carries the offending line number."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SparseMatrix:
    """Coordinate-format sparse matrix with duplicate entries rejected."""

    def __init__(self, rows, cols, coords):
        if rows < 1 or cols < 1:
            raise ValueError(f"matrix shape must be positive, got {rows}x{cols}")
        self.rows = int(rows)
        self.cols = int(cols)
        i = np.asarray([c[0] for c in coords], dtype=np.int64)
        j = np.asarray([c[1] for c in coords], dtype=np.int64)
        v = np.asarray([c[2] for c in coords], dtype=float)
        if i.size:
            if i.min() < 0 or i.max() >= rows or j.min() < 0 or j.max() >= cols:
                raise ValueError("coordinate index out of range")
            flat = i * cols + j
            if np.unique(flat).size != flat.size:
                raise ValueError("duplicate coordinates in sparse matrix")
        self.row_idx, self.col_idx, self.values = i, j, v

    @property
    def nnz(self):
        return self.values.size

    @property
    def density(self):
        return self.nnz / (self.rows * self.cols)

    def to_csr(self):
        return csr_matrix((self.values, (self.row_idx, self.col_idx)),
                          shape=(self.rows, self.cols))

    def to_dense(self):
        return self.to_csr().toarray()


def read_matrix_market(path):
    """Parse a MatrixMarket coordinate file (real, general).

    File indices are 1-based and converted to 0-based.  Malformed
    headers, out-of-range indices, and duplicate entries each raise a
    MatrixMarketError naming the offending line.
    """
    seen = set()
    with open(path, "r") as fh:
        header = fh.readline()
        if not header.startswith("%%MatrixMarket"):
            raise MatrixMarketError("missing %%MatrixMarket banner", 1)
        fields = header.strip().split()
        if fields[1:3] != ["matrix", "coordinate"]:
            raise MatrixMarketError(f"unsupported format {header.strip()!r}", 1)
        if len(fields) >= 4 and fields[3] not in ("real", "integer"):
            raise MatrixMarketError(f"unsupported field type {fields[3]!r}", 1)
        lineno = 1
        size_line = None
        for raw in fh:
            lineno += 1
            stripped = raw.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = (stripped, lineno)
            break
        if size_line is None:
            raise MatrixMarketError("missing size line", lineno)
        parts = size_line[0].split()
        if len(parts) != 3:
            raise MatrixMarketError(f"bad size line {size_line[0]!r}", size_line[1])
        try:
            rows, cols, nnz = (int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError(f"bad size line {size_line[0]!r}", size_line[1])
        coords = []
        for raw in fh:
            lineno += 1
            stripped = raw.strip()
            if not stripped or stripped.startswith("%"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise MatrixMarketError(f"bad entry {stripped!r}", lineno)
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise MatrixMarketError(f"bad entry {stripped!r}", lineno)
            if not (1 <= i <= rows and 1 <= j <= cols):
                raise MatrixMarketError(
                    f"index ({i}, {j}) outside {rows}x{cols}", lineno)
            key = (i, j)
            if key in seen:
                raise MatrixMarketError(f"duplicate entry at ({i}, {j})", lineno)
            seen.add(key)
            coords.append((i - 1, j - 1, v))
        if len(coords) != nnz:
            raise MatrixMarketError(
                f"expected {nnz} entries, found {len(coords)}", lineno)
    return SparseMatrix(rows, cols, coords)


def write_matrix_market(sparse, path):
    """Write a SparseMatrix in coordinate format (1-based indices)."""
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{sparse.rows} {sparse.cols} {sparse.nnz}\n")
        for i, j, v in zip(sparse.row_idx, sparse.col_idx, sparse.values):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def convert_ratings_table(in_path, out_path, rows=943, cols=1682):
    """Convert a tab-separated (user, item, rating, timestamp) table to
    a MatrixMarket file.  Missing ratings are zeros (absent entries)."""
    coords = []
    with open(in_path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped:
                continue
            parts = stripped.split("\t")
            if len(parts) < 3:
                raise ValueError(f"line {lineno}: expected >=3 tab fields")
            user, item, rating = int(parts[0]), int(parts[1]), float(parts[2])
            coords.append((user - 1, item - 1, rating))
    sparse = SparseMatrix(rows, cols, coords)
    write_matrix_market(sparse, out_path)
    return sparse


def synthetic_ratings_matrix(rows=943, cols=1682, nnz=100_000, seed=1312):
    """Ratings-like sparse matrix: integer values 1..5 at ~6% density.

    Stand-in for recommender data when the real dataset is not on disk;
    same shape and sparsity profile.
    """
    rng = generator(seed)
    total = rows * cols
    flat = rng.choice(total, size=nnz, replace=False)
    i, j = np.divmod(flat, cols)
    vals = rng.integers(1, 6, size=nnz).astype(float)
    order = np.argsort(flat)
    return SparseMatrix(rows, cols, list(zip(i[order], j[order], vals[order])))


class GramianOperator(LinearOperator):
    """v -> X (X^T v) without forming X X^T; costs 2 matvec units/column."""

    def __init__(self, x_csr, name="gramian"):
        self.data = x_csr

        def apply_fn(block):
            return x_csr @ (x_csr.T @ block)

        super().__init__(x_csr.shape[0], apply_fn, matvec_cost=2, name=name)


def gramian(x):
    """Gramian operator X X^T of a SparseMatrix X."""
    if x.nnz == 0:
        raise ValueError("gramian of an empty matrix")
    return GramianOperator(x.to_csr())


# ---------------------------------------------------------------------------
# kernel matrices
# ---------------------------------------------------------------------------

_KERNEL_KINDS = ("squared_exponential", "rational_quadratic", "matern32", "matern52")


class KernelSpec:
    """Kernel family with positivity-checked hyperparameters."""

    def __init__(self, kind, lengthscale, alpha=1.0, output_scale=1.0,
                 noise_variance=0.0):
        kind = kind.lower().replace("-", "_")
        if kind not in _KERNEL_KINDS:
            raise ValueError(f"unknown kernel {kind!r}")
        if not lengthscale > 0:
            raise ValueError(f"lengthscale must be positive, got {lengthscale}")
        if kind == "rational_quadratic" and not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        if not output_scale > 0:
            raise ValueError(f"output scale must be positive, got {output_scale}")
        if noise_variance < 0:
            raise ValueError(f"noise variance must be >= 0, got {noise_variance}")
        self.kind = kind
        self.lengthscale = float(lengthscale)
        self.alpha = float(alpha)
        self.output_scale = float(output_scale)
        self.noise_variance = float(noise_variance)

    def correlation(self, dist):
        """kappa(r) for pairwise distances r, with kappa(0) = 1."""
        ell = self.lengthscale
        if self.kind == "squared_exponential":
            return np.exp(-0.5 * (dist / ell) ** 2)
        if self.kind == "rational_quadratic":
            return (1.0 + dist ** 2 / (2.0 * self.alpha * ell ** 2)) ** (-self.alpha)
        if self.kind == "matern32":
            s = np.sqrt(3.0) * dist / ell
            return (1.0 + s) * np.exp(-s)
        s = np.sqrt(5.0) * dist / ell
        return (1.0 + s + s ** 2 / 3.0) * np.exp(-s)

    def __repr__(self):
        return (f"KernelSpec({self.kind}, l={self.lengthscale:g}, "
                f"alpha={self.alpha:g}, scale={self.output_scale:g}, "
                f"noise={self.noise_variance:g})")


class KernelOperator(LinearOperator):
    """Dense operator for A = K / sigma_n^2 with K the scaled kernel matrix.

    The log-determinant target splits as
    logdet(K + sigma_n^2 I) = n log sigma_n^2 + tr log(I + K / sigma_n^2),
    so the trace estimator consumes this operator with f = log1p and the
    harness adds ``logdet_shift``.
    """

    def __init__(self, matrix, spec, shift):
        self.matrix = matrix
        self.spec = spec
        self.logdet_shift = shift
        super().__init__(matrix.shape[0], lambda b: matrix @ b,
                         name=f"kernel-{spec.kind}")


def build_kernel(points, spec):
    """Kernel operator over a point cloud.

    K is built exactly symmetric (each pair computed once, mirrored).
    Requires sigma_n^2 > 0 for the log-determinant decomposition.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 1:
        raise ValueError("need at least one point")
    if spec.noise_variance == 0:
        raise ValueError("noise variance must be positive for the log-det split")
    n = points.shape[0]
    dist = squareform(pdist(points)) if n > 1 else np.zeros((1, 1))
    kernel = spec.output_scale * spec.correlation(dist)
    a = kernel / spec.noise_variance
    shift = n * np.log(spec.noise_variance)
    return KernelOperator(a, spec, shift)


def read_points_csv(path):
    """Point cloud from a CSV with one coordinate row per point."""
    pts = np.loadtxt(path, delimiter=",", ndmin=2)
    return pts


def parse_kernel(spec):
    """Parse a CLI kernel spec like ``matern32:l=0.1`` or
    ``rational-quadratic:l=0.05,alpha=0.25``."""
    head, _, args = spec.strip().lower().partition(":")
    aliases = {
        "squared-exponential": "squared_exponential",
        "se": "squared_exponential",
        "rbf": "squared_exponential",
        "rational-quadratic": "rational_quadratic",
        "rq": "rational_quadratic",
        "matern-32": "matern32",
        "matern-52": "matern52",
    }
    kind = aliases.get(head, head)
    params = {}
    if args:
        for item in args.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ValueError(f"malformed kernel parameter {item!r}")
            params[key.strip()] = float(val)
    return kind, params.get("l", params.get("lengthscale")), params.get("alpha", 1.0)


# ---------------------------------------------------------------------------
# probe checks (used by tests and oracles)
# ---------------------------------------------------------------------------


def spsd_probe_residuals(op, n_probes=100, seed=0):
    """Max symmetry and negative-definiteness residuals over random probes.

    Returns (sym, psd): sym = max |u'(Av) - v'(Au)| / (|Au||v|), and
    psd = max(0, -min v'(Av) / |v|^2).
    """
    rng = generator(seed)
    sym = 0.0
    neg = 0.0
    for _ in range(n_probes):
        u = rng.standard_normal(op.dim)
        v = rng.standard_normal(op.dim)
        au = op.apply(u)
        av = op.apply(v)
        denom = np.linalg.norm(au) * np.linalg.norm(v)
        if denom > 0:
            sym = max(sym, abs(u @ av - v @ au) / denom)
        quad = v @ av / (v @ v)
        neg = max(neg, -quad)
    return sym, neg
