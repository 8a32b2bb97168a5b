"""Experiment harness: trial orchestration, statistics, CSV emission.

A spec names the functions, estimators, sketch-size grid, and trial
count; the harness derives one seed per trial so every estimator and
function sees the same randomness (common random numbers), runs the
grid, and aggregates relative-error statistics against the ground
truth.

Results are deterministic given the spec: wall-clock measurement is off
by default (the wall_ms column is then zero) so emitted CSV bytes are
reproducible run to run.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .estimators import FunctionOracle, ORACLE_DIM_GUARD, resolve_estimator
from .randomness import derive_seed

#: dense-SVD ground-truth guard for rectangular data matrices
SVD_GUARD_SHAPE = (2000, 4000)

CSV_HEADER = ("estimator,function,k,matvec_units,mean_rel_err,"
              "p05,p95,bias,mse,truth,wall_ms")


class GroundTruthUnavailable(RuntimeError):
    """No exact spectrum and the dense oracle guard was exceeded."""


@dataclass
class ExperimentSpec:
    """What to run: functions x estimators x k grid, repeated over trials."""

    functions: list
    estimators: list
    k_grid: list
    trials: int
    base_seed: int = 0
    measure_time: bool = False
    value_shift: float = 0.0

    def validate(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.k_grid:
            raise ValueError("empty k grid")
        if any(b <= a for a, b in zip(self.k_grid, self.k_grid[1:])):
            raise ValueError(f"k grid must be strictly increasing: {self.k_grid}")
        if not self.functions:
            raise ValueError("no spectral functions given")
        for name in self.estimators:
            resolve_estimator(name)


@dataclass
class SummaryRow:
    """Aggregated per-cell statistics over trials."""

    mean_rel_err: float
    p05: float
    p95: float
    bias: float
    mse: float
    truth: float
    absolute_mode: bool = False
    wall_ms: float = 0.0


def summarize(values, truth):
    """Error statistics of per-trial estimates against the truth.

    Percentiles are linearly interpolated order statistics of the
    per-trial relative errors.  A zero truth switches to absolute-error
    mode (flagged): statistics of |v| and raw moments.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 1:
        raise ValueError("need at least one value")
    if truth is None or truth == 0.0:
        errs = np.abs(values)
        p05, p95 = np.percentile(errs, [5.0, 95.0])
        return SummaryRow(
            mean_rel_err=float(np.mean(errs)), p05=float(p05), p95=float(p95),
            bias=float(np.mean(values)), mse=float(np.mean(values ** 2)),
            truth=0.0, absolute_mode=True)
    rel = np.abs(values - truth) / abs(truth)
    p05, p95 = np.percentile(rel, [5.0, 95.0])
    return SummaryRow(
        mean_rel_err=float(np.mean(rel)), p05=float(p05), p95=float(p95),
        bias=float(np.mean(values) - truth),
        mse=float(np.mean((values - truth) ** 2)), truth=float(truth))


@dataclass
class Cell:
    estimator: str
    function: str
    k: int
    matvec_units: int
    summary: SummaryRow


@dataclass
class ExperimentResult:
    cells: list = field(default_factory=list)
    truth_provenance: str = ""

    def cell(self, estimator, function, k):
        for c in self.cells:
            if (c.estimator, c.function, c.k) == (estimator, function, k):
                return c
        raise KeyError((estimator, function, k))

    def series(self):
        """Cells grouped by (estimator, function), ordered by k."""
        keys = []
        for c in self.cells:
            key = (c.estimator, c.function)
            if key not in keys:
                keys.append(key)
        return {key: sorted((c for c in self.cells
                             if (c.estimator, c.function) == key),
                            key=lambda c: c.k)
                for key in keys}


def true_traces_from_eigvals(eigvals):
    """Ground-truth callable f -> tr f(A) for a known spectrum."""
    eigvals = np.asarray(eigvals, dtype=float)

    def truth(f):
        return specfun.trace_f_diag(f, eigvals)

    return truth


def run_experiment(op, spec, truth=None, oracle=None):
    """Run every (estimator, function, k) cell over the trial grid.

    ``truth`` maps a spectral function to the exact trace; None switches
    every cell to absolute-error (estimate-only) mode.  The oracle is
    built on demand for estimators that need exact f(A) access.
    """
    spec.validate()
    infos = [resolve_estimator(name) for name in spec.estimators]
    if oracle is None and any(info.needs_oracle for info in infos):
        if op.dim > ORACLE_DIM_GUARD:
            raise GroundTruthUnavailable(
                f"estimators {[i.name for i in infos if i.needs_oracle]} need "
                f"an exact f(A) oracle; dimension {op.dim} exceeds the "
                f"{ORACLE_DIM_GUARD} guard")
        oracle = FunctionOracle.from_operator(op)

    values = {}
    walls = {}
    units = {}
    for t in range(spec.trials):
        seed_t = derive_seed(spec.base_seed, t)
        for k in spec.k_grid:
            for info in infos:
                t0 = time.perf_counter() if spec.measure_time else 0.0
                ests = info.runner(op, spec.functions, k, seed_t, oracle=oracle)
                elapsed = ((time.perf_counter() - t0) * 1e3 / len(ests)
                           if spec.measure_time else 0.0)
                for f, est in zip(spec.functions, ests):
                    key = (info.name, f.name, k)
                    values.setdefault(key, []).append(
                        est.value + spec.value_shift)
                    walls[key] = walls.get(key, 0.0) + elapsed
                    units[key] = est.matvec_units

    result = ExperimentResult(
        truth_provenance="exact" if truth is not None else "estimate-only")
    for info in infos:
        for f in spec.functions:
            target = truth(f) + spec.value_shift if truth is not None else None
            for k in spec.k_grid:
                key = (info.name, f.name, k)
                row = summarize(values[key], target)
                row.wall_ms = walls[key]
                result.cells.append(Cell(
                    estimator=info.name, function=f.name, k=k,
                    matvec_units=units[key], summary=row))
    result.cells.sort(key=lambda c: (c.estimator, c.function, c.k))
    return result


def _fmt(x):
    return f"{x:.17g}"


def emit_csv(result, path):
    """Write the fixed-schema CSV (one row per cell, %.17g numerics)."""
    try:
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for c in result.cells:
                s = c.summary
                fh.write(",".join([
                    c.estimator, c.function, _fmt(c.k), _fmt(c.matvec_units),
                    _fmt(s.mean_rel_err), _fmt(s.p05), _fmt(s.p95),
                    _fmt(s.bias), _fmt(s.mse), _fmt(s.truth), _fmt(s.wall_ms),
                ]) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc


def read_csv(path):
    """Re-load an emitted CSV into an ExperimentResult."""
    result = ExperimentResult(truth_provenance="from-csv")
    try:
        with open(path, "r") as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise ValueError(f"unexpected CSV header in {path}: {header!r}")
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) != 11:
                    raise ValueError(f"malformed CSV row in {path}: {line!r}")
                est, fn = parts[0], parts[1]
                nums = [float(p) for p in parts[2:]]
                row = SummaryRow(
                    mean_rel_err=nums[2], p05=nums[3], p95=nums[4],
                    bias=nums[5], mse=nums[6], truth=nums[7],
                    absolute_mode=(nums[7] == 0.0), wall_ms=nums[8])
                result.cells.append(Cell(
                    estimator=est, function=fn, k=int(nums[0]),
                    matvec_units=int(nums[1]), summary=row))
    except OSError as exc:
        raise OSError(f"cannot read CSV {path}: {exc}") from exc
    return result


# ---------------------------------------------------------------------------
# bound-vs-empirical sweeps
# ---------------------------------------------------------------------------

BOUND_CSV_HEADER = ("function,k,bound_ift,bound_ft,bound_fn,"
                    "mse_ift,mse_ft,mse_fn")


def bound_sweep(eigvals, functions, k_grid, trials, base_seed=0, rotated=False,
                profile_seed=0):
    """Empirical MSE of iFT/FT/FN against their closed-form bounds.

    Runs the three estimators on shared randomness for every k in the
    grid; returns rows of (function, k, bounds..., empirical MSEs...).
    """
    from . import bounds as bounds_mod
    from .estimators import flextrace_fast, fun_nys, i_flextrace
    from .operators import make_synthetic, profile_explicit

    eigvals = np.asarray(eigvals, dtype=float)
    op = make_synthetic(profile_explicit(eigvals), seed=profile_seed,
                        rotated=rotated)
    oracle = FunctionOracle.from_operator(op)
    truth = {f.name: specfun.trace_f_diag(f, eigvals) for f in functions}

    rows = []
    for k in k_grid:
        errs = {(f.name, est): [] for f in functions
                for est in ("iFT", "FT", "FN")}
        for t in range(trials):
            seed_t = derive_seed(base_seed, t)
            fts = flextrace_fast(op, list(functions), k, seed_t)
            ifts = i_flextrace(op, oracle, list(functions), k, seed_t)
            fns = fun_nys(op, list(functions), k, seed_t)
            for f, ft, ift, fn in zip(functions, fts, ifts, fns):
                errs[(f.name, "FT")].append(ft.value - truth[f.name])
                errs[(f.name, "iFT")].append(ift.value - truth[f.name])
                errs[(f.name, "FN")].append(fn.value - truth[f.name])
        for f in functions:
            bound = bounds_mod.mse_bounds(eigvals, f, k)
            emp = {est: float(np.mean(np.square(errs[(f.name, est)])))
                   for est in ("iFT", "FT", "FN")}
            rows.append({
                "function": f.name, "k": k,
                "bound_ift": bound["iFT"], "bound_ft": bound["FT"],
                "bound_fn": bound["FN"],
                "mse_ift": emp["iFT"], "mse_ft": emp["FT"],
                "mse_fn": emp["FN"],
            })
    return rows


def emit_bound_csv(rows, path):
    def cell(x):
        return "" if x is None else _fmt(x)

    try:
        with open(path, "w") as fh:
            fh.write(BOUND_CSV_HEADER + "\n")
            for r in rows:
                fh.write(",".join([
                    r["function"], _fmt(r["k"]),
                    cell(r["bound_ift"]), cell(r["bound_ft"]),
                    cell(r["bound_fn"]),
                    _fmt(r["mse_ift"]), _fmt(r["mse_ft"]), _fmt(r["mse_fn"]),
                ]) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc
