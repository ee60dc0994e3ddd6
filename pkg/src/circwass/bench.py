"""Per-call wall-clock timing of the solvers on random histograms."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .errors import BadParameter
from .fuzz import random_histogram
from .ground_metric import GroundMetricSpec, ground_matrix
from .oracle import lp_exact, sinkhorn_approx
from .solvers import convex_circular, linear_circular

DEFAULT_SIZES = (8, 36, 90, 360, 3600)
BENCH_SOLVERS = ("linear_circular", "convex_circular", "sinkhorn_approx", "lp_exact")
# the quadratic-memory baselines are skipped above this size unless asked for
QUADRATIC_LIMIT = 360


@dataclass
class BenchRow:
    solver: str
    n: int
    mean_us: float
    p95_us: float
    reps: int


def _callable(solver: str, n: int, spec: GroundMetricSpec):
    if solver == "linear_circular":
        return lambda s, t: linear_circular(s, t)
    if solver == "convex_circular":
        return lambda s, t: convex_circular(s, t, spec)
    D = ground_matrix(spec, n)
    if solver == "sinkhorn_approx":
        return lambda s, t: sinkhorn_approx(s, t, D)
    if solver == "lp_exact":
        return lambda s, t: lp_exact(s, t, D)
    raise BadParameter(f"unknown solver {solver!r}; choose from {BENCH_SOLVERS}")


def time_solver(solver: str, n: int, reps: int = 30, warmup: int = 3, seed: int = 0,
                spec: GroundMetricSpec | None = None) -> BenchRow:
    """Time ``reps`` calls on fresh random pairs after ``warmup`` discarded calls."""
    if reps < 1 or warmup < 0:
        raise BadParameter("reps must be >= 1 and warmup >= 0")
    spec = spec or GroundMetricSpec.power(2.0)
    fn = _callable(solver, n, spec)
    rng = np.random.default_rng(seed)
    pairs = [(random_histogram(rng, n, 0.0), random_histogram(rng, n, 0.0)) for _ in range(warmup + reps)]
    times = []
    for k, (s, t) in enumerate(pairs):
        t0 = time.perf_counter()
        fn(s, t)
        if k >= warmup:
            times.append((time.perf_counter() - t0) * 1e6)
    times = np.asarray(times)
    return BenchRow(solver, n, float(times.mean()), float(np.percentile(times, 95)), reps)


def run_bench(solvers=BENCH_SOLVERS, sizes=DEFAULT_SIZES, reps: int = 30, warmup: int = 3,
              seed: int = 0, spec: GroundMetricSpec | None = None,
              quadratic_limit: int | None = QUADRATIC_LIMIT) -> list[BenchRow]:
    rows = []
    for solver in solvers:
        for n in sizes:
            if quadratic_limit is not None and solver in ("sinkhorn_approx", "lp_exact") and n > quadratic_limit:
                continue
            rows.append(time_solver(solver, n, reps, warmup, seed, spec))
    return rows


def loglog_slope(rows: list[BenchRow], solver: str) -> float:
    """Least-squares slope of log(mean time) against log(N)."""
    pts = [(r.n, r.mean_us) for r in rows if r.solver == solver]
    if len(pts) < 2:
        raise BadParameter(f"need at least two sizes for {solver}")
    x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


FIELDS = ["solver", "N", "mean_us", "p95_us", "reps"]


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in rows:
        w.writerow([r.solver, r.n, f"{r.mean_us:.3f}", f"{r.p95_us:.3f}", r.reps])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[BenchRow]:
    return [BenchRow(d["solver"], int(d["N"]), float(d["mean_us"]), float(d["p95_us"]), int(d["reps"]))
            for d in csv.DictReader(io.StringIO(text))]
