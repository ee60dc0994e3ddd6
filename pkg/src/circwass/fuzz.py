"""Random cross-checks of the closed-form solvers against the LP."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BadParameter
from .ground_metric import GroundMetricSpec, MetricKind, ground_matrix
from .oracle import lp_exact
from .solvers import QuantilePrecision, convex_circular, linear_circular, one_hot_loss, step_l1

SOLVERS = ("linear", "step", "one_hot", "convex")
CONVEX_SPECS = (GroundMetricSpec.power(2.0), GroundMetricSpec.power(3.0), GroundMetricSpec.huber(2.0))
ONE_HOT_SPECS = (GroundMetricSpec.linear(), GroundMetricSpec.power(2.0), GroundMetricSpec.power(0.5),
                 GroundMetricSpec.huber(2.0), GroundMetricSpec(MetricKind.CHORD), GroundMetricSpec.step())


def random_histogram(rng: np.random.Generator, n: int, sparsity: float = 0.2) -> np.ndarray:
    """Dirichlet-ish draw with some bins zeroed; never all zero."""
    v = rng.exponential(size=n)
    v[rng.random(n) < sparsity] = 0.0
    if v.sum() == 0:
        v[rng.integers(n)] = 1.0
    return v / v.sum()


def convex_tolerance(spec: GroundMetricSpec, n: int, M: int) -> float:
    """Error allowed for the grid search: ``f(N/2) * 2N / M``."""
    return float(spec.with_bins(n)(n / 2.0)) * 2.0 * n / M


@dataclass
class CaseResult:
    index: int
    solver: str
    metric: str
    n: int
    value: float
    oracle: float
    tolerance: float

    @property
    def gap(self) -> float:
        return abs(self.value - self.oracle)

    @property
    def ok(self) -> bool:
        return self.gap <= self.tolerance


def _run_case(index: int, seed: np.random.SeedSequence, solver: str, max_n: int, M: int) -> list[CaseResult]:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, max_n + 1))
    s = random_histogram(rng, n)
    out = []
    if solver == "one_hot":
        j = int(rng.integers(n))
        t = np.zeros(n)
        t[j] = 1.0
        for spec in ONE_HOT_SPECS:
            ref = lp_exact(s, t, ground_matrix(spec, n))[0].value
            out.append(CaseResult(index, solver, spec.label, n, one_hot_loss(s, j, spec).value, ref, 1e-9))
        return out
    t = random_histogram(rng, n)
    if solver == "linear":
        spec = GroundMetricSpec.linear()
        ref = lp_exact(s, t, ground_matrix(spec, n))[0].value
        out.append(CaseResult(index, solver, spec.label, n, linear_circular(s, t).value, ref, 1e-6))
    elif solver == "step":
        spec = GroundMetricSpec.step()
        ref = lp_exact(s, t, ground_matrix(spec, n))[0].value
        out.append(CaseResult(index, solver, spec.label, n, step_l1(s, t).value, ref, 1e-9))
    else:
        prec = QuantilePrecision(M)
        for spec in CONVEX_SPECS:
            ref = lp_exact(s, t, ground_matrix(spec, n))[0].value
            val = convex_circular(s, t, spec, prec).value
            out.append(CaseResult(index, solver, spec.label, n, val, ref, convex_tolerance(spec, n, M)))
    return out


def run_fuzz(cases: int = 500, max_n: int = 16, solvers=SOLVERS, seed: int = 0,
             M: int = 10**6, workers: int = 1) -> dict:
    """Compare each solver with ``lp_exact`` on ``cases`` random inputs.

    Returns a JSON-ready report with the largest gap per solver and metric
    and the list of cases that broke their tolerance. Results do not depend
    on ``workers``.
    """
    if cases < 1 or max_n < 3:
        raise BadParameter("need cases >= 1 and max_n >= 3")
    unknown = set(solvers) - set(SOLVERS)
    if unknown:
        raise BadParameter(f"unknown solvers {sorted(unknown)}; choose from {SOLVERS}")
    seeds = np.random.SeedSequence(seed).spawn(cases * len(solvers))
    jobs = [(i, seeds[i], solver, max_n, M) for i, solver in
            enumerate(solver for _ in range(cases) for solver in solvers)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            batches = list(pool.map(lambda job: _run_case(*job), jobs))
    else:
        batches = [_run_case(*job) for job in jobs]
    results = sorted((r for b in batches for r in b), key=lambda r: (r.index, r.metric))

    summary: dict[str, dict] = {}
    for r in results:
        key = f"{r.solver}:{r.metric}"
        entry = summary.setdefault(key, {"cases": 0, "max_gap": 0.0, "max_tolerance_ratio": 0.0})
        entry["cases"] += 1
        entry["max_gap"] = max(entry["max_gap"], r.gap)
        ratio = r.gap / r.tolerance if r.tolerance > 0 else 0.0
        entry["max_tolerance_ratio"] = max(entry["max_tolerance_ratio"], ratio)
    violations = [dict(index=r.index, solver=r.solver, metric=r.metric, n=r.n, value=r.value,
                       oracle=r.oracle, gap=r.gap, tolerance=r.tolerance) for r in results if not r.ok]
    return {"seed": seed, "cases": cases, "max_n": max_n, "M": M, "solvers": summary,
            "violations": violations, "ok": not violations}
