"""Reference solvers for the general discrete transport problem.

``lp_exact`` solves the transportation LP for an arbitrary ground matrix and
certifies optimality through the returned duals. ``sinkhorn_approx`` is the
entropic approximation used as the quadratic-cost baseline.
"""

from __future__ import annotations

import functools
import logging

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from .errors import BadParameter, InfeasibleMarginals, LengthMismatch, NotConverged, NumericalFailure
from .histogram import check_pair
from .result import LossValue, TransportPlan

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
POSITIVE_FLOOR = 1e-12


@functools.lru_cache(maxsize=64)
def _marginal_operator(n: int, m: int) -> csr_matrix:
    cols = np.arange(n * m)
    rows = np.concatenate([np.repeat(np.arange(n), m), n + np.tile(np.arange(m), n)])
    data = np.ones(2 * n * m)
    return csr_matrix((data, (rows, np.concatenate([cols, cols]))), shape=(n + m, n * m))


def _check_ground(D, n: int) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.shape != (n, n):
        raise LengthMismatch(f"ground matrix has shape {D.shape}, expected {(n, n)}")
    if np.any(D < 0) or not np.all(np.isfinite(D)):
        raise BadParameter("ground matrix must be finite and non-negative")
    return D


def lp_exact(s, t, D) -> tuple[LossValue, TransportPlan]:
    """Minimum-cost transport plan between ``s`` and ``t`` under ``D``.

    Solved with the HiGHS dual simplex, then certified: the returned duals
    must be feasible (``D - u - v >= 0``) and close the duality gap, and the
    plan must meet both marginals within 1e-9.
    """
    s, t = check_pair(s, t)
    n = s.shape[0]
    D = _check_ground(D, n)
    if abs(s.sum() - t.sum()) > FEAS_TOL:
        raise InfeasibleMarginals(f"total masses differ: {s.sum()} vs {t.sum()}")
    res = linprog(
        D.ravel(),
        A_eq=_marginal_operator(n, n),
        b_eq=np.concatenate([s, t]),
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10,
                 "presolve": False},
    )
    if res.status == 2:
        raise InfeasibleMarginals(res.message)
    if res.status != 0:
        raise NumericalFailure(f"LP solver failed: {res.message}")

    W = np.clip(res.x.reshape(n, n), 0.0, None)
    if (np.abs(W.sum(axis=1) - s).max() > FEAS_TOL or np.abs(W.sum(axis=0) - t).max() > FEAS_TOL):
        raise NumericalFailure("transport plan violates the marginals beyond 1e-9")

    cost = float(np.sum(D * W))
    duals = res.eqlin.marginals
    u, v = duals[:n], duals[n:]
    scale = max(1.0, float(D.max()))
    reduced = D - u[:, None] - v[None, :]
    gap = abs(cost - float(s @ u + t @ v))
    if reduced.min() < -1e-7 * scale or gap > 1e-7 * scale:
        raise NumericalFailure(f"optimality certificate failed (gap {gap:.3g}, reduced {reduced.min():.3g})")
    return (LossValue(cost, "lp_exact", info={"u": u, "v": v}), TransportPlan(W))


def _floor(a: np.ndarray, floor: float) -> np.ndarray:
    a = np.maximum(a, 0.0) + floor
    return a / a.sum()


def round_to_marginals(P: np.ndarray, r: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Nearest-style repair of a positive plan so its marginals are exactly ``r`` and ``c``.

    Rows are scaled down to at most ``r``, then columns to at most ``c``, and
    the missing mass is added back as a rank-one correction. The change is
    bounded by the l1 marginal violation of ``P``.
    """
    P = P * np.minimum(1.0, r / np.maximum(P.sum(axis=1), 1e-300))[:, None]
    P = P * np.minimum(1.0, c / np.maximum(P.sum(axis=0), 1e-300))[None, :]
    er = np.maximum(r - P.sum(axis=1), 0.0)
    ec = np.maximum(c - P.sum(axis=0), 0.0)
    total = er.sum()
    if total > 0:
        P = P + np.outer(er, ec) / total
    return P


def sinkhorn_approx(s, t, D, reg: float | None = None, max_iters: int = 10_000,
                    tol: float = 1e-9, floor: float = POSITIVE_FLOOR,
                    strict: bool = False, check_every: int = 10) -> LossValue:
    """Transport cost of the entropically regularised plan.

    Scaling iterations with absorption of large scalings into log-domain
    potentials, so the kernel never underflows however small ``reg`` is.
    ``reg`` defaults to ``0.01 * max(D)``. Stops once the L1 row-marginal
    violation drops below ``tol``. If ``max_iters`` is reached first, raises
    :class:`NotConverged` when ``strict`` is set, otherwise returns the current
    cost with ``info["converged"] = False``. Inputs whose optimal plan is
    nearly degenerate can need far more than the default budget.

    The reported cost is that of the regularised plan after
    :func:`round_to_marginals` onto ``s`` and ``t``, so it is the cost of a
    feasible plan and never undercuts :func:`lp_exact`.
    """
    s, t = check_pair(s, t)
    n = s.shape[0]
    D = _check_ground(D, n)
    if reg is None:
        reg = 0.01 * float(D.max()) if D.max() > 0 else 1.0
    if not reg > 0:
        raise BadParameter(f"regularisation must be positive, got {reg}")
    if max_iters < 1 or not tol > 0:
        raise BadParameter("max_iters must be >= 1 and tol > 0")

    a = _floor(s, floor)
    b = _floor(t, floor)
    # c-transform start: every row and column of the kernel has a unit entry
    f = D.min(axis=1)
    g = (D - f[:, None]).min(axis=0)

    def kernel():
        return np.exp((f[:, None] + g[None, :] - D) / reg)

    K = kernel()
    u = np.ones(n)
    v = np.ones(n)
    violations = []
    violation = np.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        u = a / (K @ v)
        v = b / (K.T @ u)
        if np.abs(np.log(u)).max() > 50 or np.abs(np.log(v)).max() > 50:
            f = f + reg * np.log(u)
            g = g + reg * np.log(v)
            K = kernel()
            u = np.ones(n)
            v = np.ones(n)
        if it % check_every == 0 or it == max_iters:
            violation = float(np.abs(u * (K @ v) - a).sum())
            violations.append(violation)
            if violation < tol:
                converged = True
                break
    P = round_to_marginals(u[:, None] * K * v[None, :], s, t)
    cost = float(np.sum(P * D))
    if not converged:
        msg = f"Sinkhorn stopped after {it} iterations with marginal violation {violation:.3g}"
        if strict:
            raise NotConverged(msg, violation)
        log.warning(msg)
    return LossValue(cost, "sinkhorn", info={"iterations": it, "violation": violation,
                                             "converged": converged, "violations": violations,
                                             "reg": reg, "plan": P})
