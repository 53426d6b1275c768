"""One-dimensional searches shared by the hull solver and the line-segment baseline."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_SCAN = 4097


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Minimiser of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def segment_theta(size: int, vertex: int, lam: float) -> np.ndarray:
    """Barycentric coordinates of the point ``lam`` of the way to anchor ``vertex``."""
    theta = np.zeros(size + 1)
    theta[0], theta[vertex] = 1.0 - lam, lam
    return theta


def segment_violation(problem, lam, vertex: int, min_separation: float) -> tuple[np.ndarray, np.ndarray]:
    """Power to the relay and relative constraint violation at fractions ``lam``
    of the way from the critical node to anchor ``vertex`` (vectorised)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    thetas = np.zeros((len(lam), problem.size + 1))
    thetas[:, 0], thetas[:, vertex] = 1.0 - lam, lam
    pos = thetas @ problem.anchors
    d = np.linalg.norm(pos[:, None, :] - problem.anchors[None, :, :], axis=2)
    m = problem.model
    p = m.tx_power(d)
    e_c = p[:, 0] * problem.flow_cr + m.p_r * problem.flow_in
    e_r = p[:, 1:] @ problem.weights[1:] + m.p_r * problem.flow_cr
    viol = np.maximum(0.0, problem.eps_c * e_r - problem.eps_r * e_c) / (problem.eps_r * e_c)
    viol += np.maximum(0.0, d.max(axis=1) - problem.comm_range) / problem.comm_range
    viol += np.maximum(0.0, min_separation - d[:, 0]) / min_separation
    return p[:, 0], viol


def _point_violation(problem, vertex: int, lam: float, min_separation: float) -> tuple[float, float]:
    """Scalar version evaluated exactly as the placement problem evaluates a point."""
    ev = problem.evaluate(segment_theta(problem.size, vertex, lam))
    d = ev["distances"]
    viol = max(0.0, problem.eps_c * ev["energy_r"] - problem.eps_r * ev["energy_c"]) / (problem.eps_r * ev["energy_c"])
    viol += max(0.0, float(d.max()) - problem.comm_range) / problem.comm_range
    viol += max(0.0, min_separation - float(d[0])) / min_separation
    return ev["p_cr"], viol


def segment_search(problem, vertex: int, min_separation: float) -> float | None:
    """Cheapest feasible fraction along critical -> ``vertex``, or ``None``.

    The penalised power falls while the relay is infeasible and rises with the
    hop length once it is feasible, so golden-section lands near the first
    feasible point and a bisection pins it to the boundary.  When the regime
    jump or the range limit breaks that shape a fine scan brackets the first
    feasible stretch instead.
    """
    def viol(lam: float) -> float:
        return _point_violation(problem, vertex, lam, min_separation)[1]

    big = float(problem.model.tx_power(np.linalg.norm(problem.anchors[vertex] - problem.anchors[0]))) * 1e6

    def penalised(lam: float) -> float:
        p, v = _point_violation(problem, vertex, lam, min_separation)
        return p + big * (1.0 + v) if v > 0 else p

    lam = golden_section(penalised, 0.0, 1.0)
    if viol(lam) == 0:
        # step back until infeasible, then bisect onto the boundary
        step = 1e-12
        lo = max(0.0, lam - step)
        while lo > 0.0 and viol(lo) == 0:
            step *= 4.0
            lo = max(0.0, lam - step)
        if viol(lo) == 0:
            return 0.0
        return _bisect(viol, lo, lam)
    grid = np.linspace(0.0, 1.0, _SCAN)
    ok = segment_violation(problem, grid, vertex, min_separation)[1] == 0
    for k in np.flatnonzero(ok):
        if viol(grid[k]) != 0:
            continue
        if k == 0:
            return 0.0
        return _bisect(viol, grid[k - 1], grid[k])
    return None


def _bisect(viol, lo: float, hi: float) -> float:
    """Boundary fraction in ``(lo, hi]``; ``hi`` must be feasible."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if viol(mid) == 0:
            hi = mid
        else:
            lo = mid
    return float(hi)
