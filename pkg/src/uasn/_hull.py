"""Compiled kernels for relay placement inside a convex hull.

The hull is parameterised by barycentric weights ``theta`` over ``m`` anchor
points; anchor 0 is the critical node, anchors ``1..m-1`` its upper
neighbours.  ``w[a]`` is the flow the relay forwards to anchor ``a`` (so
``w[0] == 0``).  Scalar parameters travel in one array, see ``PRM_*``.
"""

import math

import numpy as np
from numba import njit

PRM_PS_MW = 0
PRM_BETA = 1
PRM_DT = 2
PRM_PR = 3
PRM_RCR = 4
PRM_IN_C = 5
PRM_EPS_C = 6
PRM_EPS_R = 7
PRM_CR = 8
PRM_MIN_SEP = 9
PRM_RTOL = 10
PRM_KAPPA = 11
PRM_GAMMA0 = 12
PRM_SIZE = 13

_EDGE = 1e-9
# distance past the threshold at which the quadratic wall reaches the regime jump
_WALL_WIDTH = 0.5


@njit(cache=True)
def power(d, ps_mw, beta, dt):
    e = math.exp(beta * d)
    if d < dt:
        return (ps_mw + e * d * d) * 1e-3
    d2 = d * d
    return (ps_mw + e * d2 * d2) * 1e-3


@njit(cache=True)
def dpower(d, beta, dt):
    e = math.exp(beta * d)
    if d < dt:
        return e * (beta * d * d + 2.0 * d) * 1e-3
    d3 = d * d * d
    return e * (beta * d3 * d + 4.0 * d3) * 1e-3


@njit(cache=True)
def power_branch(d, ps_mw, beta, quartic):
    e = math.exp(beta * d)
    if quartic:
        d2 = d * d
        return (ps_mw + e * d2 * d2) * 1e-3
    return (ps_mw + e * d * d) * 1e-3


@njit(cache=True)
def dpower_branch(d, beta, quartic):
    e = math.exp(beta * d)
    if quartic:
        d3 = d * d * d
        return e * (beta * d3 * d + 4.0 * d3) * 1e-3
    return e * (beta * d * d + 2.0 * d) * 1e-3


@njit(cache=True)
def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    tau = 0.0
    for i in range(n):
        css += u[i]
        t = (css - 1.0) / (i + 1)
        if u[i] - t > 0:
            tau = t
    out = np.empty(n)
    for i in range(n):
        out[i] = max(v[i] - tau, 0.0)
    return out


@njit(cache=True)
def geometry(theta, A, dist, grad):
    """Distances from the hull point to every anchor and their theta-gradients."""
    m = A.shape[0]
    pos = np.zeros(3)
    for i in range(m):
        for k in range(3):
            pos[k] += theta[i] * A[i, k]
    for a in range(m):
        dx = pos[0] - A[a, 0]
        dy = pos[1] - A[a, 1]
        dz = pos[2] - A[a, 2]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        dist[a] = d
        for i in range(m):
            if d > 0.0:
                grad[a, i] = (A[i, 0] * dx + A[i, 1] * dy + A[i, 2] * dz) / d
            else:
                grad[a, i] = 0.0


@njit(cache=True)
def distance_to_critical(theta, A):
    m = A.shape[0]
    s = 0.0
    for k in range(3):
        x = 0.0
        for i in range(m):
            x += theta[i] * A[i, k]
        s += (x - A[0, k]) ** 2
    return math.sqrt(s)


@njit(cache=True)
def _power_margin(d, ps_mw, beta, dt, upper):
    """Power with the regime picked pessimistically within a hair of the threshold."""
    e = math.exp(beta * d)
    if upper:
        quartic = d >= dt * (1.0 - _EDGE)
    else:
        quartic = d >= dt * (1.0 + _EDGE)
    if quartic:
        d2 = d * d
        return (ps_mw + e * d2 * d2) * 1e-3
    return (ps_mw + e * d * d) * 1e-3


@njit(cache=True)
def feasible(theta, A, w, prm):
    """Exact check of range, separation and relay-outlives-critical.

    Rounding-safe: near the regime threshold the relay's hops are charged the
    quartic branch and the critical hop the quadratic one.
    """
    m = A.shape[0]
    dist = np.empty(m)
    grad = np.empty((m, m))
    geometry(theta, A, dist, grad)
    if dist[0] < prm[PRM_MIN_SEP] * (1.0 + _EDGE):
        return False
    cr = prm[PRM_CR] * (1.0 - _EDGE)
    for a in range(m):
        if dist[a] > cr:
            return False
    ps, beta, dt = prm[PRM_PS_MW], prm[PRM_BETA], prm[PRM_DT]
    e_r = prm[PRM_PR] * prm[PRM_RCR]
    for a in range(1, m):
        e_r += w[a] * _power_margin(dist[a], ps, beta, dt, True)
    e_c = _power_margin(dist[0], ps, beta, dt, False) * prm[PRM_RCR] + prm[PRM_PR] * prm[PRM_IN_C]
    return prm[PRM_EPS_R] * e_c >= (1.0 - prm[PRM_RTOL]) * prm[PRM_EPS_C] * e_r


@njit(cache=True)
def _lagrangian(theta, lam, A, w, prm, theta_k, g0, p0k, sf, sh, quartic, wall, gout):
    m = A.shape[0]
    dist = np.empty(m)
    grad = np.empty((m, m))
    geometry(theta, A, dist, grad)
    ps, beta, dt = prm[PRM_PS_MW], prm[PRM_BETA], prm[PRM_DT]
    kappa = prm[PRM_KAPPA]
    f = dist[0] * dist[0]
    h = -prm[PRM_GAMMA0] - kappa * p0k
    for i in range(m):
        gout[i] = 2.0 * dist[0] * grad[0, i] / sf - lam * kappa * g0[i] / sh
        h -= kappa * g0[i] * (theta[i] - theta_k[i])
    for a in range(1, m):
        h += w[a] * power_branch(dist[a], ps, beta, quartic[a])
        dp = w[a] * dpower_branch(dist[a], beta, quartic[a])
        if not quartic[a] and dist[a] > dt:
            # convex wall standing in for the jump to the quartic regime
            over = dist[a] - dt
            h += w[a] * wall * over * over
            dp += w[a] * 2.0 * wall * over
        for i in range(m):
            gout[i] += lam * dp * grad[a, i] / sh
    return f / sf + lam * h / sh, h


@njit(cache=True)
def _projected_gradient(theta0, lam, A, w, prm, theta_k, g0, p0k, sf, sh, quartic, wall, max_iter):
    """Minimise ``f/sf + lam*h/sh`` over the simplex; Armijo backtracking, BB steps."""
    m = A.shape[0]
    theta = theta0.copy()
    g = np.empty(m)
    gn = np.empty(m)
    val, h = _lagrangian(theta, lam, A, w, prm, theta_k, g0, p0k, sf, sh, quartic, wall, g)
    step = 1.0
    for _ in range(max_iter):
        moved = False
        for _bt in range(80):
            cand = project_simplex(theta - step * g)
            valn, hn = _lagrangian(cand, lam, A, w, prm, theta_k, g0, p0k, sf, sh, quartic, wall, gn)
            lin = 0.0
            sq = 0.0
            for i in range(m):
                di = cand[i] - theta[i]
                lin += g[i] * di
                sq += di * di
            if valn <= val + lin + sq / (2.0 * step) + 1e-15 * abs(val):
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        sy = 0.0
        ss = 0.0
        for i in range(m):
            si = cand[i] - theta[i]
            ss += si * si
            sy += si * (gn[i] - g[i])
        theta = cand
        val = valn
        h = hn
        for i in range(m):
            g[i] = gn[i]
        if ss < 1e-26:
            break
        if sy > 0.0:
            step = min(max(ss / sy, 1e-12), 1e12)
        else:
            step = min(step * 4.0, 1e12)
    return theta, h


@njit(cache=True)
def convex_subproblem(theta_k, A, w, prm, max_iter):
    """One convex-concave step.

    Linearises the concave side at ``theta_k`` and minimises the squared
    distance to the critical node by bisection on the Lagrange multiplier of
    the convexified lifetime constraint.
    """
    m = A.shape[0]
    dist = np.empty(m)
    grad = np.empty((m, m))
    geometry(theta_k, A, dist, grad)
    ps, beta, dt = prm[PRM_PS_MW], prm[PRM_BETA], prm[PRM_DT]
    # each hop keeps the power regime it has at theta_k, which makes the
    # subproblem convex; regime changes are caught by the outer line search
    quartic = np.empty(m, dtype=np.bool_)
    for a in range(m):
        quartic[a] = dist[a] >= dt
    jump = math.exp(beta * dt) * (dt**4 - dt**2) * 1e-3
    wall = jump / (_WALL_WIDTH * _WALL_WIDTH)
    p0k = power(dist[0], ps, beta, dt)
    dp0 = dpower(dist[0], beta, dt)
    g0 = np.empty(m)
    for i in range(m):
        g0[i] = dp0 * grad[0, i]
    sf = 0.0
    for a in range(1, m):
        s = 0.0
        for k in range(3):
            s += (A[a, k] - A[0, k]) ** 2
        sf = max(sf, s)
    sf = max(sf, 1e-12)
    phi = 0.0
    for a in range(1, m):
        phi += w[a] * power(dist[a], ps, beta, dt)
    sh = abs(prm[PRM_GAMMA0]) + prm[PRM_KAPPA] * p0k + phi + 1e-300

    th0, h0 = _projected_gradient(theta_k, 0.0, A, w, prm, theta_k, g0, p0k, sf, sh, quartic, wall, max_iter)
    if h0 <= 0.0:
        return th0
    lam_lo = 0.0
    lam_hi = 1.0
    th_hi, h_hi = _projected_gradient(theta_k, lam_hi, A, w, prm, theta_k, g0, p0k, sf, sh, quartic, wall, max_iter)
    grow = 0
    while h_hi > 0.0 and grow < 60:
        lam_lo = lam_hi
        lam_hi *= 4.0
        th_hi, h_hi = _projected_gradient(th_hi, lam_hi, A, w, prm, theta_k, g0, p0k, sf, sh, quartic, wall, max_iter)
        grow += 1
    if h_hi > 0.0:
        return theta_k.copy()
    for _ in range(60):
        if lam_hi - lam_lo <= 1e-9 * lam_hi:
            break
        lam = 0.5 * (lam_lo + lam_hi)
        th, hm = _projected_gradient(th_hi, lam, A, w, prm, theta_k, g0, p0k, sf, sh, quartic, wall, max_iter)
        if hm <= 0.0:
            lam_hi = lam
            th_hi = th
        else:
            lam_lo = lam
    return th_hi


@njit(cache=True)
def ccp(theta0, A, w, prm, max_outer, rtol, max_inner):
    """Convex-concave procedure from a feasible start.

    Every accepted iterate passes the exact feasibility test; the subproblem
    point is pulled back towards the current iterate until it does.
    Returns ``(theta, iterations, converged)``.
    """
    ps, beta, dt = prm[PRM_PS_MW], prm[PRM_BETA], prm[PRM_DT]
    theta = theta0.copy()
    obj = power(distance_to_critical(theta, A), ps, beta, dt)
    it = 0
    while it < max_outer:
        it += 1
        target = convex_subproblem(theta, A, w, prm, max_inner)
        t = 1.0
        accepted = False
        new_obj = obj
        cand = theta
        for _ in range(50):
            cand = theta + t * (target - theta)
            if feasible(cand, A, w, prm):
                new_obj = power(distance_to_critical(cand, A), ps, beta, dt)
                if new_obj < obj:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            return theta, it, True
        rel = (obj - new_obj) / obj
        theta = cand
        obj = new_obj
        if rel < rtol:
            return theta, it, True
    return theta, it, False


@njit(cache=True)
def pull_towards_critical(theta, A, w, prm):
    """Slide along the ray to the critical node while staying feasible."""
    m = A.shape[0]
    e0 = np.zeros(m)
    e0[0] = 1.0
    lo = 0.0
    hi = 1.0
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if feasible(theta + mid * (e0 - theta), A, w, prm):
            lo = mid
        else:
            hi = mid
    return theta + lo * (e0 - theta)


@njit(cache=True)
def segment_boundary(target, A, w, prm, n_scan):
    """Closest-to-critical feasible point on the segment from anchor 0 to ``target``.

    Scans ``n_scan`` points outward, then bisects the first infeasible-to-feasible
    transition.  Returns ``(theta, found)``.
    """
    m = A.shape[0]
    e0 = np.zeros(m)
    e0[0] = 1.0
    prev = 0.0
    for i in range(1, n_scan + 1):
        lam = i / n_scan
        if feasible(e0 + lam * (target - e0), A, w, prm):
            lo = prev
            hi = lam
            for _ in range(64):
                mid = 0.5 * (lo + hi)
                if feasible(e0 + mid * (target - e0), A, w, prm):
                    hi = mid
                else:
                    lo = mid
            return e0 + hi * (target - e0), True
        prev = lam
    return e0.copy(), False


@njit(cache=True)
def feasible_batch(thetas, A, w, prm):
    out = np.empty(thetas.shape[0], dtype=np.bool_)
    for i in range(thetas.shape[0]):
        out[i] = feasible(thetas[i], A, w, prm)
    return out


@njit(cache=True)
def distance_batch(thetas, A):
    out = np.empty(thetas.shape[0])
    for i in range(thetas.shape[0]):
        out[i] = distance_to_critical(thetas[i], A)
    return out


@njit(cache=True)
def compass_polish(theta, A, w, prm, step0, min_step):
    """Pairwise mass transfers between anchors, kept while feasible and closer.

    Derivative-free, so it walks across the regime threshold where the
    linearisation in :func:`ccp` cannot see the gain.
    """
    m = A.shape[0]
    best = theta.copy()
    obj = distance_to_critical(best, A)
    step = step0
    while step >= min_step:
        improved = False
        for a in range(m):
            for b in range(m):
                if a == b or best[b] <= 0.0:
                    continue
                delta = min(step, best[b])
                cand = best.copy()
                cand[a] += delta
                cand[b] -= delta
                if feasible(cand, A, w, prm):
                    d = distance_to_critical(cand, A)
                    if d < obj:
                        best = cand
                        obj = d
                        improved = True
        if not improved:
            step *= 0.5
    return best
