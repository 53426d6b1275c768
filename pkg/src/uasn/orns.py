"""Relay placement that maximises the critical node's lifetime.

One relay at a time: find the node that dies first, look at the nodes it
sends to, and put a relay inside the convex hull of those points so that the
critical node's hop is as short as possible while the relay itself still
outlives the critical node.  The last condition is a difference of convex
power sums in the barycentric weights and is handled with a convex-concave
procedure (see :mod:`uasn._hull`).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import _hull
from .linesearch import segment_search, segment_theta
from .model import PRIMARY_ENERGY_J, Deployment, EnergyModel, lifetimes, network_lifetime
from .routing import UpperNeighborSet, build_initial_rate_array, reroute_through_relay, upper_neighbors


class NoCriticalNode(RuntimeError):
    """Every sensor and relay has infinite lifetime."""


class PlacementInfeasible(RuntimeError):
    """No point of the hull lets the relay outlive the critical node."""


class DegenerateCritical(ValueError):
    pass


@dataclass(frozen=True)
class PlacementSettings:
    min_separation: float = 1.0
    lifetime_rtol: float = 1e-6
    feasibility_tol: float = 1e-8
    max_outer: int = 500
    outer_rtol: float = 1e-6
    max_inner: int = 200
    n_starts: int = 24
    relay_energy: float = PRIMARY_ENERGY_J


def find_critical_node(R: np.ndarray, deployment: Deployment, model: EnergyModel, exclude: Sequence[int] = ()) -> int:
    """Sensor or relay with the smallest lifetime; ties go to the lowest id."""
    tau = lifetimes(R, deployment, model)
    tau[list(exclude)] = math.inf
    if not np.isfinite(tau).any():
        raise NoCriticalNode("all lifetimes are infinite")
    return int(np.argmin(tau))


@dataclass(frozen=True)
class LifetimeConstraint:
    """Linear form ``a . x <= gamma0`` of "relay outlives critical node".

    ``x`` is laid out as ``[p_r1..p_rk, p_cr, d_cr, l_r (3), theta (k+1)]``
    with powers in W/bit, so ``a`` is nonzero only on the first ``k + 1``
    entries.
    """

    gamma0: float
    diag: np.ndarray
    flow_cr: float
    flow_in: float
    eps_c: float
    eps_r: float

    @property
    def n_neighbors(self) -> int:
        return (len(self.diag) - 6) // 2

    def lhs(self, x: np.ndarray) -> float:
        return float(self.diag @ x)

    def satisfied(self, x: np.ndarray) -> bool:
        return self.lhs(x) <= self.gamma0


def build_lifetime_constraint(
    c: int,
    r: int | None,
    N: UpperNeighborSet,
    R: np.ndarray,
    deployment: Deployment,
    model: EnergyModel,
    relay_energy: float | None = None,
) -> LifetimeConstraint:
    """Coefficients of the linearised relay-lifetime constraint.

    Works on the array before the reroute (flows read from ``c``'s row) or
    after it (flows read through ``r``).
    """
    eps_c = float(deployment.energies[c])
    if eps_c <= 0:
        raise DegenerateCritical(f"critical node {c} has no residual energy")
    idx = list(N.neighbors)
    if r is not None and r < R.shape[0] and R[c, r] > 0:
        out = R[r, idx].astype(float)
        flow_cr = float(R[c, r])
    else:
        out = R[c, idx].astype(float)
        flow_cr = float(out.sum())
    if relay_energy is not None:
        eps_r = float(relay_energy)
    elif r is not None and r < len(deployment):
        eps_r = float(deployment.energies[r])
    else:
        eps_r = PRIMARY_ENERGY_J
    flow_in = float(R[:, c].sum())
    ratio = eps_r / eps_c
    gamma0 = model.p_r * flow_in * ratio - model.p_r * flow_cr
    k = len(idx)
    diag = np.zeros(2 * k + 6)
    diag[:k] = out
    diag[k] = -ratio * flow_cr
    return LifetimeConstraint(gamma0, diag, flow_cr, flow_in, eps_c, eps_r)


@dataclass(frozen=True)
class PlacementProblem:
    """Data of one relay placement: anchors, forwarded flows, energies."""

    critical: int
    neighbors: tuple[int, ...]
    anchors: np.ndarray  # (k+1, 3); row 0 is the critical node
    weights: np.ndarray  # (k+1,); weights[0] == 0
    flow_cr: float
    flow_in: float
    eps_c: float
    eps_r: float
    comm_range: float
    model: EnergyModel

    @classmethod
    def build(
        cls,
        c: int,
        N: UpperNeighborSet,
        R: np.ndarray,
        deployment: Deployment,
        model: EnergyModel,
        relay_energy: float = PRIMARY_ENERGY_J,
    ) -> "PlacementProblem":
        if len(N) == 0:
            raise ValueError(f"node {c} sends nothing; there is nothing to relay")
        idx = list(N.neighbors)
        anchors = deployment.positions[[c, *idx]].copy()
        weights = np.concatenate([[0.0], R[c, idx].astype(float)])
        eps_c = float(deployment.energies[c])
        if eps_c <= 0:
            raise DegenerateCritical(f"critical node {c} has no residual energy")
        return cls(
            critical=int(c),
            neighbors=tuple(idx),
            anchors=anchors,
            weights=weights,
            flow_cr=float(weights.sum()),
            flow_in=float(R[:, c].sum()),
            eps_c=eps_c,
            eps_r=float(relay_energy),
            comm_range=deployment.comm_range,
            model=model,
        )

    @property
    def size(self) -> int:
        return len(self.neighbors)

    def params(self, settings: PlacementSettings) -> np.ndarray:
        m = self.model
        prm = np.zeros(_hull.PRM_SIZE)
        ratio = self.eps_r / self.eps_c
        prm[_hull.PRM_PS_MW] = m.p_s_mw
        prm[_hull.PRM_BETA] = math.log(m.alpha) / 1000.0
        prm[_hull.PRM_DT] = m.d_t
        prm[_hull.PRM_PR] = m.p_r
        prm[_hull.PRM_RCR] = self.flow_cr
        prm[_hull.PRM_IN_C] = self.flow_in
        prm[_hull.PRM_EPS_C] = self.eps_c
        prm[_hull.PRM_EPS_R] = self.eps_r
        prm[_hull.PRM_CR] = self.comm_range
        prm[_hull.PRM_MIN_SEP] = settings.min_separation
        # the kernels aim at the exact constraint; the tolerance is kept for acceptance
        prm[_hull.PRM_RTOL] = 0.0
        prm[_hull.PRM_KAPPA] = ratio * self.flow_cr
        prm[_hull.PRM_GAMMA0] = m.p_r * self.flow_in * ratio - m.p_r * self.flow_cr
        return prm

    def position(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta) @ self.anchors

    def evaluate(self, theta: np.ndarray) -> dict:
        """Powers (W/bit) and lifetimes with the relay at ``position(theta)``."""
        pos = self.position(theta)
        d = np.linalg.norm(self.anchors - pos, axis=1)
        p = self.model.tx_power(d)
        e_c = p[0] * self.flow_cr + self.model.p_r * self.flow_in
        e_r = float(p[1:] @ self.weights[1:]) + self.model.p_r * self.flow_cr
        return {
            "position": pos,
            "distances": d,
            "p_cr": float(p[0]),
            "p_rj": p[1:],
            "tau_c": self.eps_c / e_c,
            "tau_r": self.eps_r / e_r,
            "energy_c": e_c,
            "energy_r": e_r,
        }

    def decision_vector(self, theta: np.ndarray) -> np.ndarray:
        """``[p_r, p_cr, d_cr, l_r, theta]`` computed consistently from ``theta``."""
        ev = self.evaluate(theta)
        return np.concatenate([ev["p_rj"], [ev["p_cr"], ev["distances"][0]], ev["position"], np.asarray(theta, float)])

    def lifetime_constraint(self) -> LifetimeConstraint:
        ratio = self.eps_r / self.eps_c
        k = self.size
        diag = np.zeros(2 * k + 6)
        diag[:k] = self.weights[1:]
        diag[k] = -ratio * self.flow_cr
        gamma0 = self.model.p_r * self.flow_in * ratio - self.model.p_r * self.flow_cr
        return LifetimeConstraint(gamma0, diag, self.flow_cr, self.flow_in, self.eps_c, self.eps_r)

    def is_feasible(self, theta: np.ndarray, settings: PlacementSettings) -> bool:
        theta = np.asarray(theta, float)
        tol = settings.feasibility_tol
        if theta.min() < -tol or abs(theta.sum() - 1.0) > tol:
            return False
        ev = self.evaluate(theta)
        d = ev["distances"]
        if d[0] < settings.min_separation * (1 - 1e-12) or d.max() > self.comm_range * (1 + 1e-9):
            return False
        return ev["tau_r"] >= ev["tau_c"] * (1 - settings.lifetime_rtol)


@dataclass(frozen=True)
class PlacementSolution:
    critical: int
    neighbors: tuple[int, ...]
    theta: tuple[float, ...]
    position: tuple[float, float, float]
    p_cr_mw: float
    p_rj_mw: tuple[float, ...]
    tau_c: float
    tau_r: float
    iterations: int = 0
    certified: bool = True
    oracle_gap: float | None = None

    @property
    def objective(self) -> float:
        return self.p_cr_mw

    @property
    def relay_power_mw(self) -> float:
        """Sum of the relay's per-bit transmit powers (mW/bit)."""
        return float(sum(self.p_rj_mw))


def _solution(problem: PlacementProblem, theta: np.ndarray, iterations: int, certified: bool) -> PlacementSolution:
    ev = problem.evaluate(theta)
    return PlacementSolution(
        critical=problem.critical,
        neighbors=problem.neighbors,
        theta=tuple(float(t) for t in theta),
        position=tuple(float(v) for v in ev["position"]),
        p_cr_mw=ev["p_cr"] * 1e3,
        p_rj_mw=tuple(float(v) * 1e3 for v in ev["p_rj"]),
        tau_c=float(ev["tau_c"]),
        tau_r=float(ev["tau_r"]),
        iterations=iterations,
        certified=certified,
    )


_SEED_CLOUD = 20240917
_CLOUD_SIZE = 4096
_CLOUD_MIN_PER_FACE = 64
_CLOUD_KEEP = 10


def _seeds(problem: PlacementProblem, prm: np.ndarray) -> list[np.ndarray]:
    A, w = problem.anchors, problem.weights
    m = len(A)
    targets = [np.eye(m)[j] for j in range(1, m)]
    if m > 2:
        targets.append(np.concatenate([[0.0], np.full(m - 1, 1.0 / (m - 1))]))
        targets.append(w / w.sum())
        for a, b in itertools.combinations(range(1, m), 2):
            t = np.zeros(m)
            t[a] = t[b] = 0.5
            targets.append(t)
    found = []
    for t in targets:
        theta, ok = _hull.segment_boundary(t, A, w, prm, 64)
        if ok:
            found.append(theta)
    # the power law jumps at the regime threshold and the range limit cuts
    # slivers along faces, so the feasible set can be split into pieces that
    # no segment from the critical node reaches first; a seeded cloud spread
    # over every face of the simplex covers them
    rng = np.random.default_rng(_SEED_CLOUD)
    faces = [f for size in range(2, m + 1) for f in itertools.combinations(range(m), size)]
    per_face = max(_CLOUD_MIN_PER_FACE, _CLOUD_SIZE // len(faces))
    picks = []
    for face in faces:
        cloud = np.zeros((per_face, m))
        cloud[:, face] = rng.dirichlet(np.ones(len(face)), size=per_face)
        ok = _hull.feasible_batch(cloud, A, w, prm)
        if ok.any():
            pts = cloud[ok]
            dist = _hull.distance_batch(pts, A)
            i = int(np.argmin(dist))
            picks.append((dist[i], pts[i]))
    picks.sort(key=lambda item: item[0])
    found.extend(_hull.pull_towards_critical(th, A, w, prm) for _, th in picks[:_CLOUD_KEEP])
    return found


def solve_problem(problem: PlacementProblem, settings: PlacementSettings = PlacementSettings()) -> PlacementSolution:
    prm = problem.params(settings)
    A, w = problem.anchors, problem.weights
    # with one neighbour the hull is a segment and the exact line search below is the whole solve
    seeds = _seeds(problem, prm) if problem.size > 1 else []
    seeds.sort(key=lambda th: _hull.distance_to_critical(th, A))
    candidates: list[tuple[np.ndarray, int, bool]] = []
    for theta0 in seeds[: settings.n_starts]:
        theta, iters, conv = _hull.ccp(theta0, A, w, prm, settings.max_outer, settings.outer_rtol, settings.max_inner)
        theta = _hull.pull_towards_critical(theta, A, w, prm)
        theta = _hull.compass_polish(theta, A, w, prm, 0.05, 1e-10)
        theta = np.clip(theta, 0.0, None)
        candidates.append((theta / theta.sum(), iters, conv))
    # edges from the critical node searched against the exact constraint, so
    # the result is never worse than any single-segment placement
    for j in range(1, problem.size + 1):
        lam = segment_search(problem, j, settings.min_separation)
        if lam is not None:
            candidates.append((segment_theta(problem.size, j, lam), 0, True))
    candidates = [c for c in candidates if problem.is_feasible(c[0], settings)]
    if not candidates:
        raise PlacementInfeasible(f"no hull point lets a relay outlive node {problem.critical}")
    best, iters, certified = min(candidates, key=lambda c: problem.evaluate(c[0])["p_cr"])
    return _solution(problem, best, iters, certified)


def solve_placement(
    c: int,
    N: UpperNeighborSet,
    R: np.ndarray,
    deployment: Deployment,
    model: EnergyModel,
    settings: PlacementSettings = PlacementSettings(),
) -> PlacementSolution:
    """Best relay position in the hull of ``c`` and its upper neighbours.

    Minimises the critical node's per-bit transmit power (equivalently,
    maximises its lifetime) subject to the relay lasting at least as long.
    Raises :class:`PlacementInfeasible` if no hull point qualifies.
    """
    problem = PlacementProblem.build(c, N, R, deployment, model, settings.relay_energy)
    return solve_problem(problem, settings)


def barycentric_grid(m: int, step: float) -> np.ndarray:
    """All points of the ``m``-simplex whose coordinates are multiples of ``step``."""
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise ValueError("step must divide 1")
    count = math.comb(n + m - 1, m - 1)
    if count > 2_000_000:
        raise ValueError(f"grid with {count} points is too large")
    rows = []
    for bars in itertools.combinations(range(n + m - 1), m - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(n + m - 2 - prev)
        rows.append(parts)
    return np.array(rows, dtype=float) / n


def grid_oracle_problem(problem: PlacementProblem, step: float, settings: PlacementSettings = PlacementSettings()) -> PlacementSolution:
    if problem.size > 4:
        raise ValueError("grid oracle supports at most 4 upper neighbours")
    grid = barycentric_grid(problem.size + 1, step)
    pos = grid @ problem.anchors
    d = np.linalg.norm(pos[:, None, :] - problem.anchors[None, :, :], axis=2)
    model = problem.model
    p = model.tx_power(d)
    tau_c = problem.eps_c / (p[:, 0] * problem.flow_cr + model.p_r * problem.flow_in)
    tau_r = problem.eps_r / (p[:, 1:] @ problem.weights[1:] + model.p_r * problem.flow_cr)
    ok = (
        (tau_r >= tau_c * (1 - settings.lifetime_rtol))
        & (d[:, 0] >= settings.min_separation)
        & (d.max(axis=1) <= problem.comm_range * (1 + 1e-9))
    )
    if not ok.any():
        raise PlacementInfeasible("no grid point is feasible")
    obj = np.where(ok, p[:, 0], np.inf)
    best = int(np.argmin(obj))
    return _solution(problem, grid[best], 0, True)


def grid_oracle(
    c: int,
    N: UpperNeighborSet,
    R: np.ndarray,
    deployment: Deployment,
    model: EnergyModel,
    step: float = 0.02,
    settings: PlacementSettings = PlacementSettings(),
) -> PlacementSolution:
    """Exhaustive search over a barycentric grid; the check for :func:`solve_placement`."""
    problem = PlacementProblem.build(c, N, R, deployment, model, settings.relay_energy)
    return grid_oracle_problem(problem, step, settings)


# --------------------------------------------------------------------------
# sequential placement


@dataclass
class PlacementRecord:
    iter: int
    critical_node: int | None
    neighbors: list[int]
    theta: list[float] | None
    position: list[float] | None
    p_ciri: float | None
    tau_c: float | None
    tau_r: float | None
    lifetime_after: float
    skipped: bool
    reason: str = ""
    relay_id: int | None = None
    relay_power: float | None = None
    direct_power: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, allow_nan=True)

    @classmethod
    def from_dict(cls, data: dict) -> "PlacementRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass
class PlacementRun:
    """Outcome of placing up to ``M0`` relays one after another."""

    method: str
    rate_array: np.ndarray
    deployment: Deployment
    records: list[PlacementRecord]
    lifetime: float
    initial_lifetime: float
    initial_rate_array: np.ndarray = field(repr=False, default=None)

    @property
    def relays(self) -> list[int]:
        return [r.relay_id for r in self.records if not r.skipped]

    def log_lines(self) -> str:
        return "".join(rec.to_json() + "\n" for rec in self.records)


# a placer maps (c, N, R, deployment) to a relay position and extra record fields
Placer = Callable[[int, UpperNeighborSet, np.ndarray, Deployment], tuple[np.ndarray, dict]]


def relay_loop(
    deployment: Deployment,
    R: np.ndarray,
    model: EnergyModel,
    M0: int,
    placer: Placer,
    method: str,
    skip: bool = True,
    relay_energy: float = PRIMARY_ENERGY_J,
    retarget: bool = True,
) -> PlacementRun:
    """Place ``M0`` relays greedily on successive critical nodes.

    With ``skip`` a relay is only deployed if the critical node's lifetime
    strictly grows and the network lifetime does not drop; a refused node is
    not targeted again when ``retarget`` is set.
    """
    if M0 < 0:
        raise ValueError("M0 must be nonnegative")
    R0 = R.copy()
    start = network_lifetime(R, deployment, model)
    records: list[PlacementRecord] = []
    exhausted: set[int] = set()
    for it in range(M0):
        before = network_lifetime(R, deployment, model)
        try:
            c = find_critical_node(R, deployment, model, exclude=sorted(exhausted))
        except NoCriticalNode:
            records.append(PlacementRecord(it, None, [], None, None, None, None, None, before, True, "no critical node"))
            continue
        N = upper_neighbors(c, R)
        tau_before = lifetimes(R, deployment, model)
        try:
            pos, extra = placer(c, N, R, deployment)
        except PlacementInfeasible as exc:
            if retarget:
                exhausted.add(c)
            records.append(PlacementRecord(it, c, list(N.neighbors), None, None, None, None, None, before, True, f"infeasible: {exc}"))
            continue
        dep2, r = deployment.with_relay(pos, relay_energy)
        R2 = np.zeros((len(dep2), len(dep2)), dtype=R.dtype)
        R2[:-1, :-1] = R
        try:
            R2 = reroute_through_relay(R2, c, r, N, dep2)
        except ValueError as exc:
            if retarget:
                exhausted.add(c)
            records.append(PlacementRecord(it, c, list(N.neighbors), None, list(map(float, pos)), None, None, None, before, True, f"reroute: {exc}"))
            continue
        tau_after = lifetimes(R2, dep2, model)
        after = float(tau_after.min())
        improves = tau_after[c] > tau_before[c] and after >= before * (1 - 1e-12)
        rec = PlacementRecord(
            iter=it,
            critical_node=c,
            neighbors=list(N.neighbors),
            theta=extra.get("theta"),
            position=[float(v) for v in pos],
            p_ciri=float(model.tx_power(dep2.distance(c, r)) * 1e3),
            tau_c=float(tau_after[c]),
            tau_r=float(tau_after[r]),
            lifetime_after=after,
            skipped=False,
            relay_id=r,
            relay_power=float(sum(model.tx_power(dep2.distance(r, j)) for j in N.neighbors) * 1e3),
            direct_power=float(sum(model.tx_power(deployment.distance(c, j)) * R[c, j] for j in N.neighbors) * 1e3),
        )
        if skip and not improves:
            if retarget:
                exhausted.add(c)
            rec.skipped, rec.reason, rec.relay_id, rec.lifetime_after = True, "no lifetime gain", None, before
            records.append(rec)
            continue
        deployment, R = dep2, R2
        records.append(rec)
    return PlacementRun(method, R, deployment, records, network_lifetime(R, deployment, model), start, R0)


def orns_run(
    deployment: Deployment,
    model: EnergyModel,
    M0: int,
    settings: PlacementSettings = PlacementSettings(),
    R: np.ndarray | None = None,
    routing: str = "min_energy",
    skip: bool = True,
) -> PlacementRun:
    """Place ``M0`` relays by repeated hull placement on the critical node."""
    if R is None:
        R = build_initial_rate_array(deployment, model, routing)

    def placer(c, N, R_, dep):
        sol = solve_placement(c, N, R_, dep, model, settings)
        return np.array(sol.position), {"theta": list(sol.theta)}

    return relay_loop(deployment, R, model, M0, placer, "orns", skip=skip, relay_energy=settings.relay_energy)
