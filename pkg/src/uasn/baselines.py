"""Comparison methods: line-segment placement, random-then-depth placement, no relays."""

from __future__ import annotations

import enum
import math

import numpy as np

from .linesearch import golden_section, segment_search, segment_theta
from .model import PRIMARY_ENERGY_J, Deployment, EnergyModel, lifetimes
from .orns import PlacementInfeasible, PlacementProblem, PlacementRun, PlacementSettings, relay_loop
from .routing import UpperNeighborSet, build_initial_rate_array


class BaselineKind(str, enum.Enum):
    RA = "ra"
    LSRNP = "lsrnp"
    NO_RELAY = "none"


# --------------------------------------------------------------------------
# line segment between the critical node and its farthest upper neighbour


def farthest_neighbor(problem: PlacementProblem) -> int:
    """Anchor index of the upper neighbour farthest from the critical node."""
    return 1 + int(np.argmax(np.linalg.norm(problem.anchors[1:] - problem.anchors[0], axis=1)))


def lsrnp_segment(problem: PlacementProblem, settings: PlacementSettings = PlacementSettings()) -> float:
    """Best fraction along critical -> farthest neighbour."""
    lam = segment_search(problem, farthest_neighbor(problem), settings.min_separation)
    if lam is None:
        raise PlacementInfeasible(f"no feasible point on the segment from node {problem.critical}")
    return lam


def lsrnp_theta(problem: PlacementProblem, settings: PlacementSettings = PlacementSettings()) -> np.ndarray:
    lam = lsrnp_segment(problem, settings)
    return segment_theta(problem.size, farthest_neighbor(problem), lam)


def solve_lsrnp(
    c: int,
    N: UpperNeighborSet,
    R: np.ndarray,
    deployment: Deployment,
    model: EnergyModel,
    settings: PlacementSettings = PlacementSettings(),
):
    """Line-segment placement for one critical node, as a :class:`PlacementSolution`."""
    from .orns import _solution

    problem = PlacementProblem.build(c, N, R, deployment, model, settings.relay_energy)
    return _solution(problem, lsrnp_theta(problem, settings), 0, True)


def place_lsrnp(
    deployment: Deployment,
    model: EnergyModel,
    M0: int,
    settings: PlacementSettings = PlacementSettings(),
    R: np.ndarray | None = None,
    routing: str = "min_energy",
    skip: bool = True,
) -> PlacementRun:
    if R is None:
        R = build_initial_rate_array(deployment, model, routing)

    def placer(c, N, R_, dep):
        sol = solve_lsrnp(c, N, R_, dep, model, settings)
        return np.array(sol.position), {"theta": list(sol.theta)}

    return relay_loop(deployment, R, model, M0, placer, "lsrnp", skip=skip, relay_energy=settings.relay_energy)


# --------------------------------------------------------------------------
# random surface position, then depth search


def place_ra(
    deployment: Deployment,
    model: EnergyModel,
    M0: int,
    seed: int,
    R: np.ndarray | None = None,
    routing: str = "min_energy",
    skip: bool = True,
    relay_energy: float = PRIMARY_ENERGY_J,
) -> PlacementRun:
    """Random surface drop followed by a golden-section depth adjustment.

    Each relay lands at a uniform point of the field's top disc and sinks to
    the depth that maximises the network lifetime once the current critical
    node routes through it.  Depths that leave a link out of range score the
    negative range excess, which steers the search back into range.
    """
    if R is None:
        R = build_initial_rate_array(deployment, model, routing)
    rng = np.random.default_rng(seed)

    def placer(c, N, R_, dep):
        rad = dep.radius * math.sqrt(rng.uniform())
        ang = 2.0 * math.pi * rng.uniform()
        x, y = rad * math.cos(ang), rad * math.sin(ang)
        tau = lifetimes(R_, dep, model)
        others = np.delete(tau, [c, dep.sink]).min(initial=math.inf)
        anchors = dep.positions[[c, *N.neighbors]]
        flows = R_[c, list(N.neighbors)].astype(float)
        flow_cr, flow_in = float(flows.sum()), float(R_[:, c].sum())
        eps_c = float(dep.energies[c])

        def score(depth: float) -> float:
            pos = np.array([x, y, -depth])
            d = np.linalg.norm(anchors - pos, axis=1)
            excess = float(np.maximum(d - dep.comm_range, 0.0).sum())
            if excess > 0:
                return -excess
            p = model.tx_power(d)
            tau_c = eps_c / (p[0] * flow_cr + model.p_r * flow_in)
            tau_r = relay_energy / (float(p[1:] @ flows) + model.p_r * flow_cr)
            return min(others, tau_c, tau_r)

        depth = golden_section(lambda z: -score(z), 0.0, dep.depth, tol=1e-10)
        if score(depth) < 0:
            raise PlacementInfeasible(f"random drop at ({x:.1f}, {y:.1f}) cannot reach node {c} and its neighbours")
        return np.array([x, y, -depth]), {}

    return relay_loop(deployment, R, model, M0, placer, "ra", skip=skip, relay_energy=relay_energy)


def place_none(deployment: Deployment, model: EnergyModel, R: np.ndarray | None = None, routing: str = "min_energy") -> PlacementRun:
    """No relays: the rate array is returned unchanged."""
    if R is None:
        R = build_initial_rate_array(deployment, model, routing)
    return relay_loop(deployment, R, model, 0, lambda *a: None, "none")
