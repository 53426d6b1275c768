import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from uasn.model import Deployment, EnergyModel, Node, NodeKind

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_deployment(sensors, gens=None, energies=None, relays=(), comm_range=500.0, radius=500.0, depth=2000.0):
    """Buoy at the origin (id 0), then sensors, then relays, in the given order."""
    gens = [100] * len(sensors) if gens is None else gens
    energies = [4e5] * len(sensors) if energies is None else energies
    nodes = [Node(0, NodeKind.SURFACE_BUOY, (0.0, 0.0, 0.0), 0.0)]
    for pos, g, e in zip(sensors, gens, energies):
        nodes.append(Node(len(nodes), NodeKind.SENSOR, tuple(map(float, pos)), float(e), 4e5, int(g)))
    for pos in relays:
        nodes.append(Node(len(nodes), NodeKind.RELAY, tuple(map(float, pos)), 4e5, 4e5, 0))
    return Deployment(tuple(nodes), comm_range=comm_range, radius=radius, depth=depth)


def random_deployment(rng, n, radius=500.0, depth=2000.0, comm_range=500.0, max_tries=2000):
    for _ in range(max_tries):
        r = radius * np.sqrt(rng.uniform(size=n))
        a = rng.uniform(0, 2 * np.pi, size=n)
        z = -rng.uniform(0, depth, size=n)
        pts = np.c_[r * np.cos(a), r * np.sin(a), z]
        gens = rng.integers(10, 201, size=n)
        dep = make_deployment(pts, gens, comm_range=comm_range, radius=radius, depth=depth)
        if dep.is_connected():
            return dep
    raise RuntimeError("could not draw a connected deployment")


@pytest.fixture
def model():
    return EnergyModel()


@pytest.fixture
def chain():
    """Buoy, sensor 1 straight below at 300 m, sensor 2 a further 300 m below."""
    return make_deployment([(0, 0, -300), (0, 0, -600)], gens=[50, 80])


def random_placement_problem(rng, k, model=None):
    """Critical node at 1 km depth with ``k`` upper neighbours 50..500 m away."""
    from uasn.orns import PlacementProblem

    model = model or EnergyModel()
    c = np.array([0.0, 0.0, -1000.0])
    nb = []
    for _ in range(k):
        v = rng.normal(size=3)
        nb.append(c + v / np.linalg.norm(v) * rng.uniform(50, 500))
    A = np.vstack([c, *nb])
    w = np.concatenate([[0.0], rng.integers(10, 600, size=k).astype(float)])
    flow_in = float(rng.integers(0, 2000))
    eps_c = float(rng.uniform(0.2, 1.0) * 4e5)
    return PlacementProblem(0, tuple(range(1, k + 1)), A, w, float(w.sum()), flow_in, eps_c, 4e5, 500.0, model)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
