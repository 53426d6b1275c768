import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uasn.model import EnergyModel, validate_rate_array
from uasn.routing import (
    CapacityInfeasible,
    DisconnectedError,
    RangeError,
    RelayBusyError,
    build_initial_rate_array,
    dump_rate_array_csv,
    load_rate_array_csv,
    remove_relay,
    reroute_through_relay,
    upper_neighbors,
)

from conftest import make_deployment, random_deployment


def brute_force_cost(dep, model, s):
    """Cheapest simple path from ``s`` to the buoy by exhaustive enumeration."""
    links = dep.links()
    others = [v for v in range(len(dep)) if v not in (s, dep.sink)]
    best = np.inf
    for k in range(len(others) + 1):
        for mid in itertools.permutations(others, k):
            path = (s, *mid, dep.sink)
            if all(links[a, b] for a, b in zip(path, path[1:])):
                best = min(best, sum(float(model.tx_power(dep.distance(a, b))) for a, b in zip(path, path[1:])))
    return best


def test_chain_routes_upwards(chain, model):
    R = build_initial_rate_array(chain, model)
    assert R[2, 1] == 80 and R[1, 0] == 130 and R.sum() == 210
    assert validate_rate_array(R, chain, model) == []
    assert upper_neighbors(2, R).neighbors == (1,)
    assert upper_neighbors(0, R).neighbors == ()
    with pytest.raises(IndexError):
        upper_neighbors(5, R)


def test_single_sensor_goes_direct(model):
    dep = make_deployment([(0, 0, -100)], gens=[10])
    R = build_initial_rate_array(dep, model)
    assert R.tolist() == [[0, 0], [10, 0]]


def test_disconnected_and_unknown_policy(model):
    dep = make_deployment([(0, 0, -300), (0, 0, -1400)])
    with pytest.raises(DisconnectedError):
        build_initial_rate_array(dep, model)
    with pytest.raises(ValueError):
        build_initial_rate_array(make_deployment([(0, 0, -1)]), model, "shortest")


def test_capacity_exceeded():
    m = EnergyModel(l_c=100.0)
    dep = make_deployment([(0, 0, -100)], gens=[150])
    with pytest.raises(CapacityInfeasible) as info:
        build_initial_rate_array(dep, m)
    assert info.value.node == 1


def test_capacity_diversion():
    # node 1 is the cheap forwarder but only has room for one of the two far sources
    m = EnergyModel(l_c=100.0)
    dep = make_deployment([(0, 0, -300), (0, 0, -600), (60, 0, -600), (0, 60, -330)], gens=[10, 60, 20, 5])
    R = build_initial_rate_array(dep, m)
    assert validate_rate_array(R, dep, m) == []
    assert (R.sum(axis=1) <= 100).all()


@given(st.integers(0, 10_000), st.integers(2, 5))
def test_min_energy_matches_exhaustive_paths(seed, n):
    m = EnergyModel()
    dep = random_deployment(np.random.default_rng(seed), n, radius=300.0, depth=700.0)
    R = build_initial_rate_array(dep, m)
    assert validate_rate_array(R, dep, m) == []
    total = float((R * m.tx_power(dep.distances)).sum())
    oracle = sum(int(dep.generation[s]) * brute_force_cost(dep, m, int(s)) for s in dep.sensor_ids)
    assert total == pytest.approx(oracle, rel=1e-12)


@given(st.integers(0, 10_000), st.integers(2, 8))
def test_k_paths_is_valid(seed, n):
    m = EnergyModel()
    dep = random_deployment(np.random.default_rng(seed), n, radius=400.0, depth=900.0)
    R = build_initial_rate_array(dep, m, "k_paths")
    assert validate_rate_array(R, dep, m) == []
    # same total delivered as min-energy routing
    assert R[:, 0].sum() == dep.generation.sum()


def _relay_setup(seed, n):
    m = EnergyModel()
    dep = random_deployment(np.random.default_rng(seed), n, radius=300.0, depth=700.0)
    R = build_initial_rate_array(dep, m, "k_paths")
    busy = [int(i) for i in dep.sensor_ids if R[i].any()]
    c = busy[seed % len(busy)]
    N = upper_neighbors(c, R)
    anchor = dep.positions[[c, *N.neighbors]].mean(axis=0)
    dep2, r = dep.with_relay(anchor)
    R2 = np.pad(R, ((0, 1), (0, 1)))
    return m, dep2, R2, c, r, N


@given(st.integers(0, 10_000), st.integers(2, 8))
def test_reroute_properties(seed, n):
    m, dep, R, c, r, N = _relay_setup(seed, n)
    out = reroute_through_relay(R, c, r, N, dep)
    assert validate_rate_array(out, dep, m) == []
    assert out[c, r] == R[c].sum()
    assert (out[r, list(N.neighbors)] == R[c, list(N.neighbors)]).all()
    assert R[r].sum() == 0  # input untouched
    # every other node sends exactly as before
    others = [i for i in range(len(dep)) if i not in (c, r)]
    assert np.array_equal(out[others][:, others], R[others][:, others])
    assert np.array_equal(remove_relay(out, r), R)


def test_reroute_rejections(chain, model):
    R = build_initial_rate_array(chain, model)
    dep, r = chain.with_relay((0.0, 0.0, -450.0))
    R = np.pad(R, ((0, 1), (0, 1)))
    N = upper_neighbors(2, R)
    with pytest.raises(ValueError):
        reroute_through_relay(R, 2, 1, N)
    once = reroute_through_relay(R, 2, r, N, dep)
    with pytest.raises(RelayBusyError):
        reroute_through_relay(once, 2, r, N, dep)
    far, rf = chain.with_relay((0.0, 0.0, -1200.0))
    with pytest.raises(RangeError):
        reroute_through_relay(np.pad(build_initial_rate_array(chain, model), ((0, 1), (0, 1))), 2, rf, N, far)


def test_remove_idle_relay_and_ambiguous_splice():
    R = np.zeros((4, 4), dtype=np.int64)
    assert np.array_equal(remove_relay(R, 3), R)
    R[1, 3] = 5
    R[2, 3] = 5
    R[3, 0] = 10
    with pytest.raises(ValueError):
        remove_relay(R, 3)


@given(st.integers(0, 10_000), st.integers(2, 8))
def test_csv_roundtrip(seed, n):
    m = EnergyModel()
    dep = random_deployment(np.random.default_rng(seed), n)
    R = build_initial_rate_array(dep, m, "k_paths")
    text = dump_rate_array_csv(R)
    back = load_rate_array_csv(text)
    assert back.dtype == np.int64 and np.array_equal(back, R)
    assert dump_rate_array_csv(back) == text
