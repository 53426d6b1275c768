"""Initial rate arrays and the relay reroute rule.

A rate array ``R`` is an ``(n, n)`` int64 matrix; ``R[i, j]`` is the flow in
bit/s that node ``i`` sends to node ``j``.  All functions return fresh arrays
and never modify their inputs.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import Deployment, EnergyModel


class DisconnectedError(ValueError):
    """Some sensor has no in-range route to the surface buoy."""


class CapacityInfeasible(RuntimeError):
    def __init__(self, node: int, message: str):
        super().__init__(message)
        self.node = node


class RangeError(ValueError):
    pass


class RelayBusyError(ValueError):
    pass


class RouteGraph:
    """In-range links weighted by per-bit transmit cost (W/bit)."""

    def __init__(self, deployment: Deployment, model: EnergyModel):
        if not deployment.is_connected():
            raise DisconnectedError("deployment is not connected to the surface buoy")
        self.deployment = deployment
        self.model = model
        self.adjacency = deployment.links()
        self.cost = np.where(self.adjacency, model.tx_power(deployment.distances), np.inf)
        self._nbrs = [np.flatnonzero(row) for row in self.adjacency]

    def neighbors(self, u: int) -> np.ndarray:
        return self._nbrs[u]

    def sink_tree(self, allowed: np.ndarray | None = None):
        """Dijkstra towards the buoy.

        Returns ``(cost, hops, next_hop)``; labels compare as (cost, hops,
        next-hop id) so ties go to fewer hops, then the lowest id.  Nodes outside
        ``allowed`` are never used as relays or sources.
        """
        n = len(self.deployment)
        sink = self.deployment.sink
        ok = np.ones(n, dtype=bool) if allowed is None else allowed.copy()
        ok[sink] = True
        cost = np.full(n, np.inf)
        hops = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        nxt = np.full(n, -1, dtype=np.int64)
        cost[sink] = 0.0
        hops[sink] = 0
        done = np.zeros(n, dtype=bool)
        heap = [(0.0, 0, -1, sink)]
        while heap:
            c, h, _, v = heapq.heappop(heap)
            if done[v]:
                continue
            done[v] = True
            for u in self._nbrs[v]:
                if done[u] or not ok[u]:
                    continue
                label = (c + self.cost[u, v], h + 1, int(v))
                if label < (cost[u], hops[u], nxt[u] if nxt[u] >= 0 else np.iinfo(np.int64).max):
                    cost[u], hops[u], nxt[u] = label
                    heapq.heappush(heap, (label[0], label[1], label[2], int(u)))
        return cost, hops, nxt

    def path(self, source: int, nxt: np.ndarray) -> list[int]:
        out = [source]
        while out[-1] != self.deployment.sink:
            step = int(nxt[out[-1]])
            if step < 0:
                raise DisconnectedError(f"node {source} cannot reach the buoy")
            out.append(step)
        return out

    def path_cost(self, path: Iterable[int]) -> float:
        p = list(path)
        return float(sum(self.cost[a, b] for a, b in zip(p, p[1:])))


def _route_min_energy(graph: RouteGraph) -> np.ndarray:
    dep, model = graph.deployment, graph.model
    n = len(dep)
    R = np.zeros((n, n), dtype=np.int64)
    load = np.zeros(n, dtype=np.int64)
    _, _, nxt = graph.sink_tree()
    for s in dep.sensor_ids:
        g = int(dep.generation[s])
        if g == 0:
            continue
        path = graph.path(int(s), nxt)
        if any(load[v] + g > model.l_c for v in path[:-1]):
            # divert this source around nodes that cannot absorb it
            allowed = load + g <= model.l_c
            if not allowed[s]:
                raise CapacityInfeasible(int(s), f"node {s} cannot carry its own traffic within L_c")
            _, _, alt = graph.sink_tree(allowed)
            try:
                path = graph.path(int(s), alt)
            except DisconnectedError:
                blocked = next(v for v in path[:-1] if load[v] + g > model.l_c)
                raise CapacityInfeasible(int(blocked), f"node {blocked} is saturated; source {s} has no route") from None
        for a, b in zip(path, path[1:]):
            R[a, b] += g
            load[a] += g
    return R


def _route_k_paths(graph: RouteGraph, k: int = 2) -> np.ndarray:
    """Split each source evenly over its ``k`` cheapest loopless paths."""
    import networkx as nx

    dep, model = graph.deployment, graph.model
    n = len(dep)
    G = nx.Graph()
    G.add_nodes_from(range(n))
    iu, ju = np.nonzero(np.triu(graph.adjacency))
    G.add_weighted_edges_from((int(a), int(b), float(graph.cost[a, b])) for a, b in zip(iu, ju))
    R = np.zeros((n, n), dtype=np.int64)
    sink = dep.sink
    for s in dep.sensor_ids:
        g = int(dep.generation[s])
        if g == 0:
            continue
        paths = list(itertools.islice(nx.shortest_simple_paths(G, int(s), sink, weight="weight"), k))
        share = [g // len(paths)] * len(paths)
        for i in range(g - sum(share)):
            share[i] += 1
        for path, amount in zip(paths, share):
            for a, b in zip(path, path[1:]):
                R[a, b] += amount
    over = np.flatnonzero(R.sum(axis=1) > model.l_c)
    if over.size:
        raise CapacityInfeasible(int(over[0]), f"node {over[0]} exceeds link capacity under k-path routing")
    return R


POLICIES = {"min_energy": _route_min_energy, "k_paths": _route_k_paths}


def build_initial_rate_array(deployment: Deployment, model: EnergyModel, policy: str = "min_energy") -> np.ndarray:
    """Route every sensor's generated traffic to the buoy.

    ``min_energy`` sends each source along its cheapest path (Dijkstra on
    per-bit transmit cost); a source that would overflow ``L_c`` somewhere is
    diverted to the cheapest path through unsaturated nodes.  ``k_paths``
    splits each source over its two cheapest simple paths.
    """
    try:
        route = POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown routing policy {policy!r}; choose from {sorted(POLICIES)}") from None
    return route(RouteGraph(deployment, model))


@dataclass(frozen=True)
class UpperNeighborSet:
    critical: int
    neighbors: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.neighbors)

    def __iter__(self):
        return iter(self.neighbors)


def upper_neighbors(c: int, R: np.ndarray) -> UpperNeighborSet:
    """Nodes that receive data from ``c``."""
    if not 0 <= c < R.shape[0]:
        raise IndexError(f"node id {c} out of range")
    return UpperNeighborSet(int(c), tuple(int(j) for j in np.flatnonzero(R[c] > 0)))


def reroute_through_relay(
    R: np.ndarray,
    c: int,
    r: int,
    N: UpperNeighborSet,
    deployment: Deployment | None = None,
) -> np.ndarray:
    """Insert relay ``r`` between ``c`` and all of its upper neighbours.

    ``c`` sends its whole outflow to ``r``, which forwards exactly what ``c``
    used to send to each neighbour.
    """
    if R[r].any() or R[:, r].any():
        raise RelayBusyError(f"relay {r} already carries flow")
    if r == c or r in N.neighbors:
        raise ValueError("relay must differ from the critical node and its neighbours")
    out = R.copy()
    if not N.neighbors:
        return out
    if deployment is not None:
        cr = deployment.comm_range * (1 + 1e-9)
        for j in (c, *N.neighbors):
            if deployment.distance(r, j) > cr:
                raise RangeError(f"relay {r} is out of range of node {j}")
    idx = list(N.neighbors)
    out[r, idx] = R[c, idx]
    out[c, r] = R[c, idx].sum()
    out[c, idx] = 0
    return out


def remove_relay(R: np.ndarray, r: int) -> np.ndarray:
    """Splice relay ``r`` out: its single feeder sends directly to ``r``'s targets."""
    feeders = np.flatnonzero(R[:, r] > 0)
    out = R.copy()
    if feeders.size == 0:
        out[r] = 0
        return out
    if feeders.size > 1:
        raise ValueError(f"relay {r} has several feeders {feeders.tolist()}; splice is ambiguous")
    u = int(feeders[0])
    out[u] += R[r]
    out[u, r] = 0
    out[u, u] = 0
    out[r] = 0
    return out


def dump_rate_array_csv(R: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", *range(R.shape[1])])
    for i, row in enumerate(R):
        w.writerow([i, *(int(v) for v in row)])
    return buf.getvalue()


def load_rate_array_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    body = [[int(v) for v in row[1:]] for row in rows[1:] if row]
    return np.array(body, dtype=np.int64).reshape(len(body), len(rows[0]) - 1)


