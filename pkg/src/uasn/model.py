"""Domain types, the acoustic energy model and node/network lifetime.

Units: positions in metres, energies in joules, rates in bit/s.  Powers are
quoted in mW/bit at the public boundary (``transmit_power_per_bit``) and kept
in W/bit inside :class:`EnergyModel` so that ``energy / (power * rate)``
comes out in seconds.

Coordinates put the surface buoy at the origin; ``z`` is elevation, so every
underwater node has ``-depth <= z <= 0``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Sequence

import numpy as np

FORMAT_VERSION = 1
PRIMARY_ENERGY_J = 4.0e5
_FIELD_TOL = 1e-6


class DomainError(ValueError):
    """An argument lies outside the domain of a model function."""


class NodeKind(str, enum.Enum):
    SENSOR = "sensor"
    RELAY = "relay"
    SURFACE_BUOY = "surface_buoy"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    position: tuple[float, float, float]
    residual_energy: float = PRIMARY_ENERGY_J
    primary_energy: float = PRIMARY_ENERGY_J
    generation_rate: int = 0

    def __post_init__(self):
        if len(self.position) != 3:
            raise ValueError(f"node {self.id}: position must have 3 coordinates")
        if self.residual_energy < 0 or self.residual_energy > self.primary_energy * (1 + 1e-12):
            raise ValueError(
                f"node {self.id}: residual energy {self.residual_energy} outside [0, {self.primary_energy}]"
            )
        if self.generation_rate < 0:
            raise ValueError(f"node {self.id}: negative generation rate")
        if self.kind is not NodeKind.SENSOR and self.generation_rate != 0:
            raise ValueError(f"node {self.id}: only sensors generate data")


@dataclass(frozen=True)
class Deployment:
    """Immutable set of positioned nodes inside a cylindrical field."""

    nodes: tuple[Node, ...]
    comm_range: float = 500.0
    radius: float = 500.0
    depth: float = 2000.0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        for idx, node in enumerate(self.nodes):
            if node.id != idx:
                raise ValueError(f"node ids must be dense 0..n-1; found id {node.id} at index {idx}")
        n_sb = sum(node.kind is NodeKind.SURFACE_BUOY for node in self.nodes)
        if n_sb != 1:
            raise ValueError(f"deployment needs exactly one surface buoy, found {n_sb}")
        for node in self.nodes:
            if node.kind is NodeKind.SURFACE_BUOY:
                continue
            x, y, z = node.position
            if math.hypot(x, y) > self.radius * (1 + _FIELD_TOL) + _FIELD_TOL:
                raise ValueError(f"node {node.id} lies outside the field radius")
            if z > _FIELD_TOL or z < -self.depth * (1 + _FIELD_TOL) - _FIELD_TOL:
                raise ValueError(f"node {node.id} lies outside the field depth")

    def __len__(self) -> int:
        return len(self.nodes)

    @cached_property
    def positions(self) -> np.ndarray:
        pos = np.array([node.position for node in self.nodes], dtype=float).reshape(-1, 3)
        pos.flags.writeable = False
        return pos

    @cached_property
    def energies(self) -> np.ndarray:
        e = np.array([node.residual_energy for node in self.nodes], dtype=float)
        e.flags.writeable = False
        return e

    @cached_property
    def generation(self) -> np.ndarray:
        g = np.array([node.generation_rate for node in self.nodes], dtype=np.int64)
        g.flags.writeable = False
        return g

    @cached_property
    def kinds(self) -> tuple[NodeKind, ...]:
        return tuple(node.kind for node in self.nodes)

    @cached_property
    def sink(self) -> int:
        return self.kinds.index(NodeKind.SURFACE_BUOY)

    @cached_property
    def sensor_ids(self) -> np.ndarray:
        return np.array([n.id for n in self.nodes if n.kind is NodeKind.SENSOR], dtype=int)

    @cached_property
    def relay_ids(self) -> np.ndarray:
        return np.array([n.id for n in self.nodes if n.kind is NodeKind.RELAY], dtype=int)

    @cached_property
    def distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        d.flags.writeable = False
        return d

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.positions[i] - self.positions[j]))

    def in_field(self, point: Sequence[float]) -> bool:
        x, y, z = point
        return (
            math.hypot(x, y) <= self.radius * (1 + _FIELD_TOL) + _FIELD_TOL
            and -self.depth * (1 + _FIELD_TOL) - _FIELD_TOL <= z <= _FIELD_TOL
        )

    def with_relay(self, position: Sequence[float], energy: float | None = None) -> tuple["Deployment", int]:
        """Return a copy with one relay appended, and the relay's id.

        Relays carry the same battery as sensors, so by default they start full.
        """
        rid = len(self.nodes)
        e = PRIMARY_ENERGY_J if energy is None else float(energy)
        relay = Node(rid, NodeKind.RELAY, tuple(float(v) for v in position), e, max(e, PRIMARY_ENERGY_J), 0)
        return replace(self, nodes=self.nodes + (relay,)), rid

    def with_energies(self, energies: Sequence[float]) -> "Deployment":
        nodes = tuple(
            replace(node, residual_energy=float(max(e, 0.0))) for node, e in zip(self.nodes, energies)
        )
        return replace(self, nodes=nodes)

    def links(self) -> np.ndarray:
        """Boolean adjacency of node pairs that are within communication range."""
        adj = self.distances <= self.comm_range
        np.fill_diagonal(adj, False)
        return adj

    def is_connected(self) -> bool:
        """True when every sensor can reach the surface buoy over in-range links."""
        adj = self.links()
        seen = np.zeros(len(self), dtype=bool)
        seen[self.sink] = True
        frontier = [self.sink]
        while frontier:
            nxt = np.flatnonzero(adj[frontier].any(axis=0) & ~seen)
            seen[nxt] = True
            frontier = list(nxt)
        return bool(seen[self.sensor_ids].all()) if len(self.sensor_ids) else True

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": FORMAT_VERSION,
            "comm_range": self.comm_range,
            "field": {"radius": self.radius, "depth": self.depth},
            "nodes": [
                {
                    "id": n.id,
                    "kind": n.kind.value,
                    "position": list(n.position),
                    "residual_energy": n.residual_energy,
                    "primary_energy": n.primary_energy,
                    "generation_rate": n.generation_rate,
                }
                for n in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Deployment":
        if data.get("format") != FORMAT_VERSION:
            raise ValueError(f"unsupported deployment format {data.get('format')!r}")
        nodes = tuple(
            Node(
                id=int(rec["id"]),
                kind=NodeKind(rec["kind"]),
                position=tuple(float(v) for v in rec["position"]),
                residual_energy=float(rec["residual_energy"]),
                primary_energy=float(rec.get("primary_energy", max(PRIMARY_ENERGY_J, rec["residual_energy"]))),
                generation_rate=int(rec.get("generation_rate", 0)),
            )
            for rec in data["nodes"]
        )
        fld = data.get("field", {})
        return cls(
            nodes,
            comm_range=float(data["comm_range"]),
            radius=float(fld.get("radius", 500.0)),
            depth=float(fld.get("depth", 2000.0)),
        )


def thorp_db_per_km(f_khz: float) -> float:
    """Thorp absorption in dB/km for a carrier at ``f_khz`` kHz."""
    if not f_khz > 0:
        raise DomainError(f"frequency must be positive, got {f_khz}")
    if f_khz < 0.2:
        warnings.warn("Thorp's formula is unreliable below a few hundred Hz", RuntimeWarning, stacklevel=2)
    f2 = f_khz * f_khz
    return 0.1 * f2 / (1 + f2) + 40 * f2 / (4100 + f2) + 2.75e-4 * f2 + 0.003


def thorp_absorption(f_khz: float) -> float:
    """Linear per-km absorption base: ``10 ** (A / 10)`` with A in dB/km."""
    return 10.0 ** (thorp_db_per_km(f_khz) / 10.0)


@dataclass(frozen=True)
class EnergyModel:
    """Per-bit transmit/receive costs of an acoustic link.

    The amplifier term is ``alpha(f) ** (d / 1000) * d**k`` with ``k = 2`` below
    the threshold ``d_t`` and ``k = 4`` from ``d_t`` on.  The absorption exponent
    uses kilometres because Thorp's coefficient is per kilometre.
    """

    p_s_mw: float = 1.0
    p_r_mw: float = 1.0
    d_t: float = 87.0
    f_khz: float = 1.0
    l_c: float = 10_000.0
    alpha: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", thorp_absorption(self.f_khz))

    @property
    def p_s(self) -> float:
        """Processing cost of sending, W/bit."""
        return self.p_s_mw * 1e-3

    @property
    def p_r(self) -> float:
        """Receive cost, W/bit."""
        return self.p_r_mw * 1e-3

    @property
    def _beta(self) -> float:
        return math.log(self.alpha) / 1000.0

    def tx_power(self, d):
        """Transmit cost in W/bit; accepts scalars or arrays."""
        d = np.asarray(d, dtype=float)
        if np.any(d < 0):
            raise DomainError("distance must be nonnegative")
        k = np.where(d < self.d_t, 2.0, 4.0)
        p = self.p_s_mw + np.exp(self._beta * d) * d**k
        p = p * 1e-3
        return float(p) if p.ndim == 0 else p

    def tx_power_derivatives(self, d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Power (W/bit) with its first and second derivative in ``d``."""
        d = np.asarray(d, dtype=float)
        b = self._beta
        k = np.where(d < self.d_t, 2.0, 4.0)
        ex = np.exp(b * d)
        dk = d**k
        dk1 = k * d ** (k - 1)
        dk2 = k * (k - 1) * d ** (k - 2)
        p = (self.p_s_mw + ex * dk) * 1e-3
        dp = ex * (b * dk + dk1) * 1e-3
        d2p = ex * (b * b * dk + 2 * b * dk1 + dk2) * 1e-3
        return p, dp, d2p


def transmit_power_per_bit(d: float, model: EnergyModel) -> float:
    """Transmit cost of one bit over ``d`` metres, in mW/bit."""
    if d < 0:
        raise DomainError(f"distance must be nonnegative, got {d}")
    return model.tx_power(d) * 1e3


def energy_rates(R: np.ndarray, deployment: Deployment, model: EnergyModel) -> np.ndarray:
    """Power drawn by every node (W) under rate array ``R``.

    Transmission is charged per used link; reception is charged on all incoming
    flow.  The surface buoy's entry is meaningless and left at zero.
    """
    n = len(deployment)
    rows, cols = np.nonzero(R)
    tx = np.zeros(n)
    if rows.size:
        d = deployment.distances[rows, cols]
        np.add.at(tx, rows, model.tx_power(d) * R[rows, cols])
    rx = model.p_r * R.sum(axis=0).astype(float)
    out = tx + rx
    out[deployment.sink] = 0.0
    return out


def lifetimes(R: np.ndarray, deployment: Deployment, model: EnergyModel) -> np.ndarray:
    """Lifetime of every node in seconds; idle nodes and the buoy get +inf."""
    rates = energy_rates(R, deployment, model)
    with np.errstate(divide="ignore"):
        tau = np.where(rates > 0, deployment.energies / np.where(rates > 0, rates, 1.0), np.inf)
    tau[deployment.sink] = np.inf
    return tau


def node_lifetime(i: int, R: np.ndarray, deployment: Deployment, model: EnergyModel) -> float:
    if not 0 <= i < len(deployment):
        raise IndexError(f"node id {i} out of range")
    return float(lifetimes(R, deployment, model)[i])


def network_lifetime(R: np.ndarray, deployment: Deployment, model: EnergyModel) -> float:
    """Time until the first sensor or relay runs out of energy."""
    tau = lifetimes(R, deployment, model)
    return float(tau.min()) if len(tau) else math.inf


@dataclass(frozen=True)
class Violation:
    node: int
    constraint: str
    slack: float


def validate_rate_array(R: np.ndarray, deployment: Deployment, model: EnergyModel) -> list[Violation]:
    """Check flow balance, link capacity and range; empty list when valid."""
    R = np.asarray(R)
    n = len(deployment)
    if R.shape != (n, n):
        return [Violation(-1, "shape", float(n - R.shape[0]) if R.ndim == 2 else float("nan"))]
    tol = 0.0 if np.issubdtype(R.dtype, np.integer) else 1e-9
    out: list[Violation] = []
    neg = np.argwhere(R < 0)
    for i, j in neg:
        out.append(Violation(int(i), "nonnegative", float(R[i, j])))
    for i in np.flatnonzero(np.diag(R) != 0):
        out.append(Violation(int(i), "diagonal", float(R[i, i])))
    row = R.sum(axis=1)
    col = R.sum(axis=0)
    g = deployment.generation
    for i, kind in enumerate(deployment.kinds):
        if kind is NodeKind.SURFACE_BUOY:
            if row[i] != 0:
                out.append(Violation(i, "sink_outflow", float(row[i])))
            continue
        expected = col[i] + (g[i] if kind is NodeKind.SENSOR else 0)
        slack = float(expected - row[i])
        if abs(slack) > tol * max(1.0, abs(expected)):
            name = "sensor_balance" if kind is NodeKind.SENSOR else "relay_balance"
            out.append(Violation(i, name, slack))
        if row[i] > model.l_c * (1 + tol):
            out.append(Violation(i, "capacity", float(model.l_c - row[i])))
    rows, cols = np.nonzero(R)
    if rows.size:
        d = deployment.distances[rows, cols]
        for i, j, dij in zip(rows, cols, d):
            if dij > deployment.comm_range * (1 + 1e-9):
                out.append(Violation(int(i), f"range->{int(j)}", float(deployment.comm_range - dij)))
    return out
