"""Relay placement and relay minimisation for underwater acoustic sensor networks."""

from .model import Deployment, EnergyModel, Node, NodeKind, lifetimes, network_lifetime
from .routing import build_initial_rate_array, reroute_through_relay, upper_neighbors

__all__ = [
    "Deployment",
    "EnergyModel",
    "Node",
    "NodeKind",
    "build_initial_rate_array",
    "lifetimes",
    "network_lifetime",
    "reroute_through_relay",
    "upper_neighbors",
]
