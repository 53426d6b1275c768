"""Relay minimisation: keep as few placed relays as the achieved lifetime allows.

Each placed relay is either kept or spliced back out.  The score of a keep
vector is a weighted mix of a smoothed count of active relay powers and the
one-norm gap between relay and direct powers; its value is a sum of one term
per relay, which lets the exact mode walk subsets in increasing score order
and stop at the first one that still reaches the target lifetime.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Deployment, EnergyModel, network_lifetime
from .orns import PlacementRun
from .routing import remove_relay

EXACT_LIMIT = 24
LIFETIME_RTOL = 1e-9
TIE_RTOL = 1e-12


class DomainError(ValueError):
    pass


def smoothed_zero_norm(p: np.ndarray, eta: float) -> float:
    """Concave, differentiable stand-in for the count of nonzero entries."""
    p = np.asarray(p, dtype=float)
    if eta <= 0:
        raise DomainError("eta must be positive")
    if (p < 0).any():
        raise DomainError("powers must be nonnegative")
    return float(np.sum(-np.expm1(-eta * p)))


def default_eta(p_relay: np.ndarray) -> float:
    nz = np.asarray(p_relay, float)
    nz = nz[nz > 0]
    if nz.size == 0:
        return 1.0
    return float(np.clip(10.0 / np.median(nz), 1e-3, 1e6))


@dataclass(frozen=True)
class SelectionProblem:
    """Per-relay powers and the lifetime to preserve.

    ``p_relay[i]`` is relay ``i``'s summed per-bit transmit power (mW/bit).
    ``p_direct_kept[i]`` is its feeder's power to the relay times the rerouted
    flow and ``p_direct_dropped[i]`` the feeder's direct power to the relay's
    targets times their flows (both mW).
    """

    p_relay: np.ndarray
    p_direct_kept: np.ndarray
    p_direct_dropped: np.ndarray
    tau_star: float
    omega1: float = 0.5
    eta: float | None = None

    def __post_init__(self):
        for name in ("p_relay", "p_direct_kept", "p_direct_dropped"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim != 1 or (v < 0).any():
                raise DomainError(f"{name} must be a nonnegative vector")
            object.__setattr__(self, name, v)
        if not (len(self.p_relay) == len(self.p_direct_kept) == len(self.p_direct_dropped)):
            raise DomainError("power vectors must have equal length")
        if not 0.0 < self.omega1 < 1.0:
            raise DomainError("omega1 must lie strictly between 0 and 1")
        if self.eta is None:
            object.__setattr__(self, "eta", default_eta(self.p_relay))
        elif self.eta <= 0:
            raise DomainError("eta must be positive")

    @property
    def omega2(self) -> float:
        return 1.0 - self.omega1

    def __len__(self) -> int:
        return len(self.p_relay)

    def term_costs(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-relay contribution when kept and when dropped."""
        kept = self.omega1 * -np.expm1(-self.eta * self.p_relay) - self.omega2 * np.abs(self.p_relay - self.p_direct_kept)
        dropped = -self.omega2 * np.abs(self.p_direct_dropped)
        return kept, dropped


def selection_objective(keep, problem: SelectionProblem) -> float:
    keep = np.asarray(keep, dtype=bool)
    p_eff = np.where(keep, problem.p_relay, 0.0)
    p_c = np.where(keep, problem.p_direct_kept, problem.p_direct_dropped)
    if len(keep) == 0:
        return 0.0
    return problem.omega1 * smoothed_zero_norm(p_eff, problem.eta) - problem.omega2 * float(np.abs(p_eff - p_c).sum())


def subset_rate_array(R: np.ndarray, relays: list[int], keep) -> np.ndarray:
    """Rate array with every relay not kept spliced out, latest first."""
    out = R
    for rid, k in reversed(list(zip(relays, keep))):
        if not k:
            out = remove_relay(out, rid)
    return out


@dataclass
class SelectionResult:
    relays: list[int]
    keep: tuple[bool, ...]
    objective: float
    zero_norm_terms: list[float]
    one_norm_terms: list[float]
    lifetime: float
    tau_star: float
    mode: str
    constraint_relaxed: bool = False
    lifetime_if_dropped: list[float] = field(default_factory=list)
    problem: SelectionProblem | None = field(default=None, repr=False)
    rate_array: np.ndarray | None = field(default=None, repr=False)

    @property
    def kept(self) -> list[int]:
        return [r for r, k in zip(self.relays, self.keep) if k]

    @property
    def dropped(self) -> list[int]:
        return [r for r, k in zip(self.relays, self.keep) if not k]

    def report(self) -> dict:
        per = []
        for i, rid in enumerate(self.relays):
            per.append(
                {
                    "id": rid,
                    "p_relay": float(self.problem.p_relay[i]) if self.problem is not None else None,
                    "p_direct": float(self.problem.p_direct_dropped[i]) if self.problem is not None else None,
                    "lifetime_if_dropped": self.lifetime_if_dropped[i] if self.lifetime_if_dropped else None,
                }
            )
        return {
            "kept": self.kept,
            "dropped": self.dropped,
            "objective": self.objective,
            "tau_star": self.tau_star,
            "lifetime": self.lifetime,
            "mode": self.mode,
            "constraint_relaxed": self.constraint_relaxed,
            "per_relay": per,
        }

    def to_json(self) -> str:
        return json.dumps(self.report(), sort_keys=True)


def build_selection_problem(run: PlacementRun, model: EnergyModel, omega1: float = 0.5, eta: float | None = None) -> tuple[SelectionProblem, list[int]]:
    """Collect relay and direct powers for every relay deployed by ``run``."""
    dep, R = run.deployment, run.rate_array
    relays, p_relay, p_kept, p_drop = [], [], [], []
    for rec in run.records:
        if rec.skipped:
            continue
        r, c = rec.relay_id, rec.critical_node
        targets = list(rec.neighbors)
        relays.append(r)
        p_relay.append(sum(float(model.tx_power(dep.distance(r, j))) for j in targets) * 1e3)
        flow = float(R[c, r])
        p_kept.append(float(model.tx_power(dep.distance(c, r))) * flow * 1e3)
        p_drop.append(sum(float(model.tx_power(dep.distance(c, j))) * float(R[r, j]) for j in targets) * 1e3)
    problem = SelectionProblem(np.array(p_relay), np.array(p_kept), np.array(p_drop), run.lifetime, omega1, eta)
    return problem, relays


def _canonical(candidates: list[tuple[float, tuple[bool, ...]]]) -> tuple[float, tuple[bool, ...]]:
    """Lowest objective; near-ties go to fewer kept relays, then the smaller keep vector."""
    best = min(v for v, _ in candidates)
    tol = TIE_RTOL * max(1.0, abs(best))
    close = [(sum(k), k, v) for v, k in candidates if v <= best + tol]
    n, keep, v = min(close)
    return v, keep


def _enumerate_best_first(problem: SelectionProblem, feasible) -> tuple[float, tuple[bool, ...]] | None:
    kept, dropped = problem.term_costs()
    m = len(problem)
    # start from the per-relay cheaper choice and flip choices in order of penalty
    base = np.minimum(kept, dropped)
    start = tuple(bool(k < d) for k, d in zip(kept, dropped))
    penalty = np.abs(kept - dropped)
    order = np.argsort(penalty, kind="stable")
    pen = penalty[order]
    base_val = float(base.sum())

    def keep_of(flips):
        k = list(start)
        for idx in flips:
            j = int(order[idx])
            k[j] = not k[j]
        return tuple(k)

    found: list[tuple[float, tuple[bool, ...]]] = []
    bound = math.inf
    heap = [(base_val, ())]
    while heap:
        val, flips = heapq.heappop(heap)
        if val > bound:
            break
        keep = keep_of(flips)
        if feasible(keep):
            v = selection_objective(keep, problem)
            found.append((v, keep))
            bound = min(bound, v + TIE_RTOL * max(1.0, abs(v)) + 1e-9 * max(1.0, abs(base_val)))
        # children: extend with the next flip, or shift the last flip one step
        last = flips[-1] if flips else -1
        if last + 1 < m:
            heapq.heappush(heap, (val + pen[last + 1], flips + (last + 1,)))
            if flips:
                heapq.heappush(heap, (val - pen[last] + pen[last + 1], flips[:-1] + (last + 1,)))
    if not found:
        return None
    return _canonical(found)


def _greedy(problem: SelectionProblem, feasible, impact: list[float]) -> tuple[float, tuple[bool, ...]] | None:
    m = len(problem)
    keep = [True] * m
    if not feasible(tuple(keep)):
        return None
    val = selection_objective(keep, problem)
    # relays whose removal hurts least come first
    for i in sorted(range(m), key=lambda i: (-impact[i], i)):
        trial = keep.copy()
        trial[i] = False
        t = tuple(trial)
        tv = selection_objective(t, problem)
        if tv <= val and feasible(t):
            keep, val = trial, tv
    return val, tuple(keep)


def select_relays(
    problem: SelectionProblem,
    relays: list[int],
    R: np.ndarray,
    deployment: Deployment,
    model: EnergyModel,
    mode: str = "auto",
) -> SelectionResult:
    """Choose which relays to keep so the network lifetime stays at ``tau_star``.

    ``mode`` is ``exact`` (best-first subset enumeration, at most
    ``EXACT_LIMIT`` relays), ``greedy`` or ``auto``.  Every keep vector is
    checked by recomputing all lifetimes on the spliced rate array.
    """
    m = len(problem)
    if len(relays) != m:
        raise DomainError("one relay id per problem entry is required")
    if mode == "auto":
        mode = "exact" if m <= EXACT_LIMIT else "greedy"
    if mode == "exact" and m > EXACT_LIMIT:
        raise DomainError(f"exact mode supports at most {EXACT_LIMIT} relays")
    if mode not in ("exact", "greedy"):
        raise DomainError(f"unknown selection mode {mode!r}")
    target = problem.tau_star * (1 - LIFETIME_RTOL)
    cache: dict[tuple[bool, ...], float] = {}

    def lifetime_of(keep):
        if keep not in cache:
            cache[keep] = network_lifetime(subset_rate_array(R, relays, keep), deployment, model)
        return cache[keep]

    def feasible(keep):
        return lifetime_of(keep) >= target

    impact = [lifetime_of(tuple(j != i for j in range(m))) for i in range(m)]
    out = _enumerate_best_first(problem, feasible) if mode == "exact" else _greedy(problem, feasible, impact)
    relaxed = out is None
    if relaxed:
        keep = (True,) * m
        out = (selection_objective(keep, problem), keep)
    value, keep = out
    keep_arr = np.asarray(keep, dtype=bool)
    p_eff = np.where(keep_arr, problem.p_relay, 0.0)
    p_c = np.where(keep_arr, problem.p_direct_kept, problem.p_direct_dropped)
    final = subset_rate_array(R, relays, keep)
    return SelectionResult(
        relays=list(relays),
        keep=tuple(bool(k) for k in keep),
        objective=float(value),
        zero_norm_terms=[float(-np.expm1(-problem.eta * v)) for v in p_eff],
        one_norm_terms=[float(abs(a - b)) for a, b in zip(p_eff, p_c)],
        lifetime=network_lifetime(final, deployment, model),
        tau_star=problem.tau_star,
        mode=mode,
        constraint_relaxed=relaxed,
        lifetime_if_dropped=[float(v) for v in impact],
        problem=problem,
        rate_array=final,
    )


def select_for_run(run: PlacementRun, model: EnergyModel, omega1: float = 0.5, eta: float | None = None, mode: str = "auto") -> SelectionResult:
    problem, relays = build_selection_problem(run, model, omega1, eta)
    return select_relays(problem, relays, run.rate_array, run.deployment, model, mode)
