"""Deployments, scenario cases, metrics and batch experiments."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .baselines import place_lsrnp, place_none, place_ra
from .model import Deployment, EnergyModel, Node, NodeKind, energy_rates, network_lifetime
from .orns import PlacementRun, PlacementSettings, find_critical_node, orns_run
from .routing import CapacityInfeasible, build_initial_rate_array
from .rnmi import select_for_run


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class HarnessConfig:
    """Parameters of the simulated network; keys mirror the parameter table."""

    h_s: float = 2000.0
    r_s_m: float = 500.0
    c_r: float = 500.0
    f_khz: float = 1.0
    p_s_mw: float = 1.0
    p_r_mw: float = 1.0
    d_t_m: float = 87.0
    l_c_bps: int = 10_000
    eps_p_j: float = 4e5
    g_min: int = 10
    g_max: int = 200
    omega1: float = 0.5
    eta: float | None = None
    lifetime_rtol: float = 1e-6
    feasibility_tol: float = 1e-8
    horizon_s: float = 1e-5
    routing: str = "k_paths"
    skip: bool = True
    max_retries: int = 1000

    @property
    def model(self) -> EnergyModel:
        return EnergyModel(p_s_mw=self.p_s_mw, p_r_mw=self.p_r_mw, d_t=self.d_t_m, f_khz=self.f_khz, l_c=self.l_c_bps)

    @property
    def settings(self) -> PlacementSettings:
        return PlacementSettings(
            lifetime_rtol=self.lifetime_rtol, feasibility_tol=self.feasibility_tol, relay_energy=self.eps_p_j
        )

    @classmethod
    def from_dict(cls, data: dict) -> "HarnessConfig":
        data = dict(data)
        tol = data.pop("tolerances", None) or {}
        data.update({k: v for k, v in tol.items() if k in ("lifetime_rtol", "feasibility_tol")})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**data)

    @classmethod
    def load(cls, path: str) -> "HarnessConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# deployments


def _draw(n: int, cfg: HarnessConfig, rng: np.random.Generator) -> Deployment:
    rad = cfg.r_s_m * np.sqrt(rng.uniform(size=n))
    ang = rng.uniform(0.0, 2.0 * math.pi, size=n)
    depth = rng.uniform(0.0, cfg.h_s, size=n)
    gen = rng.integers(cfg.g_min, cfg.g_max, endpoint=True, size=n)
    nodes = [Node(0, NodeKind.SURFACE_BUOY, (0.0, 0.0, 0.0), 0.0, cfg.eps_p_j, 0)]
    for i in range(n):
        pos = (float(rad[i] * math.cos(ang[i])), float(rad[i] * math.sin(ang[i])), float(-depth[i]))
        nodes.append(Node(i + 1, NodeKind.SENSOR, pos, cfg.eps_p_j, cfg.eps_p_j, int(gen[i])))
    return Deployment(tuple(nodes), comm_range=cfg.c_r, radius=cfg.r_s_m, depth=cfg.h_s)


def generate_deployment(n: int, cfg: HarnessConfig, seed: int, rf: float = 1.0) -> Deployment:
    """Uniform sensors in the cylinder, buoy at the origin, redrawn until connected.

    The node that is critical under the initial routing gets ``rf`` times the
    primary energy.
    """
    if n < 1:
        raise ValueError("need at least one sensor")
    if not 0.0 < rf <= 1.0:
        raise ValueError("rf must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    model = cfg.model
    for _ in range(cfg.max_retries):
        dep = _draw(n, cfg, rng)
        if not dep.is_connected():
            continue
        try:
            R = build_initial_rate_array(dep, model, cfg.routing)
        except CapacityInfeasible:
            continue
        if rf < 1.0:
            c = find_critical_node(R, dep, model)
            energies = dep.energies.copy()
            energies[c] = rf * cfg.eps_p_j
            dep = dep.with_energies(energies)
        return dep
    raise GenerationError(f"no connected deployment of {n} sensors after {cfg.max_retries} draws")


# --------------------------------------------------------------------------
# metrics


def compute_iec(runs: Sequence[Sequence[float]], sigma0_sq: float) -> float:
    """Spread of the run-averaged residual energies around their mean.

    ``runs`` holds one residual-energy vector per deployment; the result is
    the mean squared deviation of each node's run-average from the average
    of the per-run means, divided by ``sigma0_sq``.
    """
    arr = np.asarray(runs, dtype=float)
    if arr.size == 0 or arr.ndim != 2:
        raise ValueError("need at least one run of equal-length energy vectors")
    if sigma0_sq <= 0:
        raise ValueError("normalisation must be positive")
    node_mean = arr.mean(axis=0)
    run_mean = arr.mean(axis=1).mean()
    return float(np.mean((node_mean - run_mean) ** 2) / sigma0_sq)


def residual_energies(run: PlacementRun, R: np.ndarray, model: EnergyModel, horizon: float) -> np.ndarray:
    """Sensor energies after draining at constant rate until the first death or the horizon."""
    dep = run.deployment
    t = min(network_lifetime(R, dep, model), horizon)
    left = dep.energies - energy_rates(R, dep, model) * t
    return np.maximum(left[dep.sensor_ids], 0.0)


# --------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class CaseSpec:
    rf: float
    gamma_r: float


CASES = {
    "A": CaseSpec(0.25, 0.3),
    "B": CaseSpec(0.75, 0.3),
    "C": CaseSpec(0.25, 0.6),
    "D": CaseSpec(0.25, 0.9),
}
METHODS = ("orns", "lsrnp", "ra", "none")


@dataclass(frozen=True)
class Scenario:
    case: str
    n: int
    seeds: tuple[int, ...]
    method: str = "orns"
    selection: bool = False

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def rf(self) -> float:
        return CASES[self.case].rf

    @property
    def gamma_r(self) -> float:
        return CASES[self.case].gamma_r

    @property
    def m0(self) -> int:
        return int(round(self.gamma_r * self.n))


@dataclass
class SeedResult:
    seed: int
    lifetime_s: float | None
    initial_lifetime_s: float | None
    relays_placed: int
    relays_kept: int
    positions: list[list[float]]
    residual: list[float]
    error: str | None = None


def place(method: str, dep: Deployment, cfg: HarnessConfig, m0: int, seed: int, R: np.ndarray | None = None) -> PlacementRun:
    model = cfg.model
    if R is None:
        R = build_initial_rate_array(dep, model, cfg.routing)
    if method == "orns":
        return orns_run(dep, model, m0, cfg.settings, R=R, skip=cfg.skip)
    if method == "lsrnp":
        return place_lsrnp(dep, model, m0, cfg.settings, R=R, skip=cfg.skip)
    if method == "ra":
        return place_ra(dep, model, m0, seed, R=R, skip=cfg.skip, relay_energy=cfg.eps_p_j)
    if method == "none":
        return place_none(dep, model, R=R)
    raise ValueError(f"unknown method {method!r}")


def run_seed(scenario: Scenario, cfg: HarnessConfig, seed: int) -> SeedResult:
    model = cfg.model
    try:
        dep = generate_deployment(scenario.n, cfg, seed, scenario.rf)
        run = place(scenario.method, dep, cfg, scenario.m0, seed)
        R, kept = run.rate_array, run.relays
        if scenario.selection and kept:
            sel = select_for_run(run, model, cfg.omega1, cfg.eta)
            R, kept = sel.rate_array, sel.kept
        life = network_lifetime(R, run.deployment, model)
        return SeedResult(
            seed=seed,
            lifetime_s=float(life),
            initial_lifetime_s=float(run.initial_lifetime),
            relays_placed=len(run.relays),
            relays_kept=len(kept),
            positions=[[float(v) for v in run.deployment.positions[r]] for r in kept],
            residual=[float(v) for v in residual_energies(run, R, model, cfg.horizon_s)],
        )
    except (GenerationError, CapacityInfeasible, ValueError, RuntimeError) as exc:
        return SeedResult(seed, None, None, 0, 0, [], [], error=f"{type(exc).__name__}: {exc}")


@dataclass
class MetricsReport:
    case: str
    n: int
    method: str
    selection: bool
    m0: int
    config: dict
    seeds: list[SeedResult] = field(default_factory=list)

    @property
    def ok(self) -> list[SeedResult]:
        return [s for s in self.seeds if s.error is None]

    @property
    def failed_seeds(self) -> list[int]:
        return [s.seed for s in self.seeds if s.error is not None]

    @property
    def lifetimes(self) -> np.ndarray:
        return np.array([s.lifetime_s for s in self.ok], dtype=float)

    @property
    def mean_lifetime(self) -> float:
        return float(self.lifetimes.mean()) if self.ok else math.nan

    @property
    def std_lifetime(self) -> float:
        return float(self.lifetimes.std(ddof=1)) if len(self.ok) > 1 else 0.0

    @property
    def stderr_lifetime(self) -> float:
        return self.std_lifetime / math.sqrt(len(self.ok)) if self.ok else math.nan

    @property
    def mean_kept(self) -> float:
        return float(np.mean([s.relays_kept for s in self.ok])) if self.ok else math.nan

    def iec(self, sigma0_sq: float | None = None) -> float:
        sigma = self.config["eps_p_j"] ** 2 if sigma0_sq is None else sigma0_sq
        return compute_iec([s.residual for s in self.ok], sigma)

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "n": self.n,
            "method": self.method,
            "selection": self.selection,
            "m0": self.m0,
            "config": self.config,
            "summary": {
                "mean_lifetime_s": self.mean_lifetime,
                "std_lifetime_s": self.std_lifetime,
                "iec": self.iec() if self.ok else None,
                "mean_relays_kept": self.mean_kept,
                "failed_seeds": self.failed_seeds,
            },
            "seeds": [asdict(s) for s in self.seeds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(
            case=data["case"],
            n=data["n"],
            method=data["method"],
            selection=data["selection"],
            m0=data["m0"],
            config=data["config"],
            seeds=[SeedResult(**s) for s in data["seeds"]],
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))


def run_experiment(scenario: Scenario, cfg: HarnessConfig = HarnessConfig()) -> MetricsReport:
    report = MetricsReport(scenario.case, scenario.n, scenario.method, scenario.selection, scenario.m0, cfg.to_dict())
    report.seeds = [run_seed(scenario, cfg, s) for s in scenario.seeds]
    return report


# --------------------------------------------------------------------------
# file emitters

LIFETIME_COLUMNS = ("case", "method", "n", "seed", "lifetime_s", "relays_kept")


def lifetime_rows(reports: Iterable[MetricsReport]) -> list[dict]:
    rows = []
    for rep in reports:
        for s in rep.seeds:
            rows.append(
                {
                    "case": rep.case,
                    "method": rep.method,
                    "n": rep.n,
                    "seed": s.seed,
                    "lifetime_s": "" if s.lifetime_s is None else repr(float(s.lifetime_s)),
                    "relays_kept": s.relays_kept,
                }
            )
    return rows


def _csv(header: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def lifetime_csv(reports: Iterable[MetricsReport]) -> str:
    return _csv(LIFETIME_COLUMNS, lifetime_rows(reports))


def positions_csv(reports: Iterable[MetricsReport]) -> str:
    rows = [
        {"case": r.case, "method": r.method, "n": r.n, "seed": s.seed, "x": repr(p[0]), "y": repr(p[1]), "z": repr(p[2])}
        for r in reports
        for s in r.ok
        for p in s.positions
    ]
    return _csv(("case", "method", "n", "seed", "x", "y", "z"), rows)


def iec_csv(reports: Iterable[MetricsReport]) -> str:
    rows = [{"case": r.case, "method": r.method, "n": r.n, "iec": repr(r.iec())} for r in reports if r.ok]
    return _csv(("case", "method", "n", "iec"), rows)


def with_overrides(cfg: HarnessConfig, **kw) -> HarnessConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
