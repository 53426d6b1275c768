"""Acceptance criteria, one test each, at their stated tolerances and time limits.

Every test records a PASS/FAIL line (printed in the terminal summary and to
stdout) before asserting.
"""

import itertools
import math
import time
from dataclasses import dataclass

import mpmath
import numpy as np
import pytest

from uasn import cli
from uasn.baselines import lsrnp_theta
from uasn.harness import CASES, HarnessConfig, Scenario, compute_iec, generate_deployment, run_experiment
from uasn.model import EnergyModel, network_lifetime, thorp_db_per_km, validate_rate_array
from uasn.orns import (
    PlacementInfeasible,
    PlacementSettings,
    find_critical_node,
    grid_oracle_problem,
    orns_run,
    solve_problem,
)
from uasn.rnmi import build_selection_problem, select_relays, selection_objective, subset_rate_array
from uasn.routing import build_initial_rate_array, remove_relay, reroute_through_relay, upper_neighbors

from conftest import ACCEPTANCE_LINES, random_placement_problem

pytestmark = pytest.mark.acceptance

SEEDS = tuple(range(50))
_RUNS: dict = {}


def record(number: int, ok: bool, elapsed: float, limit: float, detail: str) -> None:
    ok = ok and elapsed < limit
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  ({elapsed:.1f} s of {limit:.0f} s)  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def experiment(case: str, n: int, method: str, selection: bool = False, seeds=SEEDS):
    key = (case, n, method, selection, seeds)
    if key not in _RUNS:
        _RUNS[key] = run_experiment(Scenario(case, n, seeds, method, selection), HarnessConfig())
    return _RUNS[key]


def sign_test(a: np.ndarray, b: np.ndarray) -> tuple[int, int, float]:
    """One-sided sign test that ``a`` exceeds ``b``; ties are dropped."""
    wins = int((a > b).sum())
    n = wins + int((a < b).sum())
    p = sum(math.comb(n, k) for k in range(wins, n + 1)) / 2**n if n else 1.0
    return wins, n, p


def thorp_reference(f):
    f = mpmath.mpf(f)
    f2 = f * f
    return mpmath.mpf("0.1") * f2 / (1 + f2) + 40 * f2 / (4100 + f2) + mpmath.mpf("2.75e-4") * f2 + mpmath.mpf("0.003")


# --------------------------------------------------------------------------


def test_01_thorp_formula():
    t0 = time.perf_counter()
    mpmath.mp.dps = 40
    errs = [abs(thorp_db_per_km(f) - float(thorp_reference(f))) / float(thorp_reference(f)) for f in (0.5, 1, 5, 10, 50)]
    a1 = thorp_db_per_km(1.0)
    ok = max(errs) <= 1e-9 and round(a1, 5) == 0.06303
    record(1, ok, time.perf_counter() - t0, 1, f"max rel err {max(errs):.1e}, A(1) = {a1:.5f} dB/km")


def test_02_energy_regimes():
    t0 = time.perf_counter()
    m = EnergyModel()
    alpha = m.alpha
    below, above = 87.0 - 1e-6, 87.0 + 1e-6
    quad = m.p_s_mw + alpha ** (below / 1000) * below**2
    quart = m.p_s_mw + alpha ** (above / 1000) * above**4
    branches = math.isclose(m.tx_power(below) * 1e3, quad, rel_tol=1e-12) and math.isclose(m.tx_power(above) * 1e3, quart, rel_tol=1e-12)
    worst = math.inf
    for lo, hi in ((0.0, 87.0 - 1e-9), (87.0, 2000.0)):
        p = m.tx_power(np.linspace(lo, hi, 10_000)) * 1e3
        second = (p[2:] - 2 * p[1:-1] + p[:-2]) / np.abs(p[1:-1])
        worst = min(worst, float(second.min()))
    record(2, branches and worst >= -1e-12, time.perf_counter() - t0, 1, f"branches ok={branches}, min relative second difference {worst:.1e}")


def test_03_flow_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    bad_route = bad_reroute = 0
    for i in range(1000):
        n = int(rng.integers(1, 31))
        cfg = HarnessConfig(routing="k_paths" if i % 2 else "min_energy")
        dep = generate_deployment(n, cfg, seed=int(rng.integers(2**31)), rf=float(rng.choice([1.0, 0.25])))
        model = cfg.model
        R = build_initial_rate_array(dep, model, cfg.routing)
        bad_route += bool(validate_rate_array(R, dep, model))
        c = find_critical_node(R, dep, model)
        N = upper_neighbors(c, R)
        # a relay on top of the critical node keeps every link in range
        dep2, r = dep.with_relay(dep.positions[c])
        R2 = reroute_through_relay(np.pad(R, ((0, 1), (0, 1))), c, r, N, dep2)
        bad_reroute += bool(validate_rate_array(R2, dep2, model)) or not np.array_equal(remove_relay(R2, r)[:-1, :-1], R)
    record(3, bad_route == 0 and bad_reroute == 0, time.perf_counter() - t0, 30, f"1000 deployments: {bad_route} routing and {bad_reroute} reroute violations")


def test_04_constraint_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    agree = total = ties = 0
    for _ in range(200):
        P = random_placement_problem(rng, int(rng.integers(1, 6)))
        con = P.lifetime_constraint()
        for theta in rng.dirichlet(np.ones(P.size + 1), size=50):
            ev = P.evaluate(theta)
            energy = P.eps_c * ev["energy_r"] - P.eps_r * ev["energy_c"]
            if abs(energy) <= 1e-9 * (P.eps_c * ev["energy_r"] + P.eps_r * ev["energy_c"]):
                ties += 1
                continue
            total += 1
            agree += np.sign(con.lhs(P.decision_vector(theta)) - con.gamma0) == np.sign(energy)
    record(4, agree == total and total + ties == 10_000, time.perf_counter() - t0, 10, f"{agree}/{total} signs agree ({ties} ties excluded)")


def test_05_solver_optimality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    settings = PlacementSettings()
    worst, compared, false_feasible, missed = 0.0, 0, 0, 0
    for _ in range(100):
        P = random_placement_problem(rng, int(rng.integers(1, 4)))
        try:
            g = grid_oracle_problem(P, 0.02, settings)
        except PlacementInfeasible:
            g = None
        try:
            s = solve_problem(P, settings)
        except PlacementInfeasible:
            s = None
        if s is not None:
            # independent recheck of the returned point
            pos = np.asarray(s.theta) @ P.anchors
            d = np.linalg.norm(P.anchors - pos, axis=1)
            p = P.model.tx_power(d)
            tau_c = P.eps_c / (p[0] * P.flow_cr + P.model.p_r * P.flow_in)
            tau_r = P.eps_r / (p[1:] @ P.weights[1:] + P.model.p_r * P.flow_cr)
            ok = tau_r >= tau_c * (1 - settings.lifetime_rtol) and d[0] >= settings.min_separation * (1 - 1e-12)
            ok = ok and d.max() <= P.comm_range * (1 + 1e-9) and abs(sum(s.theta) - 1) <= 1e-8 and min(s.theta) >= -1e-8
            false_feasible += not ok
        if g is not None:
            if s is None:
                missed += 1
                continue
            compared += 1
            worst = max(worst, (s.objective - g.objective) / g.objective)
    ok = worst <= 0.01 and false_feasible == 0 and missed == 0
    record(5, ok, time.perf_counter() - t0, 120, f"{compared} compared, worst gap {worst:+.2e}, {false_feasible} infeasible returned, {missed} missed")


def test_06_hull_dominance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    violations = compared = 0
    for _ in range(200):
        P = random_placement_problem(rng, int(rng.integers(2, 5)))
        try:
            seg = P.evaluate(lsrnp_theta(P))["p_cr"] * 1e3
        except PlacementInfeasible:
            seg = None
        try:
            hull = solve_problem(P).objective
        except PlacementInfeasible:
            hull = None
        if seg is None:
            continue
        compared += 1
        violations += hull is None or hull > seg
    equal = single = 0
    for _ in range(50):
        P = random_placement_problem(rng, 1)
        try:
            seg = P.evaluate(lsrnp_theta(P))["p_cr"] * 1e3
        except PlacementInfeasible:
            continue
        single += 1
        equal += solve_problem(P).objective == seg
    ok = violations == 0 and equal == single
    record(6, ok, time.perf_counter() - t0, 120, f"{violations} dominance violations in {compared} segment-feasible instances; single neighbour equal {equal}/{single}")


def test_07_lifetime_ordering():
    t0 = time.perf_counter()
    reps = {m: experiment("A", 40, m) for m in ("orns", "lsrnp", "ra", "none")}
    orns = reps["orns"]
    parts, ok = [], not any(r.failed_seeds for r in reps.values())
    for other in ("lsrnp", "ra", "none"):
        wins, n, p = sign_test(orns.lifetimes, reps[other].lifetimes)
        good = orns.mean_lifetime > reps[other].mean_lifetime and p < 0.05
        ok &= good
        parts.append(f"vs {other}: {orns.mean_lifetime:.3e} > {reps[other].mean_lifetime:.3e}, {wins}/{n} wins, p={p:.1e}")
    record(7, ok, time.perf_counter() - t0, 600, "; ".join(parts))


def test_08_iec_improvement():
    t0 = time.perf_counter()
    orns, none = experiment("A", 40, "orns"), experiment("A", 40, "none")
    sigma = 4e5**2
    runs = [s.residual for s in orns.ok]
    n_runs, n = len(runs), len(runs[0])
    node_avg = [sum(r[i] for r in runs) / n_runs for i in range(n)]
    grand = sum(sum(r) / n for r in runs) / n_runs
    hand = sum((a - grand) ** 2 for a in node_avg) / n / sigma
    formula = math.isclose(compute_iec(runs, sigma), hand, rel_tol=1e-12)
    ok = orns.iec() < none.iec() and formula
    record(8, ok, time.perf_counter() - t0, 600, f"IEC orns {orns.iec():.3e} vs none {none.iec():.3e}; hand formula match {formula}")


def test_09_lifetime_trend_in_n():
    t0 = time.perf_counter()
    sizes = (20, 30, 40, 50)
    ok, parts = True, []
    for method in ("orns", "lsrnp", "ra", "none"):
        reps = [experiment("A", n, method) for n in sizes]
        means = [r.mean_lifetime for r in reps]
        errs = [r.stderr_lifetime for r in reps]
        rises = [i for i in range(3) if means[i + 1] > means[i]]
        good = not rises or (len(rises) == 1 and means[rises[0] + 1] - means[rises[0]] <= max(errs[rises[0]], errs[rises[0] + 1]))
        ok &= good
        parts.append(f"{method}: " + " ".join(f"{m:.2e}" for m in means) + f" ({len(rises)} rises)")
    record(9, ok, time.perf_counter() - t0, 900, "; ".join(parts))


def _brute_force(problem, relays, R, dep, model):
    target = problem.tau_star * (1 - 1e-9)
    cands = []
    for keep in itertools.product((False, True), repeat=len(relays)):
        if network_lifetime(subset_rate_array(R, relays, keep), dep, model) >= target:
            cands.append((selection_objective(keep, problem), keep))
    best = min(v for v, _ in cands)
    tie = 1e-12 * max(1.0, abs(best))
    _, keep, value = min((sum(k), k, v) for v, k in cands if v <= best + tie)
    return value, keep


def test_10_relay_minimisation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    cfg = HarnessConfig()
    model = cfg.model
    matched = verified = instances = 0
    while instances < 50:
        dep = generate_deployment(int(rng.integers(10, 31)), cfg, seed=int(rng.integers(2**31)), rf=0.25)
        run = orns_run(dep, model, int(rng.integers(2, 13)), cfg.settings, R=build_initial_rate_array(dep, model, cfg.routing))
        if not run.relays:
            continue
        instances += 1
        problem, relays = build_selection_problem(run, model, omega1=float(rng.uniform(0.1, 0.9)))
        res = select_relays(problem, relays, run.rate_array, run.deployment, model, "exact")
        value, keep = _brute_force(problem, relays, run.rate_array, run.deployment, model)
        matched += res.keep == keep and math.isclose(res.objective, value, rel_tol=1e-12, abs_tol=1e-12)
        verified += network_lifetime(res.rate_array, run.deployment, model) >= run.lifetime * (1 - 1e-9)
    case_d = experiment("D", 80, "orns", selection=True, seeds=tuple(range(5)))
    m0 = Scenario("D", 80, ()).m0
    kept = case_d.mean_kept
    ok = matched == 50 and verified == 50 and not case_d.failed_seeds and kept < m0
    record(10, ok, time.perf_counter() - t0, 600, f"exact == brute force {matched}/50, lifetime kept {verified}/50; case D N=80 mean kept {kept:.1f} of M0={m0}")


def test_11_determinism(tmp_path):
    t0 = time.perf_counter()
    outs = []
    for tag in ("first", "second"):
        out = tmp_path / tag
        args = ["experiment", "--case", "C", "--n", "20", "--seeds", "4", "--selection", "--out", str(out)]
        assert cli.main(args) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = outs[0] == outs[1] and len(outs[0]) == 7
    record(11, same, time.perf_counter() - t0, 300, f"{len(outs[0])} files, byte-identical {same}")
