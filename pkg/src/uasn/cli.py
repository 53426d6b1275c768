"""Command line entry point.

Exit codes: 0 success, 2 infeasible problem, 3 invalid input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness
from .model import Deployment, network_lifetime
from .orns import PlacementInfeasible, PlacementRecord, PlacementRun, NoCriticalNode
from .rnmi import select_for_run
from .routing import CapacityInfeasible, DisconnectedError, build_initial_rate_array, dump_rate_array_csv, load_rate_array_csv

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID = 0, 2, 3


def _config(args) -> harness.HarnessConfig:
    cfg = harness.HarnessConfig.load(args.config) if args.config else harness.HarnessConfig()
    if getattr(args, "routing", None):
        cfg = harness.with_overrides(cfg, routing=args.routing)
    return cfg


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _read_deployment(path: str) -> Deployment:
    with open(path) as fh:
        return Deployment.from_dict(json.load(fh))


def _read_rates(path: str | None, dep: Deployment, cfg: harness.HarnessConfig) -> np.ndarray:
    if path is None:
        return build_initial_rate_array(dep, cfg.model, cfg.routing)
    with open(path) as fh:
        R = load_rate_array_csv(fh.read())
    if R.shape != (len(dep), len(dep)):
        raise ValueError(f"rate array is {R.shape}, deployment has {len(dep)} nodes")
    return R


def cmd_deploy(args) -> int:
    cfg = _config(args)
    dep = harness.generate_deployment(args.n, cfg, args.seed, args.rf)
    _write(args.output, json.dumps(dep.to_dict(), indent=1) + "\n")
    return EXIT_OK


def cmd_route(args) -> int:
    cfg = _config(args)
    dep = _read_deployment(args.deployment)
    _write(args.output, dump_rate_array_csv(build_initial_rate_array(dep, cfg.model, cfg.routing)))
    return EXIT_OK


def cmd_place(args) -> int:
    cfg = _config(args)
    dep = _read_deployment(args.deployment)
    R = _read_rates(args.rates, dep, cfg)
    run = harness.place(args.method, dep, cfg, args.m0, args.seed, R=R)
    prefix = args.output
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    _write(prefix + ".deployment.json", json.dumps(run.deployment.to_dict(), indent=1) + "\n")
    _write(prefix + ".rates.csv", dump_rate_array_csv(run.rate_array))
    _write(prefix + ".placements.jsonl", run.log_lines())
    print(json.dumps({"method": args.method, "initial_lifetime_s": run.initial_lifetime, "lifetime_s": run.lifetime, "relays": run.relays}))
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = _config(args)
    dep = _read_deployment(args.deployment)
    R = _read_rates(args.rates, dep, cfg)
    with open(args.log) as fh:
        records = [PlacementRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
    model = cfg.model
    life = network_lifetime(R, dep, model)
    run = PlacementRun("loaded", R, dep, records, life, life)
    result = select_for_run(run, model, cfg.omega1, cfg.eta, args.mode)
    _write(args.output, json.dumps(result.report(), indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args)
    seeds = list(range(args.seed0, args.seed0 + args.seeds))
    reports = []
    for method in args.methods:
        scen = harness.Scenario(args.case, args.n, tuple(seeds), method, args.selection)
        reports.append(harness.run_experiment(scen, cfg))
    os.makedirs(args.out, exist_ok=True)
    tag = f"{args.case}_n{args.n}"
    _write(os.path.join(args.out, f"lifetimes_{tag}.csv"), harness.lifetime_csv(reports))
    _write(os.path.join(args.out, f"positions_{tag}.csv"), harness.positions_csv(reports))
    _write(os.path.join(args.out, f"iec_{tag}.csv"), harness.iec_csv(reports))
    for rep in reports:
        _write(os.path.join(args.out, f"report_{tag}_{rep.method}.json"), rep.to_json() + "\n")
    for rep in reports:
        print(f"{rep.method:6s} mean lifetime {rep.mean_lifetime:.6e} s  kept {rep.mean_kept:.2f}  failed {rep.failed_seeds}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    out = []
    for path in args.reports:
        with open(path) as fh:
            rep = harness.MetricsReport.from_json(fh.read())
        out.append(
            {
                "case": rep.case,
                "method": rep.method,
                "n": rep.n,
                "mean_lifetime_s": rep.mean_lifetime,
                "stderr_lifetime_s": rep.stderr_lifetime,
                "iec": rep.iec(args.sigma0_sq) if rep.ok else None,
                "mean_relays_kept": rep.mean_kept,
                "failed_seeds": rep.failed_seeds,
            }
        )
    _write(args.output, json.dumps(out, indent=1) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uasn", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with harness parameters")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("deploy", help="generate a random connected deployment")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--rf", type=float, default=1.0)
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_deploy)

    r = sub.add_parser("route", help="initial rate array as CSV")
    r.add_argument("--deployment", required=True)
    r.add_argument("--routing", choices=["min_energy", "k_paths"])
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_route)

    pl = sub.add_parser("place", help="place relays one at a time")
    pl.add_argument("--method", choices=["orns", "ra", "lsrnp"], required=True)
    pl.add_argument("--deployment", required=True)
    pl.add_argument("--rates", help="rate array CSV; routed from scratch if omitted")
    pl.add_argument("--routing", choices=["min_energy", "k_paths"])
    pl.add_argument("--m0", type=int, required=True)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("-o", "--output", required=True, help="output path prefix")
    pl.set_defaults(func=cmd_place)

    s = sub.add_parser("select", help="choose which placed relays to keep")
    s.add_argument("--deployment", required=True)
    s.add_argument("--rates", required=True)
    s.add_argument("--log", required=True, help="placement log (JSON lines)")
    s.add_argument("--mode", choices=["auto", "exact", "greedy"], default="auto")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_select)

    e = sub.add_parser("experiment", help="batch run over seeds")
    e.add_argument("--case", choices=sorted(harness.CASES), required=True)
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--seeds", type=int, required=True, help="number of seeds")
    e.add_argument("--seed0", type=int, default=0)
    e.add_argument("--methods", nargs="+", choices=harness.METHODS, default=list(harness.METHODS))
    e.add_argument("--selection", action="store_true")
    e.add_argument("--routing", choices=["min_energy", "k_paths"])
    e.add_argument("--out", default="results")
    e.set_defaults(func=cmd_experiment)

    m = sub.add_parser("metrics", help="summarise report files")
    m.add_argument("reports", nargs="+")
    m.add_argument("--sigma0-sq", type=float, default=None)
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except (PlacementInfeasible, CapacityInfeasible, DisconnectedError, harness.GenerationError, NoCriticalNode) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
