#!/usr/bin/env python3
"""Imbalance of energy consumption for each case and method (bar-chart data)."""

import argparse
import os

from uasn.harness import CASES, METHODS, HarnessConfig, Scenario, iec_csv, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", nargs="+", default=sorted(CASES))
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--methods", nargs="+", default=list(METHODS))
    ap.add_argument("--config", help="JSON harness configuration")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cfg = HarnessConfig.load(args.config) if args.config else HarnessConfig()
    os.makedirs(args.out, exist_ok=True)
    reports = []
    for case in args.cases:
        for method in args.methods:
            rep = run_experiment(Scenario(case, args.n, tuple(range(args.seeds)), method), cfg)
            reports.append(rep)
            print(f"case {case}  {method:6s} IEC {rep.iec():.4e}  mean lifetime {rep.mean_lifetime:.3e} s", flush=True)
    path = os.path.join(args.out, f"iec_n{args.n}.csv")
    with open(path, "w") as fh:
        fh.write(iec_csv(reports))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
