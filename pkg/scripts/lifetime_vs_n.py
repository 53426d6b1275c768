#!/usr/bin/env python3
"""Mean network lifetime against sensor count for every method of one case."""

import argparse
import os

from uasn.harness import METHODS, HarnessConfig, Scenario, lifetime_csv, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--case", default="A")
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 30, 40, 50])
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--methods", nargs="+", default=list(METHODS))
    ap.add_argument("--config", help="JSON harness configuration")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cfg = HarnessConfig.load(args.config) if args.config else HarnessConfig()
    os.makedirs(args.out, exist_ok=True)
    reports = []
    print(f"{'method':8s}" + "".join(f"{f'N={n}':>22s}" for n in args.sizes))
    for method in args.methods:
        row = []
        for n in args.sizes:
            rep = run_experiment(Scenario(args.case, n, tuple(range(args.seeds)), method), cfg)
            reports.append(rep)
            row.append(f"{rep.mean_lifetime:.3e} ± {rep.stderr_lifetime:.1e}")
        print(f"{method:8s}" + "".join(f"{c:>22s}" for c in row), flush=True)
    path = os.path.join(args.out, f"lifetime_vs_n_{args.case}.csv")
    with open(path, "w") as fh:
        fh.write(lifetime_csv(reports))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
