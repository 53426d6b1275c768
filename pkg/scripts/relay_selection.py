#!/usr/bin/env python3
"""Relays placed versus relays kept after minimisation, with kept positions."""

import argparse
import os

from uasn.harness import HarnessConfig, Scenario, positions_csv, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--case", default="D")
    ap.add_argument("--n", type=int, default=80)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--config", help="JSON harness configuration")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cfg = HarnessConfig.load(args.config) if args.config else HarnessConfig()
    os.makedirs(args.out, exist_ok=True)
    scen = Scenario(args.case, args.n, tuple(range(args.seeds)), "orns", selection=True)
    rep = run_experiment(scen, cfg)
    print(f"case {args.case}, N={args.n}, M0={scen.m0}")
    for s in rep.seeds:
        if s.error:
            print(f"  seed {s.seed}: {s.error}")
        else:
            print(f"  seed {s.seed}: placed {s.relays_placed}, kept {s.relays_kept}, lifetime {s.lifetime_s:.3e} s")
    print(f"mean kept {rep.mean_kept:.1f} of {scen.m0}")
    path = os.path.join(args.out, f"relay_positions_{args.case}_n{args.n}.csv")
    with open(path, "w") as fh:
        fh.write(positions_csv([rep]))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
