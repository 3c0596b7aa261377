"""Excess-budget sweep of the nonlinear attack on the 49-node square grid."""

import argparse
import time

from nkgrid.grid import make_square_grid
from nkgrid.nonlin import SolveOptions, sweep_budgets
from nkgrid.reports import RunOutput, nonlinear_sweep_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gamma", type=int, default=1, choices=(1, 2, 3))
    ap.add_argument("--deltas", default="5,10,15,20,25,30")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--cold", action="store_true", help="solve every budget from the baseline point")
    ap.add_argument("--out", default="out/nonlinear_sweep")
    args = ap.parse_args()
    g = make_square_grid(7, 7, 4, 14, seed=args.seed)
    deltas = [float(d) for d in args.deltas.split(",")]
    t0 = time.perf_counter()
    sweep = sweep_budgets(g, args.gamma, deltas, options=SolveOptions(), warm_start=not args.cold)
    sec = time.perf_counter() - t0
    header, rows = nonlinear_sweep_rows([(db, rep, None) for db, rep in sweep])
    out = RunOutput(args.out)
    out.table("nonlinear", header, rows)
    out.finish({"gamma": args.gamma, "seed": args.seed, "runs": [dict(rep.to_dict(g), delta_b=db) for db, rep in sweep],
                "timing": {"seconds": sec}})
    print(",".join(header))
    for r in rows:
        print(",".join(str(v) for v in r))


if __name__ == "__main__":
    main()
