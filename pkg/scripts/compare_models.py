"""Severity MIP against the nonlinear model on the 49-node comparison grid, one row per capacity scale."""

import argparse
import sys
import time

from nkgrid.grid import comparison_grid
from nkgrid.nonlin import budget_set, compare_models
from nkgrid.reports import RunOutput, comparison_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--sigmas", default="1.0,1.2,1.4,1.6,1.8,2.0")
    ap.add_argument("--xu", type=float, default=20.0)
    ap.add_argument("--delta-b", type=float, default=60.0)
    ap.add_argument("--node-limit", type=int, default=5000)
    ap.add_argument("--out", default="out/compare")
    args = ap.parse_args()
    g = comparison_grid()
    t0 = time.perf_counter()
    rows = compare_models(g, args.k, budget_set(g.m, 1.0, args.xu, args.delta_b),
                          [float(s) for s in args.sigmas.split(",")], severity_node_limit=args.node_limit,
                          log=lambda msg: print(msg, file=sys.stderr))
    header, body = comparison_rows(rows)
    out = RunOutput(args.out)
    out.table("comparison", header, body)
    out.finish({"k": args.k, "rows": [dict(zip(header, r)) for r in body],
                "timing": {"seconds": time.perf_counter() - t0}})
    print(",".join(header))
    for r in body:
        print(",".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in r))


if __name__ == "__main__":
    main()
