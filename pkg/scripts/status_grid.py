"""Min-cardinality sweep over (tmin, cardinality) on a grid file, printed as an S/F table."""

import argparse

from nkgrid.grid import load_grid
from nkgrid.reports import emit_status_grid, status_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("grid")
    ap.add_argument("--tmins", default="0.3,0.5,0.8")
    ap.add_argument("--ks", default="1,2,3,4")
    args = ap.parse_args()
    g = load_grid(args.grid)
    res = status_sweep(g, [float(t) for t in args.tmins.split(",")], [int(k) for k in args.ks.split(",")])
    rows = emit_status_grid(res)
    widths = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))] if rows else []
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)))


if __name__ == "__main__":
    main()
