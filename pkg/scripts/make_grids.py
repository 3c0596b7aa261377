"""Write the built-in grids as JSON files usable with ``nkgrid --grid``."""

import argparse
from pathlib import Path

from nkgrid.grid import comparison_grid, make_square_grid, non_monotone_grid, parallel_pair_grid, render_grid, \
    three_node_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="grids")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grids = {
        "three_node": three_node_grid(),
        "parallel_pair": parallel_pair_grid(),
        "non_monotone": non_monotone_grid(),
        "square49": make_square_grid(7, 7, 4, 14, seed=1),
        "comparison49": comparison_grid(),
    }
    for name, g in grids.items():
        (out / f"{name}.json").write_text(render_grid(g))
        print(f"{name}: {g.n} nodes, {g.m} arcs")


if __name__ == "__main__":
    main()
