"""Tables and report files shared by the command line and the experiment scripts."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf") if not math.isnan(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, frozenset):
        return sorted(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=1, sort_keys=True)


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


class RunOutput:
    """Writes ``report.json``, ``tables/*.csv`` and ``trace.jsonl`` into one directory."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        (self.dir / "tables").mkdir(parents=True, exist_ok=True)
        self._trace = []

    def table(self, name: str, header, rows) -> Path:
        p = self.dir / "tables" / f"{name}.csv"
        p.write_text(table_csv(header, rows))
        return p

    def trace(self, record: dict) -> None:
        self._trace.append(record)

    def finish(self, report: dict) -> Path:
        (self.dir / "trace.jsonl").write_text("".join(json.dumps(_clean(r), sort_keys=True) + "\n"
                                                      for r in self._trace))
        p = self.dir / "report.json"
        p.write_text(dumps(report) + "\n")
        return p


# -- status grid ----------------------------------------------------------------------


def emit_status_grid(results) -> list[list[str]]:
    """Grid of ``S``/``F`` cells, one row per tmin and one column per cardinality.

    ``results`` holds dicts with ``tmin``, ``k``, ``success``, ``iterations``
    and ``seconds``. Cells read ``S (iterations), seconds``; missing runs are
    blank. The header row is ``['tmin', k1, k2, ...]``.
    """
    results = list(results)
    if not results:
        return []
    ks = sorted({r["k"] for r in results})
    tmins = sorted({r["tmin"] for r in results})
    cell = {(r["tmin"], r["k"]): r for r in results}
    grid = [["tmin"] + [str(k) for k in ks]]
    for t in tmins:
        row = [f"{t:g}"]
        for k in ks:
            r = cell.get((t, k))
            if r is None:
                row.append("")
            else:
                row.append(f"{'S' if r['success'] else 'F'} ({r['iterations']}), {r['seconds']:.2f}")
        grid.append(row)
    return grid


def status_sweep(g, tmins, ks, eps: float = 1e-3, limits=None, clock=None) -> list[dict]:
    """Run the min-cardinality search per (tmin, k) and stop each row at its first success."""
    import time

    from .mincard import MinCardLimits, min_cardinality_attack

    clock = clock or time.perf_counter
    out = []
    for t in tmins:
        for k in sorted(ks):
            lim = MinCardLimits(**{**(limits.__dict__ if limits else {}), "kmax": k})
            t0 = clock()
            res = min_cardinality_attack(g, t, eps, lim)
            out.append({"tmin": t, "k": k, "success": res.status == "optimal",
                        "iterations": res.iterations, "seconds": clock() - t0, "status": res.status})
            if res.status == "optimal":
                break
    return out


def comparison_rows(rows) -> tuple[list[str], list[list]]:
    header = ["sigma", "mip_cong", "mip_attack", "mip_removal_cong", "mip_optimal", "nl_cong", "nl_top6", "impact",
              "i10", "c10", "nl_status"]
    body = [[r.sigma, r.mip_cong, " ".join(r.mip_attack), r.mip_removal_cong, r.mip_optimal, r.nl_cong,
             " ".join(f"{a}({v:.2f})" for a, v in r.nl_top), r.impact, r.i10, r.c10, r.nl_status] for r in rows]
    return header, body


def nonlinear_sweep_rows(sweep) -> tuple[list[str], list[list]]:
    """One row per excess budget: Max Cong, iterations and exit status (times go to the report)."""
    header = ["delta_b", "max_cong", "iterations", "exit_status", "last_feasible_iter"]
    body = [[db, rep.max_congestion, rep.iterations, rep.status,
             "" if rep.last_feasible_iter is None else rep.last_feasible_iter] for db, rep, sec in sweep]
    return header, body
