"""Command-line front end.

Exit codes: 0 solved, 2 a limit was exhausted, 1 input error (message on stderr).
Timing values are collected under the ``timing`` key of ``report.json`` and the
wall-clock stamp under ``timestamp``; everything else is deterministic.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .engine import export_mps
from .flow import flow_to_csv, power_flow, proportional_injections, throughput
from .grid import GridError, load_grid
from .nonlin import BudgetSet, SolveOptions, budget_set, compare_models, gamma_preset, limit_experiment, \
    solution_histogram, solve_attack
from .reports import RunOutput, comparison_rows, emit_status_grid, nonlinear_sweep_rows, status_sweep

MODES = ("mincard", "severity", "nonlinear", "flow", "compare", "limit", "brute", "status")


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    grid: str = ""
    mode: str = "mincard"
    out: str = "out"
    tmin: float = 0.5
    k: int = 3
    kmax: int | None = None
    eps: float = 1e-3
    gamma: str = "2"
    delta_b: list = field(default_factory=lambda: [10.0])
    iters: int = 800
    nl_eps: float = 0.01
    seed: int = 0
    warm_start: bool = False
    attack: list = field(default_factory=list)
    sigmas: list = field(default_factory=lambda: [1.0, 1.2, 1.4, 1.6, 1.8, 2.0])
    eps_seq: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    tmins: list = field(default_factory=lambda: [0.5])
    ks: list = field(default_factory=lambda: [1, 2, 3, 4])
    export_mps: bool = False
    node_limit: int = 1_000_000

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InputError(f"mode: expected one of {', '.join(MODES)}")
        if not self.grid:
            raise InputError("grid: a grid file is required")
        if not 0.0 <= self.tmin <= 1.0:
            raise InputError(f"tmin: must lie in [0, 1], got {self.tmin}")
        if any(not 0.0 <= t <= 1.0 for t in self.tmins):
            raise InputError("tmins: values must lie in [0, 1]")
        if self.eps <= 0:
            raise InputError("eps: must be positive")
        if self.k < 1:
            raise InputError("k: must be at least 1")
        if self.kmax is not None and self.kmax < 0:
            raise InputError("kmax: must be nonnegative")
        if self.node_limit < 1:
            raise InputError("node_limit: must be positive")
        if self.iters < 1:
            raise InputError("iters: must be positive")
        if any(d < 0 for d in self.delta_b):
            raise InputError("delta_b: values must be nonnegative")
        if any(s <= 0 for s in self.sigmas):
            raise InputError("sigmas: values must be positive")
        if any(e <= 0 for e in self.eps_seq):
            raise InputError("eps_seq: values must be positive")
        parse_gamma(self.gamma)


def parse_gamma(text: str):
    """``'1'``, ``'2'``, ``'3'`` for the presets or ``'xl=..,xu=..'``."""
    text = str(text).strip()
    if text in ("1", "2", "3"):
        return int(text)
    try:
        parts = dict(p.split("=", 1) for p in text.split(","))
        xl, xu = float(parts["xl"]), float(parts["xu"])
    except (ValueError, KeyError):
        raise InputError(f"gamma: expected 1, 2, 3 or 'xl=..,xu=..', got {text!r}") from None
    if not 0 < xl <= xu:
        raise InputError("gamma: need 0 < xl <= xu")
    return xl, xu


def make_gamma(spec, m: int, delta_b: float) -> BudgetSet:
    if isinstance(spec, int):
        return gamma_preset(m, spec, delta_b)
    return budget_set(m, spec[0], spec[1], delta_b)


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _strs(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nkgrid", description="Attack analysis for DC power grids.")
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--grid")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out")
    p.add_argument("--tmin", type=float)
    p.add_argument("--tmins", type=_floats, help="comma list for the status sweep")
    p.add_argument("--k", type=int)
    p.add_argument("--ks", type=_ints, help="comma list for the status sweep")
    p.add_argument("--kmax", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--gamma", help="1, 2, 3 or xl=..,xu=..")
    p.add_argument("--delta-b", dest="delta_b", type=_floats, help="comma list of excess budgets")
    p.add_argument("--iters", type=int)
    p.add_argument("--nl-eps", dest="nl_eps", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--warm-start", dest="warm_start", action="store_true", default=None)
    p.add_argument("--attack", type=_strs, help="comma list of arc ids")
    p.add_argument("--sigmas", type=_floats)
    p.add_argument("--eps-seq", dest="eps_seq", type=_floats)
    p.add_argument("--node-limit", dest="node_limit", type=int, help="branch-and-bound node limit")
    p.add_argument("--export-mps", dest="export_mps", action="store_true", default=None)
    return p


def config_from_args(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    base = {}
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"config: {exc}") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(base) - known)
        if unknown:
            raise InputError(f"config: unknown field {unknown[0]!r}")
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            base[f.name] = v
    try:
        cfg = RunConfig(**base)
    except TypeError as exc:
        raise InputError(f"config: {exc}") from None
    cfg.validate()
    return cfg


# -- modes ------------------------------------------------------------------------------


def _mode_mincard(g, cfg, out, timing):
    from .mincard import MinCardLimits, min_cardinality_attack

    t0 = time.perf_counter()
    res = min_cardinality_attack(g, cfg.tmin, cfg.eps, MinCardLimits(max_iters=cfg.iters, kmax=cfg.kmax),
                                 on_iteration=out.trace)
    timing["solve_seconds"] = time.perf_counter() - t0
    out.table("iterations", ["iter", "master_obj", "attack", "controller_t", "cuts_added", "systems_resident"],
              [[r["iter"], r["master_obj"], " ".join(r["z*"] or []), r["controller_t"], r["cuts_added"],
                r["systems_resident"]] for r in res.trace])
    if cfg.export_mps and res.master is not None:
        export_mps(res.master.build(), out.dir / "master.mps", name="MASTER")
    return res.to_dict(g), (0 if res.status != "limit" else 2)


def _mode_severity(g, cfg, out, timing):
    from .mincard import build_severity_model, is_successful, severity_search

    t0 = time.perf_counter()
    res = severity_search(g, cfg.k, cfg.tmin, cfg.eps, node_limit=cfg.node_limit)
    timing["solve_seconds"] = time.perf_counter() - t0
    if cfg.export_mps:
        built = build_severity_model(g, cfg.k, cfg.tmin)
        if built is not None:
            export_mps(built[0], out.dir / "severity.mps", name="SEVERITY")
    t = None if not np.isfinite(res.t) else res.t
    ok = is_successful(res.t, cfg.eps)
    out.table("severity", ["k", "t", "attack", "successful"],
              [[cfg.k, "inf" if t is None else t, " ".join(g.sorted_arcs(res.attack)), ok]])
    return {"k": cfg.k, "t": t, "attack": g.sorted_arcs(res.attack), "successful": ok,
            "configs": res.configs_used, "optimal": res.optimal}, (0 if res.optimal else 2)


def _mode_nonlinear(g, cfg, out, timing):
    spec = parse_gamma(cfg.gamma)
    b = proportional_injections(g)
    sweep, prev, code = [], None, 0
    for db in sorted(cfg.delta_b):
        gamma = make_gamma(spec, g.m, db)
        x0 = prev.x if (cfg.warm_start and prev is not None) else None
        t0 = time.perf_counter()
        rep = solve_attack(g, gamma, b, SolveOptions(iter_limit=cfg.iters, eps=cfg.nl_eps, x0=x0))
        sec = time.perf_counter() - t0
        sweep.append((db, rep, sec))
        out.trace({"delta_b": db, "status": rep.status, "iterations": rep.iterations,
                   "max_congestion": rep.max_congestion})
        if rep.status != "eps-local-opt":
            code = 2
        prev = rep
    timing["solve_seconds"] = [s for _, _, s in sweep]
    header, rows = nonlinear_sweep_rows(sweep)
    out.table("nonlinear", header, rows)
    hi = max(float(np.max(rep.x)) for _, rep, _ in sweep)
    lo = min(float(np.min(rep.x)) for _, rep, _ in sweep)
    edges = np.linspace(lo, max(hi, lo + 1.0), 6)
    last = sweep[-1][1]
    out.table("histogram", ["bin_low", "bin_high", "count"], solution_histogram(last.x, edges))
    return {"injections": "proportional-to-pmax", "runs": [dict(rep.to_dict(g), delta_b=db) for db, rep, _ in sweep]}, code


def _mode_flow(g, cfg, out, timing):
    b = proportional_injections(g)
    fs = power_flow(g, cfg.attack, b)
    fcsv, tcsv = flow_to_csv(g, fs)
    (out.dir / "tables" / "flows.csv").write_text(fcsv)
    (out.dir / "tables" / "angles.csv").write_text(tcsv)
    r = np.abs(fs.f) / g.u
    return {"attack": g.sorted_arcs(cfg.attack), "throughput": throughput(g, fs),
            "max_congestion": float(r.max(initial=0.0)), "injections": "proportional-to-pmax"}, 0


def _mode_compare(g, cfg, out, timing):
    spec = parse_gamma(cfg.gamma)
    gamma = make_gamma(spec, g.m, cfg.delta_b[0])
    t0 = time.perf_counter()
    rows = compare_models(g, cfg.k, gamma, cfg.sigmas, cfg.tmin, eps=cfg.eps, severity_node_limit=cfg.node_limit,
                          options=SolveOptions(iter_limit=cfg.iters, eps=cfg.nl_eps),
                          log=lambda msg: print(msg, file=sys.stderr))
    timing["solve_seconds"] = time.perf_counter() - t0
    header, body = comparison_rows(rows)
    out.table("comparison", header, body)
    return {"rows": [dict(zip(header, r)) for r in body]}, 0


def _mode_limit(g, cfg, out, timing):
    rows = limit_experiment(g, cfg.attack, cfg.eps_seq)
    out.table("limit", ["eps", "flow_S", "flow_dev", "angle_dev"],
              [[r["eps"], r["flow_S"], r["flow_dev"], r["angle_dev"]] for r in rows])
    return {"S": g.sorted_arcs(cfg.attack), "rows": rows}, 0


def _mode_brute(g, cfg, out, timing):
    from .mincard import brute_force_min_attack

    kmax = cfg.kmax if cfg.kmax is not None else cfg.k
    t0 = time.perf_counter()
    res = brute_force_min_attack(g, cfg.tmin, kmax, cfg.eps)
    timing["solve_seconds"] = time.perf_counter() - t0
    v = res.verdict
    card = len(v.attack) if v.successful else None
    return {"cardinality": card, "attack": v.to_dict(g), "evaluated": res.evaluated}, 0


def _mode_status(g, cfg, out, timing):
    from .mincard import MinCardLimits

    res = status_sweep(g, cfg.tmins, cfg.ks, cfg.eps, MinCardLimits(max_iters=cfg.iters))
    grid = emit_status_grid(res)
    if grid:
        out.table("status", grid[0], grid[1:])
    timing["seconds"] = [r["seconds"] for r in res]
    return {"runs": [{k: v for k, v in r.items() if k != "seconds"} for r in res]}, 0


RUNNERS = {"mincard": _mode_mincard, "severity": _mode_severity, "nonlinear": _mode_nonlinear,
           "flow": _mode_flow, "compare": _mode_compare, "limit": _mode_limit, "brute": _mode_brute,
           "status": _mode_status}


def run(cfg: RunConfig) -> int:
    """Execute one configured run and write its artifacts."""
    cfg.validate()
    try:
        g = load_grid(cfg.grid)
    except OSError as exc:
        raise InputError(f"grid: cannot read {cfg.grid!r}: {exc.strerror}") from None
    unknown = [a for a in cfg.attack if a not in g.arc_index]
    if unknown:
        raise InputError(f"attack: unknown arc id {unknown[0]!r}")
    out = RunOutput(cfg.out)
    timing: dict = {}
    result, code = RUNNERS[cfg.mode](g, cfg, out, timing)
    params = {f.name: getattr(cfg, f.name) for f in fields(RunConfig) if f.name not in ("out", "grid")}
    report = {"mode": cfg.mode, "grid": {"nodes": g.n, "arcs": g.m}, "params": params, "result": result,
              "exit_code": code, "timing": timing,
              "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    out.finish(report)
    return code


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        return run(cfg)
    except (InputError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
