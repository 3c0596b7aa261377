"""Minimum-cardinality attacks: controller response, dual systems, Benders cuts, master loop.

Conventions
-----------
An attack is successful when every generator configuration is defeated, i.e.
when the controller's best min-max overload ``t`` satisfies ``t >= 1 + eps``
(``t = inf`` when no configuration is even feasible). The same predicate is
used by the cutting-plane algorithm and by the brute-force oracle.

The attacker-side system for a configuration ``C`` is the LP dual of the
controller problem, written with attack indicators ``z`` in the right-hand
sides: ``lo <= A psi + B z <= hi``. For fixed ``z`` its optimal value equals
the controller's optimal overload. A Benders cut is the weak-duality bound
obtained from optimal multipliers of that LP at one ``z``, which is linear in
``z`` and valid for every ``z``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .engine import INF, EngineError, LpSession, ModelBuilder, MipModel, solve_mip
from .flow import ControllerLP, FlowState
from .grid import Grid, component_labels
from .numerics import POLICY


def big_m(g: Grid) -> float:
    """Bound on scaled flow-law multipliers: ``max 1 / (sqrt(x) u)``."""
    return float(np.max(1.0 / (np.sqrt(g.x) * g.u)))


def is_successful(t: float, eps: float) -> bool:
    return bool(t >= 1.0 + eps)


def all_configs(g: Grid) -> list[np.ndarray]:
    G = len(g.gens)
    return [np.array([(bits >> j) & 1 for j in range(G)], dtype=bool) for bits in range(2 ** G)]


# -- verdicts ---------------------------------------------------------------------


@dataclass
class AttackVerdict:
    attack: frozenset
    successful: bool
    config: frozenset | None
    t: float
    flow: FlowState | None = None

    def to_dict(self, g: Grid) -> dict:
        return {"attack": g.sorted_arcs(self.attack), "successful": self.successful,
                "config": None if self.config is None else g.sorted_gens(self.config),
                "t": None if not math.isfinite(self.t) else self.t}


def _config_ids(g: Grid, mask) -> frozenset:
    return frozenset(g.nodes[k].id for k, on in zip(g.gens, mask) if on)


def controller_best_response(g: Grid, attack, tmin: float, eps: float = 1e-3, *,
                             lp: ControllerLP | None = None, forced_zero=None,
                             method: str = "bnb") -> AttackVerdict:
    """Best configuration for the controller against ``attack``.

    Solves the controller MIP over generator on/off decisions. The verdict is
    successful when the optimal overload is at least ``1 + eps``.
    """
    lp = lp or ControllerLP(g, tmin)
    mask = attack if isinstance(attack, np.ndarray) else g.attack_mask(attack)
    out = lp.solve(mask, None, forced_zero=forced_zero, method=method)
    att = g.attack_from_mask(mask)
    if not out.feasible:
        return AttackVerdict(att, True, None, INF, None)
    ok = is_successful(out.t, eps)
    return AttackVerdict(att, ok, None if ok else _config_ids(g, out.y), out.t, out.flow)


# -- attacker dual system ---------------------------------------------------------


@dataclass
class DualBlock:
    """``lo <= A psi + B z <= hi`` with objective ``w`` and bounds on ``psi``."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    lo: np.ndarray
    hi: np.ndarray
    w: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    slices: dict
    groups: dict
    config: np.ndarray

    @property
    def npsi(self) -> int:
        return self.A.shape[1]


def attacker_dual_model(g: Grid, config_mask, tmin: float, M: float | None = None, *,
                        tighten: bool = True) -> DualBlock:
    """Dual of the controller LP for one configuration, parameterized by ``z``.

    Variables ``psi``: node potentials ``alpha``; scaled flow-law multipliers
    ``bhat = sqrt(x) beta``; overload multipliers ``p, q``; attacked-arc
    penalty multipliers ``wp, wm``; generator bound multipliers ``gm, gp``;
    throughput multiplier ``mu``; demand cap multipliers ``delta``. With
    ``tighten`` the absolute values ``|alpha_i - alpha_j|`` and ``|bhat|`` get
    split variables ``a, bb`` and two families of valid inequalities are added.
    """
    M = big_m(g) if M is None else float(M)
    m, n, G, Dn = g.m, g.n, len(g.gens), len(g.dems)
    cm = np.asarray(config_mask, dtype=bool)
    x, u = g.x, g.u
    rx = 1.0 / np.sqrt(x)
    mb = ModelBuilder()
    z = mb.var("z", m, 0.0, 1.0)
    alpha = mb.var("alpha", n, -INF, INF)
    bhat = mb.var("bhat", m, -INF, INF)
    p = mb.var("p", m)
    q = mb.var("q", m)
    wp = mb.var("wp", m, obj=1.0)
    wm = mb.var("wm", m, obj=1.0)
    gm = mb.var("gm", G, obj=np.where(cm, g.pmin, 0.0))
    gp = mb.var("gp", G, obj=-np.where(cm, g.pmax, 0.0))
    mu = mb.var("mu", 1, obj=tmin * float(g.dnom.sum()))
    delta = mb.var("delta", Dn, obj=-g.dnom)
    I = sp.identity(m, format="csr")
    N = g.incidence()
    NT = N.T.tocsr()
    mb.rows("flowdual", [(alpha, NT), (bhat, -sp.diags(np.sqrt(x))), (p, -I), (q, I), (wp, -I), (wm, I)], 0.0, 0.0)
    mb.rows("thetadual", [(bhat, N @ sp.diags(rx))], 0.0, 0.0)
    mb.rows("metric", [(p, u[None, :]), (q, u[None, :]), (wp, np.ones((1, m))), (wm, np.ones((1, m)))], -INF, 1.0)
    Eg = sp.csr_matrix((np.ones(G), (np.arange(G), g.gens)), shape=(G, n))
    Ed = sp.csr_matrix((np.ones(Dn), (np.arange(Dn), g.dems)), shape=(Dn, n))
    IG = sp.identity(G, format="csr")
    mb.rows("pcol", [(alpha, -Eg), (gm, IG), (gp, -IG)], -INF, 0.0)
    mb.rows("dcol", [(alpha, Ed), (mu, np.ones((Dn, 1))), (delta, -sp.identity(Dn, format="csr"))], -INF, 0.0)
    mb.rows("bigm_hi", [(bhat, I), (z, M * I)], -INF, M)
    mb.rows("bigm_lo", [(bhat, -I), (z, M * I)], -INF, M)
    mb.rows("cap", [(p, I), (q, I), (z, sp.diags(1.0 / u))], -INF, 1.0 / u)
    mb.rows("omega", [(wp, I), (wm, I), (z, -I)], -INF, 0.0)
    if tighten:
        a = mb.var("a", m)
        bb = mb.var("bb", m)
        mb.rows("abs_a_lo", [(a, I), (alpha, -NT)], 0.0, INF)
        mb.rows("abs_a_hi", [(a, I), (alpha, NT)], 0.0, INF)
        mb.rows("abs_b_lo", [(bb, I), (bhat, -I)], 0.0, INF)
        mb.rows("abs_b_hi", [(bb, I), (bhat, I)], 0.0, INF)
        Rx = sp.diags(rx)
        mb.rows("lvalid1", [(a, Rx), (bb, I), (wp, -Rx), (wm, -Rx), (z, M * I)], -INF, M)
        dense = np.tile(rx[None, :], (m, 1))
        mb.rows("lvalid2", [(a, Rx), (bb, I), (p, -dense), (q, -dense), (wp, -Rx), (wm, -Rx)], -INF, 0.0)
    model = mb.build("max")
    zc = z.slice
    A = model.A.tocsc()
    psi_cols = np.arange(z.size, model.nvars)
    slices = {b.name: slice(b.start - z.size, b.start - z.size + b.size) for b in mb.blocks if b.name != "z"}
    return DualBlock(A=A[:, psi_cols].tocsr(), B=A[:, zc].tocsr(), lo=model.row_lo, hi=model.row_hi,
                     w=model.c[psi_cols], lb=model.lb[psi_cols], ub=model.ub[psi_cols], slices=slices,
                     groups=dict(mb.groups), config=cm)


class FixedZDual:
    """The attacker system of one configuration loaded for repeated fixed-z solves."""

    def __init__(self, block: DualBlock):
        from .engine import LpModel
        self.block = block
        self.session = LpSession(LpModel(block.w, block.A, block.lo, block.hi, block.lb, block.ub, "max"))

    def solve(self, z):
        blk = self.block
        shift = blk.B @ np.asarray(z, dtype=float)
        self.session.set_row_bounds(np.arange(len(blk.lo)), blk.lo - shift, blk.hi - shift)
        return self.session.solve()


# -- cuts -------------------------------------------------------------------------


@dataclass
class BendersCut:
    """``const + coef . z + t_coef * t_C >= rhs``.

    The optimal value at the generating point is folded into ``const``, so
    ``t_coef`` is zero for cuts added to the master.
    """

    coef: np.ndarray
    const: float
    rhs: float
    config: frozenset | None
    origin: str
    z_gen: np.ndarray
    t_coef: float = 0.0
    multipliers: dict = field(default_factory=dict)

    def lhs(self, z) -> np.ndarray:
        return self.const + np.asarray(z, dtype=float) @ self.coef

    def violation(self, z) -> float:
        return float(self.rhs - self.lhs(z))

    def key(self) -> tuple:
        return (round(self.const, 9),) + tuple(np.round(self.coef, 9))


def benders_cut(block: DualBlock, sol, z_star, eps: float, *, config_ids=None, origin="plain",
                tol: float = 1e-7) -> BendersCut:
    """Cut from optimal multipliers of the fixed-z attacker system.

    By weak duality, ``sum_r d_r (rhs_r - B_r z)`` plus the bound terms bounds
    the optimal value at every ``z``. Row duals with the wrong sign for a
    one-sided row are rejected.
    """
    d = np.asarray(sol.duals, dtype=float)
    lo, hi = block.lo, block.hi
    upper_only = np.isfinite(hi) & ~np.isfinite(lo)
    lower_only = np.isfinite(lo) & ~np.isfinite(hi)
    scale = 1.0 + float(np.abs(d).max(initial=0.0))
    if np.any(d[upper_only] < -tol * scale) or np.any(d[lower_only] > tol * scale):
        raise EngineError("multipliers are not dual-feasible")
    z_star = np.asarray(z_star, dtype=float)
    coef = -(block.B.T @ d)
    coef[np.abs(coef) < 1e-12] = 0.0
    const = float(sol.obj - coef @ z_star)
    mult = {}
    for name in ("bigm_hi", "bigm_lo", "cap", "omega", "lvalid1"):
        if name in block.groups:
            mult[name] = d[block.groups[name]].copy()
    return BendersCut(coef=coef, const=const, rhs=1.0 + eps, config=config_ids, origin=origin,
                      z_gen=z_star.copy(), multipliers=mult)


def no_good_cut(z_star, eps: float) -> BendersCut:
    """Exclude exactly one point: ``sum_{A}(1 - z) + sum_{not A} z >= 1``."""
    z_star = np.round(np.asarray(z_star, dtype=float))
    coef = 1.0 - 2.0 * z_star
    const = float(z_star.sum())
    return BendersCut(coef=coef, const=const, rhs=1.0, config=None, origin="nogood", z_gen=z_star)


class CutFactory:
    """Caches the fixed-z attacker systems per configuration and emits cuts."""

    def __init__(self, g: Grid, tmin: float, eps: float, *, tighten: bool = True):
        self.g, self.tmin, self.eps, self.tighten = g, tmin, eps, tighten
        self.M = big_m(g)
        self._dual: dict[tuple, FixedZDual] = {}
        self.psi_log: list[tuple] = []

    def dual_for(self, config_mask) -> FixedZDual:
        key = tuple(bool(v) for v in config_mask)
        if key not in self._dual:
            blk = attacker_dual_model(self.g, np.array(key, dtype=bool), self.tmin, self.M, tighten=self.tighten)
            self._dual[key] = FixedZDual(blk)
        return self._dual[key]

    def cut(self, attack_mask, config_ids, origin="plain") -> BendersCut:
        g = self.g
        cm = g.config_mask(config_ids)
        dual = self.dual_for(cm)
        z = np.asarray(attack_mask, dtype=float)
        sol = dual.solve(z)
        if not sol.optimal:
            raise EngineError(f"attacker system at fixed z is {sol.status}")
        self.psi_log.append((z.copy(), sol.x.copy(), cm.copy(), dual.block))
        return benders_cut(dual.block, sol, z, self.eps, config_ids=frozenset(config_ids), origin=origin)


# -- strengthening ----------------------------------------------------------------


def _defeats(v: AttackVerdict) -> bool:
    # margin check: cuts are emitted only when the controller stays within capacity
    return v.t <= 1.0 + POLICY.feas_tol


def strengthen_I(g: Grid, attack_mask, config_ids, flow: FlowState, tmin: float, *,
                 lp: ControllerLP, factory: CutFactory, eps: float) -> BendersCut | None:
    """Grow the attack with the least-loaded surviving arcs while it stays defeated.

    Returns the cut generated at the grown attack, or None when no arc could
    be added. Ties in ``|f|`` go to the lowest canonical arc index.
    """
    B = np.asarray(attack_mask, dtype=bool).copy()
    cand = list(np.flatnonzero(~B))
    f = flow.f
    cfg = config_ids
    grown = False
    while cand:
        k = min(cand, key=lambda j: (abs(f[j]), j))
        cand.remove(k)
        trial = B.copy()
        trial[k] = True
        v = controller_best_response(g, trial, tmin, eps, lp=lp)
        if not v.successful and _defeats(v):
            B, f, cfg, grown = trial, v.flow.f, v.config, True
    if not grown:
        return None
    return factory.cut(B, cfg, origin="I")


def strengthen_II(g: Grid, attack_mask, config_ids, flow: FlowState, tmin: float, *,
                  lp: ControllerLP, factory: CutFactory, eps: float) -> tuple[BendersCut, np.ndarray]:
    """Force zero flow on least-loaded surviving arcs while the controller copes.

    Ohm's law stays in force on the forced arcs. Returns the cut generated at
    ``attack + forced`` with the last defeating configuration, and the forced set.
    """
    A = np.asarray(attack_mask, dtype=bool)
    F = np.zeros(g.m, dtype=bool)
    cand = list(np.flatnonzero(~A))
    f = flow.f
    cfg = config_ids
    while cand:
        k = min(cand, key=lambda j: (abs(f[j]), j))
        cand.remove(k)
        trial = F.copy()
        trial[k] = True
        v = controller_best_response(g, A, tmin, eps, lp=lp, forced_zero=trial)
        if not v.successful and _defeats(v):
            F, f, cfg = trial, v.flow.f, v.config
    return factory.cut(A | F, cfg, origin="II"), F


# -- master -----------------------------------------------------------------------


@dataclass
class MinCardLimits:
    max_iters: int = 1000
    time_limit: float = np.inf
    kmax: int | None = None
    master_method: str = "bnb"
    master_node_limit: int = 200_000


@dataclass
class MinCardResult:
    status: str  # optimal | none-within-kmax | no-attack | limit
    verdict: AttackVerdict | None
    lower_bound: int
    iterations: int
    proof_complete: bool
    trace: list = field(default_factory=list)
    cuts: list = field(default_factory=list)
    duals: list = field(default_factory=list)
    master: object = None

    @property
    def cardinality(self) -> int | None:
        return len(self.verdict.attack) if self.verdict is not None and self.verdict.successful else None

    def to_dict(self, g: Grid) -> dict:
        return {"status": self.status, "cardinality": self.cardinality, "lower_bound": self.lower_bound,
                "iterations": self.iterations, "proof_complete": self.proof_complete,
                "attack": None if self.verdict is None else self.verdict.to_dict(g),
                "cuts": len(self.cuts)}


@dataclass
class _System:
    config: tuple
    block: DualBlock
    since: int


class Master:
    """Attacker master: ``min sum z`` subject to cuts and resident full systems."""

    def __init__(self, g: Grid, eps: float, tmin: float, *, tighten: bool = True, method: str = "bnb",
                 node_limit: int = 200_000):
        self.g, self.eps, self.tmin = g, eps, tmin
        self.tighten, self.method, self.node_limit = tighten, method, node_limit
        self.M = big_m(g)
        self.cuts: list[BendersCut] = []
        self.keys: set = set()
        self.systems: list[_System] = []
        self.lb_floor = 0

    def add_cut(self, cut: BendersCut) -> bool:
        k = cut.key()
        if k in self.keys:
            return False
        self.keys.add(k)
        self.cuts.append(cut)
        return True

    def manage_system(self, config_mask, iteration: int) -> None:
        """Keep at most two full systems; the oldest is replaced once four iterations old."""
        key = tuple(bool(v) for v in config_mask)
        if any(s.config == key for s in self.systems):
            return
        blk = attacker_dual_model(self.g, np.array(key), self.tmin, self.M, tighten=self.tighten)
        if len(self.systems) < 2:
            self.systems.append(_System(key, blk, iteration))
            return
        oldest = min(self.systems, key=lambda s: s.since)
        if iteration >= oldest.since + 4:
            self.systems.remove(oldest)
            self.systems.append(_System(key, blk, iteration))

    def build(self) -> MipModel:
        m = self.g.m
        mb = ModelBuilder()
        z = mb.var("z", m, 0.0, 1.0, obj=1.0, binary=True)
        if self.cuts:
            C = np.array([c.coef for c in self.cuts])
            rhs = np.array([c.rhs - c.const for c in self.cuts])
            mb.rows("cuts", [(z, C)], rhs, INF)
        if self.lb_floor > 0:
            mb.rows("floor", [(z, np.ones((1, m)))], float(self.lb_floor), INF)
        for j, s in enumerate(self.systems):
            b = s.block
            psi = mb.var(f"psi{j}", b.npsi, b.lb, b.ub)
            mb.rows(f"sys{j}", [(psi, b.A), (z, b.B)], b.lo, b.hi)
            mb.rows(f"val{j}", [(psi, b.w[None, :])], 1.0 + self.eps, INF)
        return mb.build("min")

    def solve(self):
        model = self.build()
        sol, stats = solve_mip(model, method=self.method, node_limit=self.node_limit)
        return sol, stats


def min_cardinality_attack(g: Grid, tmin: float, eps: float = 1e-3, limits: MinCardLimits | None = None, *,
                           tighten: bool = True, strengthen: bool = True, full_systems: bool = True,
                           on_iteration=None) -> MinCardResult:
    """Cutting-plane search for a minimum-cardinality successful attack.

    Each iteration solves the master for a candidate ``z``, asks the
    controller for its best response and, if the attack is defeated, adds the
    plain cut plus the cuts of both strengthening procedures. Borderline
    attacks (overload strictly between 1 and ``1 + eps``) are excluded with a
    no-good cut. The master optimum is a lower bound on the cardinality.
    """
    if eps <= 0:
        raise ValueError("eps: must be positive")
    limits = limits or MinCardLimits()
    lp = ControllerLP(g, tmin)
    factory = CutFactory(g, tmin, eps, tighten=tighten)
    master = Master(g, eps, tmin, tighten=tighten, method=limits.master_method,
                    node_limit=limits.master_node_limit)
    trace, lb = [], 0
    t0 = time.perf_counter()
    it = 0
    while True:
        if it >= limits.max_iters or time.perf_counter() - t0 > limits.time_limit:
            return _result(factory, master, "limit", None, lb, it, False, trace, master.cuts)
        it += 1
        sol, stats = master.solve()
        if not stats.optimal:
            return _result(factory, master, "limit", None, lb, it, False, trace, master.cuts)
        if not sol.optimal:
            trace.append({"iter": it, "master_obj": None, "z*": None, "controller_t": None,
                          "cuts_added": 0, "systems_resident": len(master.systems)})
            return _result(factory, master, "no-attack", None, lb, it, True, trace, master.cuts)
        zs = np.round(sol.x[:g.m])
        obj = int(round(zs.sum()))
        lb = max(lb, obj)
        mask = zs > 0.5
        if limits.kmax is not None and obj > limits.kmax:
            trace.append({"iter": it, "master_obj": obj, "z*": g.sorted_arcs(g.attack_from_mask(mask)),
                          "controller_t": None, "cuts_added": 0, "systems_resident": len(master.systems)})
            return _result(factory, master, "none-within-kmax", None, lb, it, True, trace, master.cuts)
        v = controller_best_response(g, mask, tmin, eps, lp=lp)
        added = []
        if v.successful:
            trace.append({"iter": it, "master_obj": obj, "z*": g.sorted_arcs(v.attack),
                          "controller_t": None if not math.isfinite(v.t) else v.t,
                          "cuts_added": 0, "systems_resident": len(master.systems)})
            if on_iteration:
                on_iteration(trace[-1])
            return _result(factory, master, "optimal", v, lb, it, True, trace, master.cuts)
        if not _defeats(v):
            cut = no_good_cut(zs, eps)
            if master.add_cut(cut):
                added.append(cut)
        else:
            for cut in _cuts_for(g, mask, v, tmin, eps, lp, factory, strengthen):
                if master.add_cut(cut):
                    added.append(cut)
            if full_systems:
                before = len(master.systems)
                n_before = [s.config for s in master.systems]
                master.manage_system(g.config_mask(v.config), it)
                if len(master.systems) == before and [s.config for s in master.systems] != n_before:
                    master.lb_floor = max(master.lb_floor, lb)
        trace.append({"iter": it, "master_obj": obj, "z*": g.sorted_arcs(v.attack), "controller_t": v.t,
                      "cuts_added": len(added), "systems_resident": len(master.systems)})
        if on_iteration:
            on_iteration(trace[-1])


def _result(factory, master, *args):
    res = MinCardResult(*args)
    res.duals = factory.psi_log
    res.master = master
    return res


def _cuts_for(g, mask, v, tmin, eps, lp, factory, strengthen):
    out = [factory.cut(mask, v.config, origin="plain")]
    if strengthen:
        c1 = strengthen_I(g, mask, v.config, v.flow, tmin, lp=lp, factory=factory, eps=eps)
        if c1 is not None:
            out.append(c1)
        c2, F = strengthen_II(g, mask, v.config, v.flow, tmin, lp=lp, factory=factory, eps=eps)
        if F.any():
            out.append(c2)
    return out


def dual_residuals(g: Grid, block: DualBlock, z, psi, M: float | None = None) -> dict:
    """Worst violations of the attacker system and of the tightening inequalities.

    The tightening inequalities are evaluated from the base variables, not from
    the split variables, so they are meaningful for systems built without them.
    """
    M = big_m(g) if M is None else M
    z = np.asarray(z, dtype=float)
    psi = np.asarray(psi, dtype=float)
    r = block.A @ psi + block.B @ z
    sys_viol = float(np.max(np.concatenate([block.lo - r, r - block.hi, block.lb - psi, psi - block.ub]),
                            initial=0.0))
    v = {k: psi[s] for k, s in block.slices.items()}
    rx = 1.0 / np.sqrt(g.x)
    dalpha = np.abs(v["alpha"][g.tails] - v["alpha"][g.heads])
    babs = np.abs(v["bhat"])
    w = v["wp"] + v["wm"]
    lhs = rx * dalpha + babs
    bigm = float(np.max(babs - M * (1.0 - z), initial=0.0))
    lv1 = float(np.max(lhs - rx * w - M * (1.0 - z), initial=0.0))
    lv2 = float(np.max(lhs - rx @ (v["p"] + v["q"]) - rx * w, initial=0.0))
    return {"system": max(sys_viol, 0.0), "bigm": max(bigm, 0.0), "lvalid1": max(lv1, 0.0),
            "lvalid2": max(lv2, 0.0)}


# -- severity ---------------------------------------------------------------------


@dataclass
class SeverityResult:
    t: float
    attack: frozenset
    configs_used: int
    optimal: bool


def feasible_configs(g: Grid, tmin: float, configs=None) -> list[np.ndarray]:
    """Configurations whose controller LP is feasible with no attack.

    Feasibility of that LP does not depend on the attack, so the others are
    defeated by every attack and can be dropped.
    """
    lp = ControllerLP(g, tmin)
    configs = all_configs(g) if configs is None else configs
    empty = np.zeros(g.m, dtype=bool)
    return [c for c in configs if lp.solve(empty, c).feasible]


def build_severity_model(g: Grid, k: int, tmin: float, *, single_config=None, tighten: bool = True,
                         t_cap: float = 1e3):
    """The severity MIP; None when no configuration is feasible at all."""
    configs = [g.config_mask(single_config)] if single_config is not None else None
    configs = feasible_configs(g, tmin, configs)
    if not configs:
        return None
    M = big_m(g)
    mb = ModelBuilder()
    z = mb.var("z", g.m, 0.0, 1.0, binary=True)
    t = mb.var("t", 1, 0.0, t_cap, obj=1.0)
    mb.rows("budget", [(z, np.ones((1, g.m)))], -INF, float(k))
    for j, c in enumerate(configs):
        b = attacker_dual_model(g, c, tmin, M, tighten=tighten)
        psi = mb.var(f"psi{j}", b.npsi, b.lb, b.ub)
        mb.rows(f"sys{j}", [(psi, b.A), (z, b.B)], b.lo, b.hi)
        mb.rows(f"val{j}", [(psi, b.w[None, :]), (t, -np.ones((1, 1)))], 0.0, INF)
    return mb.build("max"), z, t, configs


def severity_search(g: Grid, k: int, tmin: float, eps: float = 1e-3, *, single_config=None,
                    tighten: bool = True, t_cap: float = 1e3, method: str = "highs",
                    node_limit: int = 1_000_000, time_limit: float = np.inf) -> SeverityResult:
    """Largest controller overload achievable with at most ``k`` removals.

    ``t > 1`` holds exactly when a successful attack of cardinality at most
    ``k`` exists. ``single_config`` restricts the controller to one fixed
    configuration. Values at or above ``t_cap`` are reported as infinite.
    """
    if k < 1:
        raise ValueError("k: must be at least 1")
    built = build_severity_model(g, k, tmin, single_config=single_config, tighten=tighten, t_cap=t_cap)
    if built is None:
        return SeverityResult(INF, frozenset(), 0, True)
    model, z, t, configs = built
    sol, stats = solve_mip(model, method=method, node_limit=node_limit, time_limit=time_limit)
    if sol.x is None:
        raise EngineError(f"severity MIP ended with status {sol.status}")
    tv = float(sol.x[t.start])
    zs = sol.x[:g.m] > 0.5
    return SeverityResult(INF if tv >= t_cap * (1 - 1e-9) else tv, g.attack_from_mask(zs), len(configs),
                          stats.optimal)


# -- brute force ------------------------------------------------------------------


@dataclass
class BruteForceResult:
    verdict: AttackVerdict
    evaluated: int
    lp_solves: int


class AttackOracle:
    """Exact attack evaluation by LPs over every configuration."""

    def __init__(self, g: Grid, tmin: float, eps: float = 1e-3):
        self.g, self.tmin, self.eps = g, tmin, eps
        self.lp = ControllerLP(g, tmin)
        self.configs = feasible_configs(g, tmin)
        self._last = 0
        self.lp_solves = 0

    def value(self, mask) -> tuple[float, np.ndarray | None]:
        """Min over configurations of the controller overload (exact, no early exit)."""
        best, cfg = INF, None
        for c in self.configs:
            out = self.lp.solve(mask, c)
            self.lp_solves += 1
            if out.t < best:
                best, cfg = out.t, c
        return best, cfg

    def successful(self, mask) -> tuple[bool, float, np.ndarray | None]:
        """Early-exit success test; tries the last defeating configuration first."""
        order = list(range(len(self.configs)))
        if self.configs:
            order.insert(0, order.pop(self._last))
        best, cfg = INF, None
        for j in order:
            out = self.lp.solve(mask, self.configs[j])
            self.lp_solves += 1
            if out.t < best:
                best, cfg = out.t, self.configs[j]
            if not is_successful(out.t, self.eps):
                self._last = j
                return False, out.t, self.configs[j]
        return True, best, cfg


def brute_force_min_attack(g: Grid, tmin: float, kmax: int, eps: float = 1e-3, *, order: str = "lex",
                           budget: int = 5_000_000) -> BruteForceResult:
    """Smallest successful attack by exhaustive enumeration up to ``kmax`` arcs.

    ``order='lex'`` scans subsets in lexicographic canonical order,
    ``order='reverse'`` in reverse order; the cardinality found is the same.
    """
    oracle = AttackOracle(g, tmin, eps)
    total = sum(math.comb(g.m, k) for k in range(1, kmax + 1)) * max(1, len(oracle.configs))
    if total > budget:
        raise ValueError(f"brute force budget exceeded: {total} > {budget}")
    evaluated = 0
    for k in range(1, kmax + 1):
        combos = itertools.combinations(range(g.m), k)
        if order == "reverse":
            combos = reversed(list(combos))
        elif order != "lex":
            raise ValueError(f"order: unknown {order!r}")
        for combo in combos:
            mask = np.zeros(g.m, dtype=bool)
            mask[list(combo)] = True
            evaluated += 1
            ok, t, _ = oracle.successful(mask)
            if ok:
                v = AttackVerdict(g.attack_from_mask(mask), True, None, t)
                return BruteForceResult(v, evaluated, oracle.lp_solves)
    empty = np.zeros(g.m, dtype=bool)
    ok, t, cfg = oracle.successful(empty)
    v = AttackVerdict(frozenset(), ok, None if cfg is None else _config_ids(g, cfg), t)
    return BruteForceResult(v, evaluated, oracle.lp_solves)


# -- defeat certificates ------------------------------------------------------------


def cheap_certificate(g: Grid, attack, config, tmin: float):
    """Look for a partition certificate among single nodes and attack components.

    Returns ``(partition, kind)`` or None.
    """
    from .flow import verify_defeat_certificate

    keep = ~g.attack_mask(attack)
    ncomp, labels = component_labels(g, keep)
    ids = g.node_ids
    parts = []
    for c in range(ncomp):
        parts.append(frozenset(ids[k] for k in np.flatnonzero(labels == c)))
    parts += [frozenset([nid]) for nid in ids]
    for n1 in parts:
        n2 = frozenset(ids) - n1
        for kind in ("mismatch", "pmin-excess"):
            if verify_defeat_certificate(g, attack, config, (n1, n2), kind, tmin):
                return (n1, n2), kind
    return None
