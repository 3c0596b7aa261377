"""DC power flow, throughput and the controller's congestion linear programs."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .engine import INF, LpSession, ModelBuilder, branch_and_bound, solve_lp
from .grid import Grid, component_labels
from .laplacian import JOperator
from .numerics import POLICY


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class FlowState:
    """Flows per arc, angles per node, dispatch per generator, served demand per demand node."""

    f: np.ndarray
    theta: np.ndarray
    P: np.ndarray
    D: np.ndarray

    def injections(self, g: Grid) -> np.ndarray:
        return injection_vector(g, self.P, self.D)


@dataclass(frozen=True)
class CongestionOutcome:
    t: float
    flow: FlowState | None
    feasible: bool
    y: np.ndarray | None = None


def injection_vector(g: Grid, P, D) -> np.ndarray:
    b = np.zeros(g.n)
    np.add.at(b, g.gens, np.asarray(P, dtype=float))
    np.add.at(b, g.dems, -np.asarray(D, dtype=float))
    return b


def proportional_injections(g: Grid) -> np.ndarray:
    """Nominal demands served in full; generators dispatched in proportion to ``pmax``."""
    dn = g.dnom
    share = g.pmax / g.pmax.sum()
    return injection_vector(g, share * dn.sum(), dn)


def _as_mask(g: Grid, attack) -> np.ndarray:
    if isinstance(attack, np.ndarray) and attack.dtype == bool:
        return attack
    return g.attack_mask(attack)


def power_flow(g: Grid, attack: Iterable[str] | np.ndarray, injections, *, reference: str = "lowest",
               resistances=None) -> FlowState:
    """Unique DC flow for ``injections`` on the network without the attacked arcs.

    Angles are zero at the reference node of every component (lowest index by
    default, ``reference='highest'`` for the alternative grounding).
    """
    b = np.asarray(injections, dtype=float)
    if b.shape != (g.n,):
        raise FlowError(f"injections: expected {g.n} entries")
    x = g.x if resistances is None else np.asarray(resistances, dtype=float)
    keep = ~_as_mask(g, attack)
    ncomp, labels = component_labels(g, keep)
    sums = np.bincount(labels, weights=b, minlength=ncomp)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    bad = np.flatnonzero(np.abs(sums) > POLICY.balance_tol * scale)
    if len(bad):
        raise FlowError(f"injections: component {int(bad[0])} is unbalanced by {sums[bad[0]]:.3g}")
    theta = _grounded_angles(g, 1.0 / x, keep, b, labels, reference)
    f = np.where(keep, (theta[g.tails] - theta[g.heads]) / x, 0.0)
    P = b[g.gens].copy()
    D = -b[g.dems].copy()
    return FlowState(f=f, theta=theta, P=P, D=D)


def _grounded_angles(g, y, keep, b, labels, reference):
    return JOperator(g, y, keep, reference=reference).grounded_solve(b)


def throughput(g: Grid, flow: FlowState) -> float:
    total = float(g.dnom.sum())
    if total <= 0:
        raise FlowError("throughput: total nominal demand is zero")
    return float(np.sum(flow.D)) / total


def congestion_of(g: Grid, flow: FlowState, keep=None) -> float:
    r = np.abs(flow.f) / g.u
    if keep is not None:
        r = r[keep]
    return float(r.max(initial=0.0))


# -- controller LPs ----------------------------------------------------------------


def _rows_eye(k, idx, size):
    return sp.csr_matrix((np.ones(len(idx)), (np.arange(len(idx)), idx)), shape=(k, size))


class ControllerLP:
    """The controller's min-max overload program, loaded once and re-solved.

    Every attack, configuration and forced-zero set is expressed through
    variable bounds, so successive solves reuse the HiGHS basis.

    Per arc the model carries three switch variables: an Ohm slack ``s`` (free
    on attacked arcs, which drops Ohm's law), an overload slack ``v`` (free on
    attacked arcs, which drops ``u t >= |f|``) and a penalty slack ``w`` (free
    on surviving arcs, which drops ``t >= 1 + |f|``). With ``removed=True``
    attacked arcs instead carry zero flow and pay no penalty.
    """

    def __init__(self, g: Grid, tmin: float, *, resistances=None):
        if not 0.0 <= tmin <= 1.0:
            raise ValueError("tmin: must lie in [0, 1]")
        self.g = g
        self.tmin = tmin
        m, n, G, Dn = g.m, g.n, len(g.gens), len(g.dems)
        x = g.x if resistances is None else np.asarray(resistances, dtype=float)
        mb = ModelBuilder()
        self.f = mb.var("f", m, -INF, INF)
        self.theta = mb.var("theta", n, -INF, INF)
        self.P = mb.var("P", G, 0.0, g.pmax)
        self.D = mb.var("D", Dn, 0.0, g.dnom)
        self.t = mb.var("t", 1, 0.0, INF, obj=1.0)
        self.y = mb.var("y", G, 0.0, 1.0)
        self.s = mb.var("s", m, 0.0, 0.0)
        self.v = mb.var("v", m, 0.0, 0.0)
        self.w = mb.var("w", m, 0.0, INF)
        N = g.incidence()
        I = sp.identity(m, format="csr")
        Eg = sp.csr_matrix((np.ones(G), (g.gens, np.arange(G))), shape=(n, G))
        Ed = sp.csr_matrix((np.ones(Dn), (g.dems, np.arange(Dn))), shape=(n, Dn))
        uu = g.u[:, None]
        one = np.ones((m, 1))
        mb.rows("balance", [(self.f, N), (self.P, -Eg), (self.D, Ed)], 0.0, 0.0)
        mb.rows("ohm", [(self.theta, N.T), (self.f, -sp.diags(x)), (self.s, I)], 0.0, 0.0)
        mb.rows("over_lo", [(self.t, uu), (self.f, -I), (self.v, I)], 0.0, INF)
        mb.rows("over_hi", [(self.t, uu), (self.f, I), (self.v, I)], 0.0, INF)
        mb.rows("pen_lo", [(self.t, one), (self.f, -I), (self.w, I)], 1.0, INF)
        mb.rows("pen_hi", [(self.t, one), (self.f, I), (self.w, I)], 1.0, INF)
        IG = sp.identity(G, format="csr")
        mb.rows("pmin", [(self.P, IG), (self.y, -sp.diags(g.pmin))], 0.0, INF)
        mb.rows("pmax", [(self.P, IG), (self.y, -sp.diags(g.pmax))], -INF, 0.0)
        self.served_row = mb.rows("served", [(self.D, np.ones((1, Dn)))], tmin * float(g.dnom.sum()), INF).start
        self.groups = mb.groups
        self.model = mb.build("min")
        self.session = LpSession(self.model)
        self.solves = 0

    def set_tmin(self, tmin: float):
        if not 0.0 <= tmin <= 1.0:
            raise ValueError("tmin: must lie in [0, 1]")
        self.tmin = tmin
        self.session.set_row_bounds([self.served_row], tmin * float(self.g.dnom.sum()), INF)

    def _configure(self, attack_mask, forced_zero, removed):
        m = self.g.m
        att = np.asarray(attack_mask, dtype=bool)
        fz = np.zeros(m, bool) if forced_zero is None else np.asarray(forced_zero, dtype=bool)
        zero_f = fz | (att & removed)
        ss = self.session
        ss.set_bounds(self.f.idx(), np.where(zero_f, 0.0, -INF), np.where(zero_f, 0.0, INF))
        ss.set_bounds(self.s.idx(), np.where(att, -INF, 0.0), np.where(att, INF, 0.0))
        ss.set_bounds(self.v.idx(), 0.0, np.where(att, INF, 0.0))
        ss.set_bounds(self.w.idx(), 0.0, np.where(att & ~removed, 0.0, INF))

    def solve(self, attack_mask, config_mask=None, *, forced_zero=None, removed: bool = False,
              method: str = "bnb") -> CongestionOutcome:
        """Solve for one configuration, or over all configurations when ``config_mask`` is None."""
        self._configure(attack_mask, forced_zero, removed)
        yi = self.y.idx()
        if config_mask is not None:
            cm = np.asarray(config_mask, dtype=float)
            self.session.set_bounds(yi, cm, cm)
            sol = self.session.solve()
            self.solves += 1
            return self._outcome(sol, np.asarray(config_mask, dtype=bool))
        self.session.set_bounds(yi, 0.0, 1.0)
        if method == "enumerate":
            return self._enumerate()
        sol, stats = branch_and_bound(self.session, yi)
        self.solves += stats.lp_solves
        if not sol.optimal:
            return CongestionOutcome(t=INF, flow=None, feasible=False, y=None)
        return self._outcome(sol, np.round(sol.x[self.y.slice]).astype(bool))

    def _enumerate(self):
        G = len(self.g.gens)
        best = CongestionOutcome(t=INF, flow=None, feasible=False, y=None)
        for bits in range(2 ** G):
            cm = np.array([(bits >> j) & 1 for j in range(G)], dtype=bool)
            self.session.set_bounds(self.y.idx(), cm.astype(float), cm.astype(float))
            out = self._outcome(self.session.solve(), cm)
            self.solves += 1
            if out.t < best.t:
                best = out
        self.session.set_bounds(self.y.idx(), 0.0, 1.0)
        return best

    def _outcome(self, sol, y):
        if not sol.optimal:
            return CongestionOutcome(t=INF, flow=None, feasible=False, y=y)
        x = sol.x
        flow = FlowState(f=x[self.f.slice].copy(), theta=x[self.theta.slice].copy(),
                         P=x[self.P.slice].copy(), D=x[self.D.slice].copy())
        return CongestionOutcome(t=float(x[self.t.start]), flow=flow, feasible=True, y=y)


def min_congestion(g: Grid, attack, config, tmin: float, *, removed: bool = False,
                   forced_zero=None, resistances=None) -> CongestionOutcome:
    """Smallest uniform overload ``t`` achievable by configuration ``config``.

    Attacked arcs are not forced to zero flow; each unit of flow on them adds
    to a penalty ``t >= 1 + |f|``. ``removed=True`` deletes them instead. An
    infeasible LP is reported as ``t = inf`` with ``feasible = False``.
    """
    att = _as_mask(g, attack)
    cm = config if isinstance(config, np.ndarray) and config.dtype == bool else g.config_mask(config)
    fz = None if forced_zero is None else _as_mask(g, forced_zero)
    lp = ControllerLP(g, tmin, resistances=resistances)
    return lp.solve(att, cm, forced_zero=fz, removed=removed)


def fair_reduction_congestion(g: Grid, resistances, attack, shed: float, dispatch=None) -> CongestionOutcome:
    """Min congestion when total served demand may drop to ``(1 - shed)`` of nominal.

    Generators follow the served total: ``P_i = share_i * sum(D)`` with
    shares proportional to ``dispatch`` (``pmax`` by default). Attacked arcs
    are removed.
    """
    if not 0.0 <= shed < 1.0:
        raise ValueError("shed: must lie in [0, 1)")
    x = np.asarray(resistances, dtype=float)
    att = _as_mask(g, attack)
    m, n, G, Dn = g.m, g.n, len(g.gens), len(g.dems)
    share = np.asarray(g.pmax if dispatch is None else dispatch, dtype=float)
    share = share / share.sum()
    surv = np.flatnonzero(~att)
    mb = ModelBuilder()
    f = mb.var("f", m, np.where(att, 0.0, -INF), np.where(att, 0.0, INF))
    th = mb.var("theta", n, -INF, INF)
    D = mb.var("D", Dn, 0.0, g.dnom)
    t = mb.var("t", 1, 0.0, INF, obj=1.0)
    N = g.incidence()
    Eg = sp.csr_matrix((share, (g.gens, np.zeros(G, int))), shape=(n, 1))
    Ed = sp.csr_matrix((np.ones(Dn), (g.dems, np.arange(Dn))), shape=(n, Dn))
    mb.rows("balance", [(f, N), (D, Ed - Eg @ np.ones((1, Dn)))], 0.0, 0.0)
    ks = len(surv)
    if ks:
        mb.rows("ohm", [(th, N[:, surv].T), (f, -sp.csr_matrix((x[surv], (np.arange(ks), surv)), shape=(ks, m)))],
                0.0, 0.0)
        sel = _rows_eye(ks, surv, m)
        uu = g.u[surv][:, None]
        mb.rows("over_lo", [(t, uu), (f, -sel)], 0.0, INF)
        mb.rows("over_hi", [(t, uu), (f, sel)], 0.0, INF)
    mb.rows("served", [(D, np.ones((1, Dn)))], (1.0 - shed) * float(g.dnom.sum()), INF)
    sol = solve_lp(mb.build("min"))
    if not sol.optimal:
        return CongestionOutcome(t=INF, flow=None, feasible=False)
    xs = sol.x
    Dv = xs[D.slice].copy()
    flow = FlowState(f=xs[f.slice].copy(), theta=xs[th.slice].copy(), P=share * Dv.sum(), D=Dv)
    return CongestionOutcome(t=float(xs[t.start]), flow=flow, feasible=True)


# -- defeat certificates -----------------------------------------------------------


def verify_defeat_certificate(g: Grid, attack, config, partition, kind: str, tmin: float) -> bool:
    """Check a partition certificate that ``attack`` defeats ``config``.

    ``kind='mismatch'``: the demand that must cross the cut exceeds the
    surviving cut capacity. ``kind='pmin-excess'``: the minimum output of the
    operated generators inside ``N1`` exceeds the demand inside ``N1`` plus the
    surviving capacity of arcs joining ``N1`` to the rest. Surviving arcs are
    counted in both orientations because flows are signed.
    """
    n1, n2 = (frozenset(s) for s in partition)
    ids = set(g.node_ids)
    if n1 & n2 or (n1 | n2) != ids:
        raise ValueError("partition: classes must be disjoint and cover every node")
    keep = ~_as_mask(g, attack)
    cm = g.config_mask(config)
    side = np.array([nd.id in n1 for nd in g.nodes])
    cross = keep & (side[g.tails] != side[g.heads])
    cap = float(g.u[cross].sum())
    gin = side[g.gens]
    din = side[g.dems]
    dn = g.dnom
    if kind == "mismatch":
        d1, d2 = dn[din].sum(), dn[~din].sum()
        p1 = g.pmax[cm & gin].sum()
        p2 = g.pmax[cm & ~gin].sum()
        lhs = tmin * dn.sum() - min(d1, p1) - min(d2, p2)
        return bool(lhs > cap)
    if kind == "pmin-excess":
        return bool(dn[din].sum() + cap < g.pmin[cm & gin].sum())
    raise ValueError(f"kind: unknown certificate kind {kind!r}")


def flow_to_csv(g: Grid, flow: FlowState) -> tuple[str, str]:
    """CSV text for arc flows (``arc_id,f``) and node angles (``node_id,theta``)."""
    a, b = io.StringIO(), io.StringIO()
    wa, wb = csv.writer(a, lineterminator="\n"), csv.writer(b, lineterminator="\n")
    wa.writerow(["arc_id", "f"])
    for arc, v in zip(g.arcs, flow.f):
        wa.writerow([arc.id, repr(float(v))])
    wb.writerow(["node_id", "theta"])
    for nd, v in zip(g.nodes, flow.theta):
        wb.writerow([nd.id, repr(float(v))])
    return a.getvalue(), b.getvalue()
