"""Continuous resistance attack: smooth congestion model, exact derivatives, barrier solver.

The attacker raises arc resistances ``x`` (conductances ``y = 1/x``) within a
budget set and the injections ``b`` stay fixed. The objective is the maximum
congestion ``max |f|/u``, written smoothly as ``sum (f/u)(p - q)`` with
``(p, q)`` on the unit simplex.

The local solver works in resistance space, where the budget set is a
polytope: a primal log-barrier method with Newton steps on the exact Hessian,
fraction-to-boundary 0.995 and barrier reduction factor 0.2. The ``(p, q)``
block is linear, so it is re-optimized in closed form after every barrier
subproblem: all mass goes on the most congested arc with the sign of its flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flow import fair_reduction_congestion, power_flow, proportional_injections
from .grid import Grid, component_labels
from .laplacian import JOperator, transfer_matrix

STATUSES = ("eps-local-opt", "pd-feas", "dual-feas-only", "failed")


# -- budget set -------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetSet:
    """``{x : sum x <= B, xl <= x <= xu}``, equivalently a set of conductances."""

    xl: np.ndarray
    xu: np.ndarray
    B: float

    def __post_init__(self):
        xl = np.asarray(self.xl, dtype=float)
        xu = np.asarray(self.xu, dtype=float)
        if xl.shape != xu.shape or xl.ndim != 1:
            raise ValueError("xl, xu: must be vectors of equal length")
        if np.any(xl <= 0) or np.any(xu < xl):
            raise ValueError("xl, xu: need 0 < xl <= xu")
        if self.B < xl.sum() - 1e-12:
            raise ValueError("B: budget below sum of lower bounds, set is empty")
        object.__setattr__(self, "xl", xl)
        object.__setattr__(self, "xu", xu)
        object.__setattr__(self, "B", float(self.B))

    @property
    def m(self) -> int:
        return len(self.xl)

    @property
    def excess(self) -> float:
        return self.B - float(self.xl.sum())

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.xl - tol) and np.all(x <= self.xu + tol) and x.sum() <= self.B + tol * self.B)

    def contains_y(self, y, tol: float = 1e-9) -> bool:
        return self.contains(1.0 / np.asarray(y, dtype=float), tol)


GAMMA_UPPER = {1: 5.0, 2: 10.0, 3: 20.0}


def gamma_preset(m: int, which: int, delta_b: float) -> BudgetSet:
    """Presets with ``xl = 1`` and ``xu`` of 5, 10 or 20; ``B = m + delta_b``."""
    if which not in GAMMA_UPPER:
        raise ValueError(f"gamma preset: expected 1, 2 or 3, got {which}")
    if delta_b < 0:
        raise ValueError("delta_b: must be nonnegative")
    return BudgetSet(np.ones(m), np.full(m, GAMMA_UPPER[which]), m + float(delta_b))


def budget_set(m: int, xl: float, xu: float, delta_b: float) -> BudgetSet:
    return BudgetSet(np.full(m, float(xl)), np.full(m, float(xu)), m * float(xl) + float(delta_b))


# -- smooth model -----------------------------------------------------------------


@dataclass
class NonlinState:
    y: np.ndarray
    p: np.ndarray
    q: np.ndarray
    b: np.ndarray

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.p < -tol) or np.any(self.q < -tol):
            raise ValueError("p, q: must be nonnegative")
        if abs(self.p.sum() + self.q.sum() - 1.0) > tol:
            raise ValueError("p, q: must sum to one")


def _flows(g: Grid, y, b):
    op = JOperator(g, y)
    theta = op.grounded_solve(b)
    dth = theta[g.tails] - theta[g.heads]
    return op, dth, y * dth


def _check_balance(g: Grid, b):
    b = np.asarray(b, dtype=float)
    if b.shape != (g.n,):
        raise ValueError(f"b: expected {g.n} entries")
    ncomp, labels = component_labels(g)
    sums = np.bincount(labels, weights=b, minlength=ncomp)
    if np.any(np.abs(sums) > 1e-9 * max(1.0, np.abs(b).max())):
        raise ValueError("b: injections are not balanced")
    return b


def congestion(g: Grid, y, b) -> tuple[float, int]:
    """Maximum ``|f|/u`` and the canonical index of the first arc attaining it."""
    b = _check_balance(g, b)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("y: conductances must be positive")
    fs = power_flow(g, (), b, resistances=1.0 / y)
    r = np.abs(fs.f) / g.u
    k = int(np.argmax(r))
    return float(r[k]), k


def max_form(g: Grid, y, b) -> float:
    """Maximum of the smooth objective over the ``2m`` simplex vertices."""
    _, _, f = _flows(g, np.asarray(y, dtype=float), _check_balance(g, b))
    r = f / g.u
    return float(max(r.max(), (-r).max()))


def flow_jacobian(g: Grid, y, b) -> np.ndarray:
    """``D[e, k] = d f_e / d y_k``.

    With ``T = C^T J^{-1} C`` and angle differences ``dth``,
    ``D = diag(dth) - diag(y) T diag(dth)``. Any positive ``y`` is accepted;
    the exact ``J`` solve does not need the series scaling.
    """
    y = np.asarray(y, dtype=float)
    op, dth, _ = _flows(g, y, _check_balance(g, b))
    T = transfer_matrix(op)
    return np.diag(dth) - (y[:, None] * T) * dth[None, :]


def objective_grad_hess(g: Grid, state: NonlinState):
    """Value, gradient over ``(y, p, q)`` and Hessian blocks of ``sum (f/u)(p - q)``.

    Returns ``(value, (gy, gp, gq), {'yy', 'yp', 'yq'})``; the p/q-p/q blocks
    are zero. With ``w = (p - q)/u`` and ``s = T (w * y)``:
    ``gy = dth * (w - s)`` and ``Hyy = -(diag(w - s) T diag(dth) + transpose)``.
    """
    y = np.asarray(state.y, dtype=float)
    op, dth, f = _flows(g, y, _check_balance(g, state.b))
    T = transfer_matrix(op)
    w = (state.p - state.q) / g.u
    s = T @ (w * y)
    value = float(w @ f)
    gy = dth * (w - s)
    D = np.diag(dth) - (y[:, None] * T) * dth[None, :]
    gp = f / g.u
    A = (w - s)[:, None] * T * dth[None, :]
    Hyy = -(A + A.T)
    Hyp = D.T / g.u[None, :]
    return value, (gy, gp, -gp), {"yy": Hyy, "yp": Hyp, "yq": -Hyp}


# -- solver -----------------------------------------------------------------------


@dataclass
class SolveOptions:
    iter_limit: int = 800
    eps: float = 0.01
    mu0: float = 0.1
    mu_factor: float = 0.2
    boundary: float = 0.995
    inner_tol: float = 1e-9
    stat_tol: float = 1e-6
    x0: np.ndarray | None = None


@dataclass
class NonlinReport:
    x: np.ndarray
    max_congestion: float
    argmax_arc: int
    status: str
    iterations: int
    repaired: bool = False
    last_feasible_iter: int | None = None
    gap: float = math.inf
    injections: str = "proportional-to-pmax"
    history: list = field(default_factory=list)

    def top_arcs(self, g: Grid, k: int = 6) -> list[tuple[str, float]]:
        order = sorted(range(g.m), key=lambda j: (-self.x[j], j))[:k]
        return [(g.arcs[j].id, float(self.x[j])) for j in order]

    def to_dict(self, g: Grid) -> dict:
        return {"status": self.status, "iterations": self.iterations, "max_congestion": self.max_congestion,
                "argmax_arc": g.arcs[self.argmax_arc].id, "repaired": self.repaired,
                "last_feasible_iter": self.last_feasible_iter,
                "gap": None if not math.isfinite(self.gap) else self.gap, "injections": self.injections,
                "x": [{"arc_id": a.id, "value": float(v)} for a, v in zip(g.arcs, self.x)],
                "top_arcs": [{"arc_id": a, "value": v} for a, v in self.top_arcs(g)]}


def _vertex(f, u):
    r = f / u
    k = int(np.argmax(np.abs(r)))
    sign = 1.0 if r[k] >= 0 else -1.0
    return k, sign


def _arc_objective(g, x, b, k, sign):
    """Value, x-gradient and x-Hessian of ``sign * f_k / u_k`` at resistances ``x``."""
    y = 1.0 / x
    op, dth, f = _flows(g, y, b)
    T = transfer_matrix(op)
    w = np.zeros(g.m)
    w[k] = sign / g.u[k]
    s = T @ (w * y)
    gy = dth * (w - s)
    A = (w - s)[:, None] * T * dth[None, :]
    Hy = -(A + A.T)
    dy = -y * y
    gx = gy * dy
    Hx = dy[:, None] * Hy * dy[None, :] + np.diag(gy * 2.0 * y ** 3)
    return float(w @ f), gx, Hx, f


def _negdef_solve(H, g):
    """Newton direction for maximization with an eigenvalue shift when H is not negative definite."""
    lam, V = np.linalg.eigh(H)
    top = lam.max()
    scale = max(1.0, np.abs(lam).max())
    shift = top + 1e-8 * scale if top > -1e-8 * scale else 0.0
    d = -(V @ ((V.T @ g) / (lam - shift)))
    return d


def _interior(gamma: BudgetSet, x, margin: float = 1e-7):
    """Move ``x`` strictly inside the box and the budget by a relative ``margin``."""
    xl, xu = gamma.xl, gamma.xu
    width = xu - xl
    xs = np.clip(x, xl + margin * width, xu - margin * width)
    room = gamma.B - xs.sum()
    need = margin * max(gamma.excess, 1e-12)
    if room < need:
        ex = xs - xl - margin * width
        tot = ex.sum()
        if tot > 0:
            xs = xs - ex * min(1.0, (need - room) / tot)
    return xs


def solve_attack(g: Grid, gamma: BudgetSet, b=None, options: SolveOptions | None = None) -> NonlinReport:
    """Local maximization of the maximum congestion over the budget set.

    The start is ``x = xl`` unless ``options.x0`` is given (warm start). A
    start above the budget is handled by tightening a relaxed budget towards
    ``B``; if the limit is reached first the run ends primal infeasible with
    status ``dual-feas-only`` and is repaired. The reported congestion is
    always a fresh power-flow evaluation at the reported resistances, and is
    never below the start's value when the start is feasible.
    """
    opt = options or SolveOptions()
    b = proportional_injections(g) if b is None else _check_balance(g, b)
    if gamma.m != g.m:
        raise ValueError("gamma: size does not match the arc count")
    x0 = gamma.xl.copy() if opt.x0 is None else np.asarray(opt.x0, dtype=float).copy()
    start_feasible = gamma.contains(x0)
    start_val, start_arc = congestion(g, 1.0 / x0, b) if start_feasible else (-math.inf, 0)
    if gamma.excess <= 1e-12 or np.all(gamma.xu - gamma.xl <= 1e-12):
        v, k = congestion(g, 1.0 / gamma.xl, b)
        return NonlinReport(gamma.xl.copy(), v, k, "eps-local-opt", 0, gap=0.0, last_feasible_iter=0)

    x = np.clip(x0, gamma.xl, gamma.xu)
    B_eff = max(gamma.B, x.sum() * (1 + 1e-6) + 1e-9)
    relaxed = B_eff > gamma.B
    x = _interior(BudgetSet(gamma.xl, gamma.xu, B_eff), x)
    val0, _, _, f = _arc_objective(g, x, b, 0, 1.0)
    k, sign = _vertex(f, g.u)
    norm = max(abs(f[k]) / g.u[k], 1e-12)
    ncons = 2 * g.m + 1
    mu = opt.mu0
    it, last_feas, status = 0, None, None
    best = None  # (value, x, iteration) over feasible converged points
    history = []
    gap = math.inf
    try:
        while True:
            # inner Newton loop on the barrier subproblem for the current vertex
            while it < opt.iter_limit:
                it += 1
                val, gx, Hx, f = _arc_objective(g, x, b, k, sign)
                sl, su, sb = x - gamma.xl, gamma.xu - x, B_eff - x.sum()
                gb = gx / norm + mu * (1.0 / sl - 1.0 / su - 1.0 / sb)
                Hb = Hx / norm - mu * (np.diag(1.0 / sl ** 2 + 1.0 / su ** 2) + 1.0 / sb ** 2)
                d = _negdef_solve(Hb, gb)
                decrement = float(gb @ d)
                if decrement <= opt.inner_tol:
                    break
                amax = 1.0
                dsum = d.sum()
                with np.errstate(divide="ignore", invalid="ignore"):
                    cand = np.concatenate([np.where(d < 0, -sl / d, np.inf), np.where(d > 0, su / d, np.inf),
                                           [sb / dsum if dsum > 0 else np.inf]])
                amax = min(1.0, opt.boundary * float(cand.min()))
                phi0 = val / norm + mu * (np.log(sl).sum() + np.log(su).sum() + math.log(sb))
                a = amax
                while a > 1e-14:
                    xt = x + a * d
                    slt, sut, sbt = xt - gamma.xl, gamma.xu - xt, B_eff - xt.sum()
                    if slt.min() > 0 and sut.min() > 0 and sbt > 0:
                        vt = sign * _flows(g, 1.0 / xt, b)[2][k] / g.u[k]
                        phit = vt / norm + mu * (np.log(slt).sum() + np.log(sut).sum() + math.log(sbt))
                        if phit >= phi0 + 1e-4 * a * decrement:
                            break
                    a *= 0.5
                if a <= 1e-14:
                    break
                x = x + a * d
            # KKT measures at the end of the subproblem; stationarity is measured by
            # the Newton decrement, which is scale-free near the boundary
            val, gx, Hx, f = _arc_objective(g, x, b, k, sign)
            sl, su, sb = x - gamma.xl, gamma.xu - x, B_eff - x.sum()
            gb = gx / norm + mu * (1.0 / sl - 1.0 / su - 1.0 / sb)
            Hb = Hx / norm - mu * (np.diag(1.0 / sl ** 2 + 1.0 / su ** 2) + 1.0 / sb ** 2)
            dual_ok = float(gb @ _negdef_solve(Hb, gb)) <= opt.stat_tol
            primal_ok = not relaxed or B_eff <= gamma.B * (1 + 1e-12)
            pv = val / norm
            dv = pv + mu * ncons
            gap = (dv - pv) / abs(dv)
            cong = float(np.max(np.abs(f) / g.u))
            history.append({"iter": it, "mu": mu, "value": cong, "gap": gap, "dual_feasible": dual_ok})
            if dual_ok and primal_ok:
                last_feas = it
                if best is None or cong > best[0]:
                    best = (cong, x.copy(), it)
            k2, sign2 = _vertex(f, g.u)
            switched = abs(f[k2]) / g.u[k2] > abs(f[k]) / g.u[k] * (1 + 1e-9)
            if switched:
                k, sign = k2, sign2
            if dual_ok and primal_ok and gap <= opt.eps and not switched:
                status = "eps-local-opt"
                break
            if it >= opt.iter_limit:
                break
            if not switched:
                mu = max(mu * opt.mu_factor, 1e-14)
            if relaxed:
                B_eff = max(gamma.B, gamma.B + opt.mu_factor * (B_eff - gamma.B))
                if B_eff - gamma.B < 1e-9 * gamma.B:
                    B_eff = gamma.B + 0.0
                    relaxed = False
                    x = _interior(gamma, x)
    except np.linalg.LinAlgError:
        status = "failed" if best is None else None

    repaired = False
    if status is None:
        if best is not None:
            status = "pd-feas"
        elif x.sum() > gamma.B * (1 + 1e-12):
            status = "dual-feas-only"
        else:
            status = "failed"
    if status == "dual-feas-only":
        x = repair_budget(gamma, x)
        repaired = True
        xf = x
    elif best is not None and status in ("pd-feas", "eps-local-opt"):
        xf = x if status == "eps-local-opt" else best[1]
    else:
        xf = x
    v, karc = congestion(g, 1.0 / xf, b)
    if start_feasible and start_val > v:
        xf, v, karc = x0, start_val, start_arc
    return NonlinReport(np.asarray(xf, dtype=float).copy(), v, karc, status, it, repaired=repaired,
                        last_feasible_iter=last_feas, gap=gap, history=history)


def repair_budget(gamma: BudgetSet, x) -> np.ndarray:
    """Scale the excess ``x - xl`` uniformly so that ``sum x <= B``."""
    x = np.clip(np.asarray(x, dtype=float), gamma.xl, gamma.xu)
    total = x.sum()
    if total <= gamma.B:
        return x
    ex = x - gamma.xl
    return gamma.xl + ex * (gamma.excess / ex.sum())


def sweep_budgets(g: Grid, which: int, deltas, b=None, options: SolveOptions | None = None,
                  warm_start: bool = True) -> list[tuple[float, NonlinReport]]:
    """Solve for increasing excess budgets, warm-starting each from the previous solution."""
    out, prev = [], None
    base = options or SolveOptions()
    for db in sorted(deltas):
        gamma = gamma_preset(g.m, which, db)
        opt = SolveOptions(**{**base.__dict__, "x0": prev.x if (warm_start and prev is not None) else None})
        rep = solve_attack(g, gamma, b, opt)
        out.append((db, rep))
        prev = rep
    return out


# -- analyses ---------------------------------------------------------------------


def top_arcs_by_resistance(x, k: int) -> list[int]:
    x = np.asarray(x, dtype=float)
    return sorted(range(len(x)), key=lambda j: (-x[j], j))[:k]


def impact_analysis(g: Grid, report: NonlinReport, topk: int = 3, shed: float = 0.0) -> float:
    """Congestion after deleting the ``topk`` highest-resistance arcs, other arcs at original resistance."""
    if not 0 <= topk <= g.m:
        raise ValueError("topk: out of range")
    removed = frozenset(g.arcs[j].id for j in top_arcs_by_resistance(report.x, topk))
    return fair_reduction_congestion(g, g.x, removed, shed).t


def solution_histogram(x, edges) -> list[tuple[float, float, int]]:
    """Arc counts per bin ``[lo, hi)``; the last bin is closed."""
    edges = np.asarray(edges, dtype=float)
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges: must be strictly increasing")
    counts, _ = np.histogram(np.asarray(x, dtype=float), bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]


def histogram_csv(rows) -> str:
    lines = ["bin_low,bin_high,count"]
    lines += [f"{lo!r},{hi!r},{c}" for lo, hi, c in rows]
    return "\n".join(lines) + "\n"


def limit_experiment(g: Grid, S, eps_seq, b=None) -> list[dict]:
    """Flows as the conductance of the arcs in ``S`` goes to zero, against ``S`` removed.

    Columns: ``flow_S = max |f_st|`` over ``S``, ``flow_dev = max |f_uv - fbar_uv|`` and
    ``angle_dev`` for the arc angle differences, over arcs outside ``S``.
    """
    S = frozenset(S)
    b = proportional_injections(g) if b is None else _check_balance(g, b)
    mask = g.attack_mask(S)
    ncomp, _ = component_labels(g, ~mask)
    if ncomp > 1:
        raise ValueError("S: removal disconnects the network")
    ref = power_flow(g, S, b)
    dref = ref.theta[g.tails] - ref.theta[g.heads]
    rows = []
    for e in eps_seq:
        y = 1.0 / g.x
        y = np.where(mask, float(e), y)
        fs = power_flow(g, (), b, resistances=1.0 / y)
        d = fs.theta[g.tails] - fs.theta[g.heads]
        keep = ~mask
        rows.append({"eps": float(e),
                     "flow_S": float(np.abs(fs.f[mask]).max(initial=0.0)),
                     "flow_dev": float(np.abs(fs.f[keep] - ref.f[keep]).max(initial=0.0)),
                     "angle_dev": float(np.abs(d[keep] - dref[keep]).max(initial=0.0))})
    return rows


# -- comparison -------------------------------------------------------------------


@dataclass
class ComparisonRow:
    """One capacity scale of the model comparison.

    ``mip_cong`` is the controller's min-max overload under the severity
    attack; ``mip_removal_cong`` is the congestion after deleting that attack
    with the proportional dispatch kept fixed.
    """

    sigma: float
    mip_cong: float
    mip_attack: list
    mip_removal_cong: float
    nl_cong: float
    nl_top: list
    impact: float
    i10: float
    c10: float
    nl_status: str
    mip_optimal: bool = True


def terminal_robustness(g: Grid, k: int) -> list[str]:
    """Generator/demand nodes that some removal of ``k`` arcs can cut off from the rest."""
    import networkx as nx

    G = nx.MultiGraph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from(zip(g.tails.tolist(), g.heads.tolist()))
    weak = []
    for v in sorted(set(g.gens.tolist()) | set(g.dems.tolist())):
        if G.degree(v) <= k:
            weak.append(g.nodes[v].id)
    simple = nx.Graph()
    for a, c in zip(g.tails.tolist(), g.heads.tolist()):
        w = simple.get_edge_data(a, c, {"capacity": 0})["capacity"]
        simple.add_edge(a, c, capacity=w + 1)
    terms = sorted(set(g.gens.tolist()) | set(g.dems.tolist()))
    for v in terms:
        for w_ in terms:
            if w_ <= v or g.nodes[v].id in weak:
                continue
            if nx.maximum_flow_value(simple, v, w_) <= k:
                weak.append(g.nodes[v].id)
                break
    return weak


def compare_models(g: Grid, k: int, gamma: BudgetSet, sigmas, tmin: float = 1.0, *,
                   options: SolveOptions | None = None, eps: float = 1e-3, log=None,
                   severity_node_limit: int = 1_000_000, tighten: bool = False) -> list[ComparisonRow]:
    """Severity attack versus nonlinear attack over capacity scales ``sigma``.

    For every scale the severity search (single configuration, all
    generators) proposes ``k`` arcs. Attacks found at any scale are pooled and
    re-evaluated with the controller LP at every scale; each row keeps the
    worst one. Each evaluation is a valid lower bound on the severity, so
    pooling only sharpens node-limited searches, and since the controller
    value cannot rise with capacity the pooled column is nonincreasing in
    ``sigma``. The nonlinear model is then solved per scale and its three
    highest resistances removed for the impact columns; 10% demand reduction
    columns come from the fair-reduction LP.
    """
    from .flow import ControllerLP
    from .mincard import severity_search

    weak = terminal_robustness(g, k)
    if weak and log is not None:
        log(f"warning: terminals {weak} can be cut off by {k} arc removals")
    b = proportional_injections(g)
    sigmas = [float(s) for s in sigmas]
    scaled = [g.with_capacities(g.u * s) for s in sigmas]
    found, proven = [], []
    for gs in scaled:
        sev = severity_search(gs, k, tmin, eps, single_config=gs.gen_ids, tighten=tighten,
                              node_limit=severity_node_limit)
        found.append(gs.attack_mask(sev.attack))
        proven.append(sev.optimal)
    pool = []
    for mask in found:
        if not any(np.array_equal(mask, q) for q in pool):
            pool.append(mask)
    everyone = np.ones(len(g.gens), dtype=bool)
    rows = []
    for j, (sigma, gs) in enumerate(zip(sigmas, scaled)):
        lp = ControllerLP(gs, tmin)
        own = lp.solve(found[j], everyone).t
        best_t, best = own, found[j]
        for mask in pool:
            t = lp.solve(mask, everyone).t
            if t > best_t + 1e-9:
                best_t, best = t, mask
        attack = gs.attack_from_mask(best)
        removal = fair_reduction_congestion(gs, gs.x, attack, 0.0).t
        rep = solve_attack(gs, gamma, b, options)
        top3 = frozenset(gs.arcs[i].id for i in top_arcs_by_resistance(rep.x, 3))
        impact = fair_reduction_congestion(gs, gs.x, top3, 0.0).t
        i10 = fair_reduction_congestion(gs, gs.x, top3, 0.1).t
        c10 = fair_reduction_congestion(gs, rep.x, (), 0.1).t
        rows.append(ComparisonRow(sigma, best_t, gs.sorted_arcs(attack), removal, rep.max_congestion,
                                  rep.top_arcs(gs), impact, i10, c10, rep.status, proven[j]))
        if log is not None:
            log(f"sigma {sigma:g}: severity {best_t:.4f}, nonlinear {rep.max_congestion:.4f} ({rep.status})")
    return rows
