"""LP/MIP container, solvers and fixed-format MPS exchange.

Linear programs are solved with the HiGHS dual simplex through ``highspy``.
Binary programs are solved by a deterministic best-first branch-and-bound on
top of a warm-started LP session, or optionally handed to HiGHS' MIP solver.

Row convention: ``row_lo <= A x <= row_hi`` (equal bounds give an equality,
infinite bounds give one-sided rows). Dual values are reported as the
sensitivity of the optimal objective, in the model's own sense, to the active
side of each row: ``d obj / d rhs``.
"""

from __future__ import annotations

import heapq
import io
import time
from dataclasses import dataclass, field

import highspy
import numpy as np
import scipy.sparse as sp

from .numerics import POLICY

INF = np.inf


class EngineError(RuntimeError):
    """Numerical breakdown or malformed model; carries a diagnostic dict."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass
class LpModel:
    c: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    sense: str = "min"
    obj_const: float = 0.0
    var_names: list | None = None
    row_names: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.row_lo = np.asarray(self.row_lo, dtype=float)
        self.row_hi = np.asarray(self.row_hi, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)

    @property
    def nvars(self) -> int:
        return len(self.c)

    @property
    def nrows(self) -> int:
        return self.A.shape[0]

    def validate(self):
        n, r = self.nvars, self.nrows
        if self.A.shape != (r, n) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise EngineError("model dimensions are inconsistent")
        if self.row_lo.shape != (r,) or self.row_hi.shape != (r,):
            raise EngineError("row bound dimensions are inconsistent")
        if not np.all(np.isfinite(self.A.data)) or not np.all(np.isfinite(self.c)):
            raise EngineError("non-finite coefficient")
        if np.any(self.lb > self.ub) or np.any(self.row_lo > self.row_hi):
            raise EngineError("lower bound above upper bound")
        if self.sense not in ("min", "max"):
            raise EngineError(f"unknown sense {self.sense!r}")
        for names in (self.var_names, self.row_names):
            if names is not None and len(set(names)) != len(names):
                raise EngineError("names must be unique")


@dataclass
class MipModel(LpModel):
    binary: np.ndarray | None = None

    def __post_init__(self):
        super().__post_init__()
        self.binary = (np.zeros(self.nvars, dtype=bool) if self.binary is None
                       else np.asarray(self.binary, dtype=bool))

    def validate(self):
        super().validate()
        if np.any(self.lb[self.binary] < 0) or np.any(self.ub[self.binary] > 1):
            raise EngineError("binary variables must have bounds within [0, 1]")

    def relaxation(self) -> LpModel:
        return LpModel(self.c, self.A, self.row_lo, self.row_hi, self.lb, self.ub, self.sense,
                       self.obj_const, self.var_names, self.row_names)


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    obj: float = np.nan
    duals: np.ndarray | None = None
    lb_duals: np.ndarray | None = None
    ub_duals: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class BranchStats:
    nodes: int = 0
    lp_solves: int = 0
    incumbents: list = field(default_factory=list)
    best_bound: float = np.nan
    optimal: bool = False
    limit_hit: str | None = None


# -- builder ----------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    name: str
    start: int
    size: int

    @property
    def slice(self) -> slice:
        return slice(self.start, self.start + self.size)

    def idx(self, k=None):
        return np.arange(self.start, self.start + self.size) if k is None else self.start + np.asarray(k)


class ModelBuilder:
    """Assemble an LP/MIP from named variable blocks and row groups."""

    def __init__(self):
        self.blocks: list[Block] = []
        self._lb, self._ub, self._c, self._bin = [], [], [], []
        self._rows: list[sp.csr_matrix] = []
        self._lo, self._hi = [], []
        self._row_names: list[str] = []
        self.groups: dict[str, slice] = {}
        self.nvars = 0
        self.nrows = 0

    def var(self, name, size, lb=0.0, ub=INF, obj=0.0, binary=False) -> Block:
        b = Block(name, self.nvars, int(size))
        self.blocks.append(b)
        self._lb.append(np.broadcast_to(np.asarray(lb, float), (size,)).copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, float), (size,)).copy())
        self._c.append(np.broadcast_to(np.asarray(obj, float), (size,)).copy())
        self._bin.append(np.full(size, bool(binary)))
        self.nvars += int(size)
        return b

    def rows(self, name, terms, lo=-INF, hi=INF):
        """Add a group of rows ``lo <= sum_k M_k x[block_k] <= hi``.

        ``terms`` is a list of ``(Block, matrix)`` pairs, all with the same
        number of rows.
        """
        nr = None
        parts = []
        for blk, M in terms:
            M = sp.csr_matrix(np.atleast_2d(M) if not sp.issparse(M) else M, dtype=float)
            if M.shape[1] != blk.size:
                raise EngineError(f"rows {name}: block {blk.name} expects {blk.size} columns, got {M.shape[1]}")
            nr = M.shape[0] if nr is None else nr
            if M.shape[0] != nr:
                raise EngineError(f"rows {name}: inconsistent row counts")
            parts.append((blk, M.tocoo()))
        if nr is None or nr == 0:
            return slice(self.nrows, self.nrows)
        r, c, v = [], [], []
        for blk, M in parts:
            r.append(M.row)
            c.append(M.col + blk.start)
            v.append(M.data)
        self._rows.append((np.concatenate(r), np.concatenate(c), np.concatenate(v), nr))
        self._lo.append(np.broadcast_to(np.asarray(lo, float), (nr,)).copy())
        self._hi.append(np.broadcast_to(np.asarray(hi, float), (nr,)).copy())
        self._row_names += [f"{name}[{k}]" for k in range(nr)]
        sl = slice(self.nrows, self.nrows + nr)
        self.groups[name] = sl
        self.nrows += nr
        return sl

    def build(self, sense="min", obj_const=0.0):
        rr, cc, vv = [], [], []
        off = 0
        for r, c, v, nr in self._rows:
            rr.append(r + off)
            cc.append(c)
            vv.append(v)
            off += nr
        if rr:
            A = sp.csr_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))),
                              shape=(self.nrows, self.nvars))
        else:
            A = sp.csr_matrix((0, self.nvars))
        cat = lambda xs, dt=float: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
        var_names = []
        for b in self.blocks:
            var_names += [f"{b.name}[{k}]" for k in range(b.size)]
        binary = cat(self._bin, bool)
        kw = dict(c=cat(self._c), A=A, row_lo=cat(self._lo), row_hi=cat(self._hi), lb=cat(self._lb),
                  ub=cat(self._ub), sense=sense, obj_const=obj_const, var_names=var_names,
                  row_names=list(self._row_names))
        if binary.any():
            return MipModel(binary=binary, **kw)
        return LpModel(**kw)


# -- LP ---------------------------------------------------------------------------


def _to_highs_lp(m: LpModel) -> highspy.HighsLp:
    A = m.A.tocsc()
    lp = highspy.HighsLp()
    lp.num_col_ = m.nvars
    lp.num_row_ = m.nrows
    hinf = highspy.kHighsInf
    clip = lambda v: np.clip(v, -hinf, hinf)  # noqa: E731
    lp.col_cost_ = m.c.astype(float)
    lp.col_lower_ = clip(m.lb)
    lp.col_upper_ = clip(m.ub)
    lp.row_lower_ = clip(m.row_lo)
    lp.row_upper_ = clip(m.row_hi)
    lp.offset_ = float(m.obj_const)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    lp.a_matrix_.num_col_ = m.nvars
    lp.a_matrix_.num_row_ = m.nrows
    if m.sense == "max":
        lp.sense_ = highspy.ObjSense.kMaximize
    return lp


class LpSession:
    """A model loaded into one HiGHS instance for repeated warm-started solves.

    Bounds and rows may be changed between solves; the session keeps its own
    copy of the current bounds for certificate checks.
    """

    def __init__(self, m: LpModel, *, tight: bool = False):
        m.validate()
        self.model = LpModel(m.c, m.A, m.row_lo.copy(), m.row_hi.copy(), m.lb.copy(), m.ub.copy(),
                             m.sense, m.obj_const, m.var_names, m.row_names)
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("simplex_strategy", 1)
        if tight:
            self._tighten()
        self.tight = tight
        self.h.passModel(_to_highs_lp(self.model))

    def _tighten(self):
        self.h.setOptionValue("primal_feasibility_tolerance", 1e-10)
        self.h.setOptionValue("dual_feasibility_tolerance", 1e-10)

    def set_bounds(self, idx, lb, ub):
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int32))
        lb = np.broadcast_to(np.asarray(lb, float), idx.shape).copy()
        ub = np.broadcast_to(np.asarray(ub, float), idx.shape).copy()
        self.model.lb[idx] = lb
        self.model.ub[idx] = ub
        hinf = highspy.kHighsInf
        self.h.changeColsBounds(len(idx), idx, np.clip(lb, -hinf, hinf), np.clip(ub, -hinf, hinf))

    def set_row_bounds(self, idx, lo, hi):
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int32))
        lo = np.broadcast_to(np.asarray(lo, float), idx.shape).copy()
        hi = np.broadcast_to(np.asarray(hi, float), idx.shape).copy()
        self.model.row_lo[idx] = lo
        self.model.row_hi[idx] = hi
        hinf = highspy.kHighsInf
        self.h.changeRowsBounds(len(idx), idx, np.clip(lo, -hinf, hinf), np.clip(hi, -hinf, hinf))

    def add_rows(self, A, lo, hi):
        A = sp.csr_matrix(A, dtype=float)
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        hinf = highspy.kHighsInf
        self.h.addRows(A.shape[0], np.clip(lo, -hinf, hinf), np.clip(hi, -hinf, hinf), A.nnz,
                       A.indptr.astype(np.int32), A.indices.astype(np.int32), A.data)
        m = self.model
        m.A = sp.vstack([m.A, A]).tocsr()
        m.row_lo = np.concatenate([m.row_lo, lo])
        m.row_hi = np.concatenate([m.row_hi, hi])
        if m.row_names is not None:
            m.row_names = m.row_names + [f"extra[{k}]" for k in range(len(m.row_names), m.A.shape[0])]

    def delete_rows(self, idx):
        idx = np.sort(np.atleast_1d(np.asarray(idx, dtype=np.int32)))
        self.h.deleteRows(len(idx), idx)
        m = self.model
        keep = np.ones(m.nrows, bool)
        keep[idx] = False
        m.A = m.A[keep]
        m.row_lo, m.row_hi = m.row_lo[keep], m.row_hi[keep]
        if m.row_names is not None:
            m.row_names = [r for r, k in zip(m.row_names, keep) if k]

    def solve(self, *, check: bool = True) -> LpSolution:
        self.h.run()
        st = self.h.getModelStatus()
        if st == highspy.HighsModelStatus.kInfeasible:
            return LpSolution("infeasible")
        if st in (highspy.HighsModelStatus.kUnbounded, highspy.HighsModelStatus.kUnboundedOrInfeasible):
            if st == highspy.HighsModelStatus.kUnboundedOrInfeasible:
                return self._resolve_ambiguous()
            return LpSolution("unbounded")
        if st != highspy.HighsModelStatus.kOptimal:
            if not self.tight:
                self._tighten()
                self.tight = True
                self.h.clearSolver()
                return self.solve(check=check)
            raise EngineError(f"LP solve failed with status {self.h.modelStatusToString(st)}",
                              {"cond_hint": _cond_hint(self.model)})
        s = self.h.getSolution()
        x = np.array(s.col_value)
        sol = LpSolution("optimal", x=x, obj=float(self.model.c @ x) + self.model.obj_const,
                         duals=np.array(s.row_dual), lb_duals=None, ub_duals=None,
                         info={"iterations": int(self.h.getInfo().simplex_iteration_count)})
        cd = np.array(s.col_dual)
        basis = self.h.getBasis()
        at_upper = np.array([st_ == highspy.HighsBasisStatus.kUpper for st_ in basis.col_status]) \
            if self.model.nvars else np.zeros(0, bool)
        sol.lb_duals = np.where(at_upper, 0.0, cd)
        sol.ub_duals = np.where(at_upper, cd, 0.0)
        if check:
            resid, gap = lp_certificate_residuals(self.model, sol)
            sol.info.update(residual=resid, gap=gap)
            rscale = max(1.0, float(np.abs(self.model.row_hi[np.isfinite(self.model.row_hi)]).max(initial=1.0)),
                         float(np.abs(self.model.row_lo[np.isfinite(self.model.row_lo)]).max(initial=1.0)))
            if resid > POLICY.feas_tol * rscale or gap > POLICY.dual_gap_tol * (1.0 + abs(sol.obj)):
                if not self.tight:
                    self._tighten()
                    self.tight = True
                    self.h.clearSolver()
                    return self.solve(check=check)
                raise EngineError("LP certificate check failed", {"residual": resid, "gap": gap,
                                                                  "cond_hint": _cond_hint(self.model)})
        return sol

    def _resolve_ambiguous(self) -> LpSolution:
        self.h.setOptionValue("presolve", "off")
        self.h.clearSolver()
        self.h.run()
        self.h.setOptionValue("presolve", "choose")
        st = self.h.getModelStatus()
        if st == highspy.HighsModelStatus.kInfeasible:
            return LpSolution("infeasible")
        if st == highspy.HighsModelStatus.kUnbounded:
            return LpSolution("unbounded")
        return self.solve()


def solve_lp(m: LpModel, *, tight: bool = False, check: bool = True) -> LpSolution:
    """Solve an LP with HiGHS and return primal values plus row and bound duals."""
    return LpSession(m, tight=tight).solve(check=check)


def _cond_hint(m: LpModel) -> float:
    d = np.abs(m.A.data)
    return float(d.max() / d.min()) if len(d) else 1.0


def lp_certificate_residuals(m: LpModel, sol: LpSolution) -> tuple[float, float]:
    """Primal feasibility residual and primal-dual objective gap."""
    x = sol.x
    Ax = m.A @ x
    viol = np.concatenate([np.maximum(m.row_lo - Ax, 0), np.maximum(Ax - m.row_hi, 0),
                           np.maximum(m.lb - x, 0), np.maximum(x - m.ub, 0)])
    resid = float(np.max(viol, initial=0.0))
    dual_obj = _bound_products(sol.duals, m.row_lo, m.row_hi, m.sense)
    dual_obj += _side_product(sol.lb_duals, m.lb) + _side_product(sol.ub_duals, m.ub)
    gap = abs(float(m.c @ x) - dual_obj)
    return resid, gap


def _side_product(d, v):
    # duals at round-off level on an infinite bound carry no information
    nz = (d != 0) & (np.isfinite(v) | (np.abs(d) > POLICY.feas_tol))
    return float(np.sum(d[nz] * v[nz]))


def _bound_products(d, lo, hi, sense):
    # a positive sensitivity in a min problem means the lower side is active
    pos = d > 0 if sense == "min" else d < 0
    rhs = np.where(pos, lo, hi)
    rhs = np.where(lo == hi, lo, rhs)
    nz = (d != 0) & (np.isfinite(rhs) | (np.abs(d) > POLICY.feas_tol))
    return float(np.sum(d[nz] * rhs[nz]))


# -- MIP --------------------------------------------------------------------------


def solve_mip(m: LpModel, *, node_limit: int = 100_000, time_limit: float = np.inf,
              method: str = "bnb") -> tuple[LpSolution, BranchStats]:
    """Exact binary program solve.

    ``method='bnb'`` runs best-first branch-and-bound on the most fractional
    binary (ties to the lowest index); ``method='highs'`` delegates to HiGHS.
    On limit exhaustion the best incumbent is returned with
    ``stats.optimal = False``.
    """
    binary = getattr(m, "binary", None)
    if binary is None or not np.any(binary):
        sol = solve_lp(m)
        return sol, BranchStats(nodes=1, lp_solves=1, best_bound=sol.obj, optimal=True,
                                incumbents=[sol.obj] if sol.optimal else [])
    m.validate()
    if method == "highs":
        return _solve_mip_highs(m, node_limit, time_limit)
    if method != "bnb":
        raise EngineError(f"unknown MIP method {method!r}")
    return branch_and_bound(LpSession(m.relaxation()), np.flatnonzero(m.binary),
                            node_limit=node_limit, time_limit=time_limit)


def branch_and_bound(sess: LpSession, bidx, *, node_limit: int = 100_000,
                     time_limit: float = np.inf) -> tuple[LpSolution, BranchStats]:
    """Best-first branch-and-bound over the binaries ``bidx`` of a loaded session.

    The session's bounds are restored before returning.
    """
    m = sess.model
    sign = 1.0 if m.sense == "min" else -1.0
    bidx = np.asarray(bidx, dtype=int)
    lb0, ub0 = m.lb[bidx].copy(), m.ub[bidx].copy()
    stats = BranchStats()
    t0 = time.perf_counter()
    best: LpSolution | None = None
    best_val = INF  # internal minimisation value
    heap = [(-INF, 0, lb0.copy(), ub0.copy())]
    seq = 1
    tol = 1e-9
    try:
        while heap:
            if stats.nodes >= node_limit:
                stats.limit_hit = "node"
                break
            if time.perf_counter() - t0 > time_limit:
                stats.limit_hit = "time"
                break
            bound, _, lb, ub = heapq.heappop(heap)
            if bound >= best_val - tol * (1 + abs(best_val)):
                continue
            stats.nodes += 1
            sess.set_bounds(bidx, lb, ub)
            sol = sess.solve(check=False)
            stats.lp_solves += 1
            if not sol.optimal:
                if sol.status == "unbounded":
                    raise EngineError("MIP relaxation unbounded")
                continue
            val = sign * sol.obj
            if val >= best_val - tol * (1 + abs(best_val)):
                continue
            xb = sol.x[bidx]
            frac = np.abs(xb - np.round(xb))
            if frac.max(initial=0.0) <= POLICY.int_tol:
                r = np.round(xb)
                sess.set_bounds(bidx, r, r)
                fixed = sess.solve()
                stats.lp_solves += 1
                if fixed.optimal and sign * fixed.obj < best_val:
                    best, best_val = fixed, sign * fixed.obj
                    stats.incumbents.append(fixed.obj)
                continue
            j = int(np.argmin(np.abs(frac - 0.5)))
            order = (0.0, 1.0) if xb[j] < 0.5 else (1.0, 0.0)
            for v in order:
                lb2, ub2 = lb.copy(), ub.copy()
                lb2[j] = ub2[j] = v
                heapq.heappush(heap, (val, seq, lb2, ub2))
                seq += 1
    finally:
        sess.set_bounds(bidx, lb0, ub0)
    open_nodes = [h[0] for h in heap if h[0] < best_val]
    if stats.limit_hit and open_nodes:
        stats.best_bound = sign * min(min(open_nodes), best_val)
        stats.optimal = False
    else:
        stats.limit_hit = None
        stats.best_bound = sign * best_val if best is not None else np.nan
        stats.optimal = True
    if best is None:
        status = "infeasible" if stats.optimal else "limit"
        return LpSolution(status, info={"nodes": stats.nodes}), stats
    best.info["nodes"] = stats.nodes
    return best, stats


def _solve_mip_highs(m: MipModel, node_limit, time_limit):
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 1e-9)
    h.setOptionValue("mip_abs_gap", 1e-9)
    h.setOptionValue("mip_max_nodes", int(min(node_limit, 2**31 - 1)))
    if np.isfinite(time_limit):
        h.setOptionValue("time_limit", float(time_limit))
    lp = _to_highs_lp(m)
    hm = highspy.HighsModel()
    hm.lp_ = lp
    lp.integrality_ = [highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous
                       for b in m.binary]
    hm.lp_ = lp
    h.passModel(hm)
    h.run()
    st = h.getModelStatus()
    info = h.getInfo()
    stats = BranchStats(nodes=int(info.mip_node_count))
    if st == highspy.HighsModelStatus.kInfeasible:
        stats.optimal = True
        return LpSolution("infeasible"), stats
    x = np.array(h.getSolution().col_value)
    if len(x) != m.nvars or info.primal_solution_status == 0:
        stats.limit_hit = "other"
        return LpSolution("limit"), stats
    x[m.binary] = np.round(x[m.binary])
    relax = m.relaxation()
    sess = LpSession(relax)
    sess.set_bounds(np.flatnonzero(m.binary), x[m.binary], x[m.binary])
    fixed = sess.solve()
    if not fixed.optimal:
        fixed = LpSolution("optimal", x=x, obj=float(m.c @ x) + m.obj_const)
    stats.optimal = st == highspy.HighsModelStatus.kOptimal
    if not stats.optimal:
        stats.limit_hit = "time" if st == highspy.HighsModelStatus.kTimeLimit else "node"
    stats.best_bound = float(info.mip_dual_bound)
    stats.incumbents.append(fixed.obj)
    return fixed, stats


# -- MPS --------------------------------------------------------------------------


def _shortest_exact(v: float) -> str:
    cands = {repr(v)}
    if v == int(v) and abs(v) < 1e15:
        cands.add(str(int(v)))
    for p in range(1, 18):
        cands.update((f"{v:.{p}g}", f"{v:.{p - 1}e}"))
    exact = [s for s in cands if float(s) == v]
    return min(exact, key=lambda s: (len(s), s))


def _fmt(v: float) -> str:
    """Canonical number text of at most 12 characters, stable under re-parsing."""
    v = float(v)
    if v == 0:
        return "0"
    s = _shortest_exact(v)
    if len(s) <= 12:
        return s
    for p in range(12, 0, -1):
        for cand in (f"{v:.{p}g}", f"{v:.{max(p - 1, 0)}e}"):
            if len(cand) <= 12:
                return _shortest_exact(float(cand))
    raise EngineError(f"cannot format {v!r} in 12 characters")


def _line(f1="", f2="", f3="", f4="", f5="", f6=""):
    s = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}   {f5:<8}  {f6:>12}"
    return s.rstrip()


def export_mps(m: LpModel, path=None, name: str = "MODEL") -> str:
    """Write fixed-format MPS with canonical names ``C0000001``/``R0000001``.

    Returns the text; writes it to ``path`` when given.
    """
    m.validate()
    binary = getattr(m, "binary", None)
    binary = np.zeros(m.nvars, bool) if binary is None else binary
    cn = [f"C{k + 1:07d}" for k in range(m.nvars)]
    rn = [f"R{k + 1:07d}" for k in range(m.nrows)]
    out = io.StringIO()
    out.write(f"NAME          {name[:8]}\n")
    if m.sense == "max":
        out.write("OBJSENSE\n    MAX\n")
    out.write("ROWS\n")
    out.write(_line("N", "OBJ") + "\n")
    kinds = []
    for k in range(m.nrows):
        lo, hi = m.row_lo[k], m.row_hi[k]
        if lo == hi:
            t = "E"
        elif np.isfinite(lo):
            t = "G"
        elif np.isfinite(hi):
            t = "L"
        else:
            t = "N"
        kinds.append(t)
        out.write(_line(t, rn[k]) + "\n")
    out.write("COLUMNS\n")
    A = m.A.tocsc()
    in_int = False
    nmark = 0
    for j in range(m.nvars):
        if binary[j] != in_int:
            tag = "'INTORG'" if binary[j] else "'INTEND'"
            out.write(_line("", f"M{nmark:07d}", "'MARKER'", "", tag) + "\n")
            nmark += 1
            in_int = bool(binary[j])
        entries = []
        if m.c[j] != 0:
            entries.append(("OBJ", m.c[j]))
        for p in range(A.indptr[j], A.indptr[j + 1]):
            if A.data[p] != 0:
                entries.append((rn[A.indices[p]], A.data[p]))
        if not entries:
            entries.append(("OBJ", 0.0))
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            f = [cn[j], pair[0][0], _fmt(pair[0][1])]
            if len(pair) == 2:
                f += [pair[1][0], _fmt(pair[1][1])]
            out.write(_line("", *f) + "\n")
    if in_int:
        out.write(_line("", f"M{nmark:07d}", "'MARKER'", "", "'INTEND'") + "\n")
    out.write("RHS\n")
    if m.obj_const != 0:
        out.write(_line("", "RHS", "OBJ", _fmt(-m.obj_const)) + "\n")
    ranges = []
    for k, t in enumerate(kinds):
        if t == "N":
            continue
        rhs = m.row_lo[k] if t in ("E", "G") else m.row_hi[k]
        if rhs != 0:
            out.write(_line("", "RHS", rn[k], _fmt(rhs)) + "\n")
        if t == "G" and np.isfinite(m.row_hi[k]):
            ranges.append((rn[k], m.row_hi[k] - m.row_lo[k]))
    if ranges:
        out.write("RANGES\n")
        for r, v in ranges:
            out.write(_line("", "RNG", r, _fmt(v)) + "\n")
    bl = []
    for j in range(m.nvars):
        lo, hi = m.lb[j], m.ub[j]
        if binary[j] and lo == 0 and hi == 1:
            bl.append(("BV", cn[j], None))
        elif lo == hi:
            bl.append(("FX", cn[j], lo))
        else:
            if lo == -INF and hi == INF:
                bl.append(("FR", cn[j], None))
                continue
            if lo == -INF:
                bl.append(("MI", cn[j], None))
            elif lo != 0:
                bl.append(("LO", cn[j], lo))
            if hi != INF:
                bl.append(("UP", cn[j], hi))
    if bl:
        out.write("BOUNDS\n")
        for t, c, v in bl:
            out.write(_line(t, "BND", c, "" if v is None else _fmt(v)) + "\n")
    out.write("ENDATA\n")
    text = out.getvalue()
    if path is not None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    return text


def _fields(line: str) -> list[str]:
    spans = [(1, 3), (4, 12), (14, 22), (24, 36), (39, 47), (49, 61)]
    return [line[a:b].strip() for a, b in spans]


def import_mps(text: str) -> LpModel:
    """Read fixed-format MPS produced by :func:`export_mps` (or compatible)."""
    section = None
    sense = "min"
    row_kind: dict[str, str] = {}
    row_order: list[str] = []
    obj_row = None
    cols: dict[str, dict] = {}
    col_order: list[str] = []
    col_bin: dict[str, bool] = {}
    rhs: dict[str, float] = {}
    rng: dict[str, float] = {}
    bnds: dict[str, list] = {}
    in_int = False
    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw.startswith(" "):
            section = raw.split()[0]
            continue
        if section == "OBJSENSE":
            sense = "max" if raw.strip().upper().startswith("MAX") else "min"
            continue
        f = _fields(raw)
        if section == "ROWS":
            t, name = f[0], f[1]
            if t == "N" and obj_row is None:
                obj_row = name
            else:
                row_kind[name] = t
                row_order.append(name)
        elif section == "COLUMNS":
            if f[2] == "'MARKER'":
                in_int = f[4] == "'INTORG'"
                continue
            c = f[1]
            if c not in cols:
                cols[c] = {}
                col_order.append(c)
                col_bin[c] = in_int
            for rname, val in ((f[2], f[3]), (f[4], f[5])):
                if rname:
                    cols[c][rname] = cols[c].get(rname, 0.0) + float(val)
        elif section == "RHS":
            for rname, val in ((f[2], f[3]), (f[4], f[5])):
                if rname:
                    rhs[rname] = float(val)
        elif section == "RANGES":
            for rname, val in ((f[2], f[3]), (f[4], f[5])):
                if rname:
                    rng[rname] = float(val)
        elif section == "BOUNDS":
            bnds.setdefault(f[2], []).append((f[0], float(f[3]) if f[3] else None))
    ridx = {r: k for k, r in enumerate(row_order)}
    nr, nc = len(row_order), len(col_order)
    c = np.zeros(nc)
    rr, cc, vv = [], [], []
    for j, name in enumerate(col_order):
        for rname, val in cols[name].items():
            if rname == obj_row:
                c[j] += val
            else:
                rr.append(ridx[rname])
                cc.append(j)
                vv.append(val)
    A = sp.csr_matrix((vv, (rr, cc)), shape=(nr, nc))
    lo = np.full(nr, -INF)
    hi = np.full(nr, INF)
    for k, r in enumerate(row_order):
        t, b = row_kind[r], rhs.get(r, 0.0)
        if t == "E":
            lo[k] = hi[k] = b
            if r in rng:
                (lo.__setitem__(k, b + rng[r]) if rng[r] < 0 else hi.__setitem__(k, b + rng[r]))
        elif t == "G":
            lo[k] = b
            if r in rng:
                hi[k] = b + abs(rng[r])
        elif t == "L":
            hi[k] = b
            if r in rng:
                lo[k] = b - abs(rng[r])
    lb = np.zeros(nc)
    ub = np.full(nc, INF)
    binary = np.array([col_bin[n] for n in col_order], dtype=bool)
    ub[binary] = 1.0
    cidx = {n: j for j, n in enumerate(col_order)}
    for name, items in bnds.items():
        j = cidx[name]
        for t, v in items:
            if t == "UP":
                ub[j] = v
            elif t == "LO":
                lb[j] = v
            elif t == "FX":
                lb[j] = ub[j] = v
            elif t == "FR":
                lb[j], ub[j] = -INF, INF
            elif t == "MI":
                lb[j] = -INF
            elif t == "PL":
                ub[j] = INF
            elif t == "BV":
                lb[j], ub[j] = 0.0, 1.0
                binary[j] = True
    obj_const = -rhs.get(obj_row, 0.0) if obj_row else 0.0
    kw = dict(c=c, A=A, row_lo=lo, row_hi=hi, lb=lb, ub=ub, sense=sense, obj_const=obj_const,
              var_names=col_order, row_names=row_order)
    if binary.any():
        return MipModel(binary=binary, **kw)
    return LpModel(**kw)
