"""Incidence and Laplacian algebra: J-solves, contraction scaling, transfer tables.

For a connected network with conductances ``y`` the shifted Laplacian
``J = N Y N^T + (1/n) 1 1^T`` is nonsingular. On a disconnected network the
shift is applied per component, which keeps J block diagonal and nonsingular.
Solves go through a sparse LU of the Laplacian grounded at the lowest node of
every component, followed by a mean correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, component_labels
from .numerics import POLICY


class SingularOperatorError(np.linalg.LinAlgError):
    pass


def laplacian(g: Grid, y: np.ndarray, keep: np.ndarray | None = None) -> sp.csr_matrix:
    """Weighted Laplacian ``N Y N^T`` over the arcs flagged in ``keep``."""
    y = np.asarray(y, dtype=float)
    if keep is not None:
        y = np.where(keep, y, 0.0)
    N = g.incidence()
    return (N @ sp.diags(y) @ N.T).tocsr()


class JOperator:
    """Factorized ``J`` for conductances ``y`` on the arcs kept in ``keep``.

    Parameters
    ----------
    g : Grid
    y : ndarray, shape (m,)
        Conductances, positive on every kept arc.
    keep : ndarray of bool, optional
        Surviving arcs; the shift ``(1/n_K) 1 1^T`` is applied per component.
    reference : {'lowest', 'highest'}
        Node grounded in every component for the internal factorization.
    """

    def __init__(self, g: Grid, y, keep=None, *, reference: str = "lowest", dense_limit: int = 0):
        y = np.asarray(y, dtype=float)
        keep = np.ones(g.m, dtype=bool) if keep is None else np.asarray(keep, dtype=bool)
        if y.shape != (g.m,):
            raise ValueError(f"y: expected shape ({g.m},), got {y.shape}")
        if np.any(~(y[keep] > 0)):
            raise ValueError("y: conductances must be positive")
        self.g, self.y, self.keep = g, y, keep
        self.ncomp, self.labels = component_labels(g, keep)
        if reference not in ("lowest", "highest"):
            raise ValueError(f"reference: unknown choice {reference!r}")
        pick = 0 if reference == "lowest" else -1
        self.refs = np.array([np.flatnonzero(self.labels == c)[pick] for c in range(self.ncomp)])
        self.sizes = np.bincount(self.labels, minlength=self.ncomp)
        mask = np.ones(g.n, dtype=bool)
        mask[self.refs] = False
        self.free = np.flatnonzero(mask)
        L = laplacian(g, y, keep)
        self.L = L
        Lr = L[self.free][:, self.free].tocsc()
        self._lu = None
        self._dense = None
        if len(self.free):
            if len(self.free) <= dense_limit:
                self._dense = sla.cho_factor(Lr.toarray())
            else:
                try:
                    self._lu = spla.splu(Lr)
                except RuntimeError as exc:  # exactly singular
                    raise SingularOperatorError(str(exc)) from None
                diag = np.abs(self._lu.U.diagonal())
                if diag.min() <= POLICY.factor_tol * max(1.0, diag.max()):
                    raise SingularOperatorError("grounded Laplacian is numerically singular")

    @property
    def n(self) -> int:
        return self.g.n

    def grounded_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``L theta = rhs`` with ``theta = 0`` at every component reference.

        ``rhs`` must sum to zero over every component.
        """
        rhs = np.asarray(rhs, dtype=float)
        out = np.zeros_like(rhs)
        if len(self.free):
            sub = rhs[self.free]
            if self._dense is not None:
                out[self.free] = sla.cho_solve(self._dense, sub)
            else:
                out[self.free] = self._lu.solve(sub)
        return out

    def component_means(self, v: np.ndarray) -> np.ndarray:
        """Per-component mean of ``v`` broadcast back to nodes."""
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            sums = np.bincount(self.labels, weights=v, minlength=self.ncomp)
            return (sums / self.sizes)[self.labels]
        out = np.empty_like(v)
        for j in range(v.shape[1]):
            out[:, j] = self.component_means(v[:, j])
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Return ``J^{-1} rhs`` for a vector or a matrix of right-hand sides."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise ValueError(f"rhs: expected {self.n} rows, got {rhs.shape[0]}")
        mean = self.component_means(rhs)
        theta = self.grounded_solve(rhs - mean)
        return theta - self.component_means(theta) + mean

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Return ``J v``."""
        return self.L @ v + self.component_means(v)

    def dense(self) -> np.ndarray:
        J = self.L.toarray()
        for c in range(self.ncomp):
            idx = np.flatnonzero(self.labels == c)
            J[np.ix_(idx, idx)] += 1.0 / len(idx)
        return J


def build_j(g: Grid, y, keep=None) -> JOperator:
    return JOperator(g, y, keep)


def solve_j(op: JOperator, rhs) -> np.ndarray:
    return op.solve(rhs)


# -- contraction scaling ---------------------------------------------------------


@dataclass(frozen=True)
class ScalingResult:
    """Conductance scaling that puts ``P = I - J`` in the contraction regime.

    Flows of the scaled system are ``mu`` times the original flows; angles are
    unchanged. ``r`` bounds ``|1 - lambda|`` over every nonzero Laplacian
    eigenvalue, so ``nu = r`` is the contraction factor of ``P`` on the
    complement of the constant vector.
    """

    mu: float
    y: np.ndarray
    b: np.ndarray
    r: float

    @property
    def nu(self) -> float:
        return self.r


def node_conductance_sums(g: Grid, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return np.bincount(g.tails, weights=y, minlength=g.n) + np.bincount(g.heads, weights=y, minlength=g.n)


def scale_to_contraction(g: Grid, y, b, target: float = 0.49) -> ScalingResult:
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("y: conductances must be positive")
    mu = min(1.0, target / float(node_conductance_sums(g, y).max()))
    ys = mu * y
    lam = _laplacian_spectrum(laplacian(g, ys))
    nz = lam[1:]
    r = float(np.max(np.abs(1.0 - nz))) if len(nz) else 0.0
    return ScalingResult(mu=mu, y=ys, b=mu * np.asarray(b, dtype=float), r=r)


def _laplacian_spectrum(L: sp.spmatrix) -> np.ndarray:
    n = L.shape[0]
    if n <= 2000:
        return np.sort(np.linalg.eigvalsh(L.toarray()))
    small = spla.eigsh(L.tocsc(), k=2, sigma=-1e-3, which="LM", return_eigenvectors=False)
    large = spla.eigsh(L.tocsc(), k=1, which="LA", return_eigenvectors=False)
    return np.sort(np.concatenate([small, large]))


def series_apply(op: JOperator, v: np.ndarray) -> np.ndarray:
    """Apply ``P = I - J``."""
    return v - op.matvec(v)


def neumann_partial_sum(op: JOperator, b: np.ndarray, K: int) -> np.ndarray:
    """``sum_{k=0..K} P^k b``, the truncated series for ``J^{-1} b``."""
    term = np.asarray(b, dtype=float).copy()
    total = term.copy()
    for _ in range(K):
        term = series_apply(op, term)
        total += term
    return total


# -- transfer coefficients -------------------------------------------------------


def arc_columns(g: Grid, arcs) -> sp.csc_matrix:
    """Incidence columns ``c_ij`` for the listed arc indices."""
    arcs = np.asarray(arcs, dtype=int)
    k = len(arcs)
    rows = np.concatenate([g.tails[arcs], g.heads[arcs]])
    cols = np.concatenate([np.arange(k), np.arange(k)])
    vals = np.concatenate([np.ones(k), -np.ones(k)])
    return sp.csc_matrix((vals, (rows, cols)), shape=(g.n, k))


def _arc_indices(g: Grid, arcs) -> np.ndarray:
    return np.array([g.arc_index[a] if isinstance(a, str) else int(a) for a in arcs], dtype=int)


def pairwise_transfer(op: JOperator, probes, targets) -> np.ndarray:
    """Table ``T[t, p] = c_t^T J^{-1} c_p`` using one J-solve per probe arc.

    Arcs may be given as ids or canonical indices. Arcs removed from the
    operator's network are rejected.
    """
    g = op.g
    pi, ti = _arc_indices(g, probes), _arc_indices(g, targets)
    outside = [g.arcs[k].id for k in np.concatenate([pi, ti]) if not op.keep[k]]
    if outside:
        raise ValueError(f"arc outside the operator's network: {outside[0]!r}")
    Z = op.solve(arc_columns(g, pi).toarray())
    dtheta = Z[g.tails[ti]] - Z[g.heads[ti]]
    return dtheta


def transfer_matrix(op: JOperator) -> np.ndarray:
    """Full ``C^T J^{-1} C`` over all arcs (removed arcs give zero rows/cols)."""
    g = op.g
    idx = np.arange(g.m)
    T = np.zeros((g.m, g.m))
    kept = idx[op.keep]
    if len(kept):
        T[np.ix_(kept, kept)] = pairwise_transfer(op, kept, kept)
    return T


# -- norm lemma -------------------------------------------------------------------


def check_norm_lemma(Q: np.ndarray, p: np.ndarray) -> dict:
    """Residuals of the projection identities behind the cut tightening rows.

    With ``A = Q^T (Q Q^T)^{-1} Q`` and ``B = I - A`` returns
    ``energy = | |p|^2 - |Ap|^2 - |Bp|^2 |`` and
    ``l1 = max_j max(0, |(Ap)_j| + |(Bp)_j| - |p|_1)``.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    p = np.asarray(p, dtype=float)
    if np.linalg.matrix_rank(Q) < Q.shape[0]:
        raise np.linalg.LinAlgError("Q must have full row rank")
    A = Q.T @ np.linalg.solve(Q @ Q.T, Q)
    B = np.eye(Q.shape[1]) - A
    Ap, Bp = A @ p, B @ p
    energy = abs(p @ p - Ap @ Ap - Bp @ Bp)
    l1 = float(np.max(np.maximum(0.0, np.abs(Ap) + np.abs(Bp) - np.abs(p).sum()), initial=0.0))
    return {"energy": float(energy), "l1": l1}
