"""Central numeric tolerances shared by every solver in the package."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NumericPolicy:
    factor_tol: float = 1e-12
    residual_tol: float = 1e-9
    feas_tol: float = 1e-7
    int_tol: float = 1e-6
    balance_tol: float = 1e-9
    dual_gap_tol: float = 1e-6


POLICY = NumericPolicy()
