"""Exact multiple-choice knapsack oracles: pick one level per segment, maximize VMAF under the cap.

Two independent routes are provided. :func:`mckp_exhaustive` scores every
combination with exact MB sums; :func:`mckp_dp` runs a dynamic program over
integer data units (``unit_mb`` granularity). On tables whose data values
lie on the unit grid the two agree exactly; ``method="both"`` runs both and
raises if they disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from balance_qubo.formulation import OPTIMAL_TOL, fits
from balance_qubo.segments import DataBudget, SegmentTable

MAX_EXHAUSTIVE = 10**6


class InfeasibleError(ValueError):
    """No one-level-per-segment choice fits under the cap."""

    def __init__(self, min_usage_mb: float, d_max_mb: float):
        self.min_usage_mb = min_usage_mb
        self.d_max_mb = d_max_mb
        super().__init__(
            f"infeasible: minimum possible usage {min_usage_mb:.2f} MB exceeds cap {d_max_mb:g} MB"
        )


class OracleDisagreement(RuntimeError):
    pass


@dataclass(frozen=True)
class MckpSolution:
    choices: Optional[tuple[int, ...]]
    vmaf: Optional[float]
    data_mb: Optional[float]

    @property
    def feasible(self) -> bool:
        return self.choices is not None


_INFEASIBLE = MckpSolution(None, None, None)


def mckp_exhaustive(table: SegmentTable, budget: DataBudget) -> MckpSolution:
    """Score all ``M**N`` combinations (C-order flattening is lexicographic order)."""
    n, m = table.n_segments, table.n_levels
    if m**n > MAX_EXHAUSTIVE:
        raise ValueError(f"{m}^{n} combinations exceeds the exhaustive limit {MAX_EXHAUSTIVE}")
    vmaf, data = table.vmaf_matrix(), table.data_matrix()
    tot_v, tot_d = vmaf[0], data[0]
    for i in range(1, n):
        tot_v = np.add.outer(tot_v, vmaf[i]).ravel()
        tot_d = np.add.outer(tot_d, data[i]).ravel()
    ok = tot_d <= budget.d_max_mb + 1e-9
    if not ok.any():
        return _INFEASIBLE
    best = tot_v[ok].max()
    k = int(np.flatnonzero(ok & (tot_v >= best - OPTIMAL_TOL))[0])
    choices = tuple(int(c) for c in np.unravel_index(k, (m,) * n))
    return MckpSolution(choices, table.total_vmaf(choices), table.total_data(choices))


def mckp_dp(table: SegmentTable, budget: DataBudget) -> MckpSolution:
    """Dynamic program over quantized data units.

    ``best[i][c]`` is the maximum VMAF of segments ``i..N-1`` using at most
    ``c`` units. The choice vector is rebuilt front to back taking the
    smallest level index that still reaches the optimum, which yields the
    lexicographically smallest optimal choice.
    """
    n, m = table.n_segments, table.n_levels
    cap = math.floor(budget.d_max_mb / budget.unit_mb + 1e-9)
    units = np.array([[budget.to_units(v.data_mb) for v in seg] for seg in table.segments])
    vmaf = table.vmaf_matrix()
    best = np.full((n + 1, cap + 1), -np.inf)
    best[n, :] = 0.0
    for i in range(n - 1, -1, -1):
        for j in range(m):
            u = units[i, j]
            if u > cap:
                continue
            cand = vmaf[i, j] + best[i + 1, : cap + 1 - u]
            np.maximum(best[i, u:], cand, out=best[i, u:])
    if not np.isfinite(best[0, cap]):
        return _INFEASIBLE
    choices = []
    c = cap
    for i in range(n):
        target = best[i, c]
        for j in range(m):
            u = units[i, j]
            if u <= c and vmaf[i, j] + best[i + 1, c - u] >= target - OPTIMAL_TOL:
                choices.append(j)
                c -= u
                break
    choices_t = tuple(choices)
    return MckpSolution(choices_t, table.total_vmaf(choices_t), table.total_data(choices_t))


def mckp_oracle(table: SegmentTable, budget: DataBudget, method: str = "dp") -> MckpSolution:
    """Exact MCKP optimum; returns an infeasible solution (``choices is None``) when nothing fits.

    Args:
        method: ``"dp"``, ``"exhaustive"``, or ``"both"`` (cross-checked).
    """
    if method == "dp":
        return mckp_dp(table, budget)
    if method == "exhaustive":
        return mckp_exhaustive(table, budget)
    if method == "both":
        a, b = mckp_dp(table, budget), mckp_exhaustive(table, budget)
        if a.feasible != b.feasible or (
            a.feasible and abs(a.vmaf - b.vmaf) > OPTIMAL_TOL
        ):
            raise OracleDisagreement(f"dp={a} exhaustive={b}")
        return b
    raise ValueError(f"unknown oracle method {method!r}")


def require_feasible(table: SegmentTable, budget: DataBudget, method: str = "dp") -> MckpSolution:
    sol = mckp_oracle(table, budget, method)
    if not sol.feasible:
        raise InfeasibleError(table.min_usage(), budget.d_max_mb)
    return sol


def is_feasible_cap(table: SegmentTable, d_max_mb: float) -> bool:
    return fits(table.min_usage(), d_max_mb)
