"""Self-contained dense linear programming, no external solver.

Minimization over box-bounded variables with <=, >=, and = rows, solved by
the textbook two-phase primal simplex on a dense tableau.  Bland's rule
(lowest eligible index enters; ties in the ratio test break toward the
lowest basic index) guarantees termination without cycling.  Determinism:
identical inputs pivot identically, so solutions are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

# A tableau entry this small is treated as zero when selecting pivots.
PIVOT_TOL = 1e-9
# Phase-1 residual above this means the program is infeasible.
FEAS_TOL = 1e-7

_RELATIONS = ("<=", ">=", "=")


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpInputError(ValueError):
    """Malformed program: bad shapes, non-finite data, unknown relations."""


@dataclass(frozen=True)
class Constraint:
    coeffs: np.ndarray
    relation: str
    rhs: float


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: Optional[np.ndarray]
    objective: Optional[float]
    iterations: int


class LinearProgram:
    """Builder for a minimization program over box-bounded variables.

    Variables default to free (-inf, +inf); the objective defaults to zero
    (pure feasibility).  ``names`` are used only by :meth:`dump`.
    """

    def __init__(self, num_vars: int, names: Optional[Sequence[str]] = None):
        if num_vars < 1:
            raise LpInputError("program needs at least one variable")
        self.num_vars = num_vars
        self.objective = np.zeros(num_vars)
        self.constraints: list[Constraint] = []
        self.lower = np.full(num_vars, -math.inf)
        self.upper = np.full(num_vars, math.inf)
        if names is None:
            names = [f"x{j}" for j in range(num_vars)]
        if len(names) != num_vars:
            raise LpInputError("one name per variable required")
        self.names = [str(s) for s in names]

    def set_objective(self, coeffs) -> None:
        arr = self._vector(coeffs, "objective")
        self.objective = arr

    def set_bounds(self, var: int, lower: float, upper: float) -> None:
        if not 0 <= var < self.num_vars:
            raise LpInputError(f"variable {var} out of range")
        if math.isnan(lower) or math.isnan(upper):
            raise LpInputError("bounds may not be NaN")
        if lower > upper:
            raise LpInputError(f"empty bound interval [{lower}, {upper}]")
        self.lower[var] = lower
        self.upper[var] = upper

    def add_constraint(self, coeffs, relation: str, rhs: float) -> None:
        if relation not in _RELATIONS:
            raise LpInputError(f"unknown relation {relation!r}")
        arr = self._vector(coeffs, "constraint")
        if not math.isfinite(rhs):
            raise LpInputError("constraint rhs must be finite")
        self.constraints.append(Constraint(arr, relation, float(rhs)))

    def _vector(self, coeffs, what: str) -> np.ndarray:
        arr = np.asarray(coeffs, dtype=float)
        if arr.shape != (self.num_vars,):
            raise LpInputError(
                f"{what} has shape {arr.shape}, expected ({self.num_vars},)"
            )
        if not np.all(np.isfinite(arr)):
            raise LpInputError(f"{what} has non-finite coefficients")
        return arr.copy()

    def dump(self) -> str:
        """Human-readable rendering, stable across runs."""

        def term(c: float, name: str) -> str:
            return f"{c:+g}*{name}"

        lines = [
            "minimize "
            + " ".join(term(c, n) for c, n in zip(self.objective, self.names))
        ]
        lines.append("subject to")
        for con in self.constraints:
            lhs = " ".join(term(c, n) for c, n in zip(con.coeffs, self.names))
            lines.append(f"  {lhs} {con.relation} {con.rhs:g}")
        lines.append("bounds")
        for j, name in enumerate(self.names):
            lines.append(f"  {self.lower[j]:g} <= {name} <= {self.upper[j]:g}")
        return "\n".join(lines)


def _bland_simplex(
    tableau: np.ndarray,
    basis: np.ndarray,
    crow: np.ndarray,
    tol: float,
    limit: int,
) -> tuple[str, int]:
    """Run primal simplex pivots in place; returns (outcome, pivot count)."""
    count = 0
    while True:
        eligible = np.flatnonzero(crow[:-1] < -tol)
        if eligible.size == 0:
            return "optimal", count
        col = int(eligible[0])
        column = tableau[:, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            return "unbounded", count
        ratios = tableau[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[np.flatnonzero(ratios <= best + 1e-12)]
        row = int(tied[np.argmin(basis[tied])])
        _pivot(tableau, crow, basis, row, col)
        count += 1
        if count > limit:
            raise RuntimeError(f"simplex exceeded {limit} pivots")


def _pivot(
    tableau: np.ndarray, crow: np.ndarray, basis: np.ndarray, row: int, col: int
) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    crow -= crow[col] * tableau[row]
    basis[row] = col


def _reduced_costs(
    tableau: np.ndarray, basis: np.ndarray, cost: np.ndarray
) -> np.ndarray:
    crow = np.concatenate([cost, [0.0]])
    for r, bv in enumerate(basis):
        if cost[bv] != 0.0:
            crow -= cost[bv] * tableau[r]
    crow[basis] = 0.0
    return crow


def solve(
    lp: LinearProgram,
    pivot_tol: float = PIVOT_TOL,
    feas_tol: float = FEAS_TOL,
    max_pivots: int = 200_000,
) -> LpSolution:
    """Two-phase simplex solve of the given program."""
    n = lp.num_vars
    # Substitute each variable by a nonnegative one (or a pair, if free).
    # col_of[j] is the first standard-form column of original variable j.
    col_of = np.zeros(n, dtype=int)
    kind = []  # "shift" (x = off + y), "mirror" (x = off - y), "split"
    offset = np.zeros(n)
    cols = 0
    extra_rows: list[tuple[int, float]] = []  # (column, upper value) for y <= u
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if math.isfinite(lo):
            col_of[j] = cols
            kind.append("shift")
            offset[j] = lo
            if math.isfinite(hi):
                extra_rows.append((cols, hi - lo))
            cols += 1
        elif math.isfinite(hi):
            col_of[j] = cols
            kind.append("mirror")
            offset[j] = hi
            cols += 1
        else:
            col_of[j] = cols
            kind.append("split")
            cols += 2

    def expand(coeffs: np.ndarray) -> tuple[np.ndarray, float]:
        """Rewrite a row over x as a row over y plus a constant."""
        row = np.zeros(cols)
        const = 0.0
        for j in range(n):
            c = coeffs[j]
            if c == 0.0:
                continue
            if kind[j] == "shift":
                row[col_of[j]] += c
                const += c * offset[j]
            elif kind[j] == "mirror":
                row[col_of[j]] -= c
                const += c * offset[j]
            else:
                row[col_of[j]] += c
                row[col_of[j] + 1] -= c
        return row, const

    rows: list[np.ndarray] = []
    rels: list[str] = []
    rhs: list[float] = []
    for con in lp.constraints:
        row, const = expand(con.coeffs)
        rows.append(row)
        rels.append(con.relation)
        rhs.append(con.rhs - const)
    for c_idx, u in extra_rows:
        row = np.zeros(cols)
        row[c_idx] = 1.0
        rows.append(row)
        rels.append("<=")
        rhs.append(u)

    obj_row, obj_const = expand(lp.objective)

    m = len(rows)
    if m == 0:
        # Unconstrained boxless feasibility: any offset point works, but an
        # unbounded objective direction must still be reported.
        x = offset.copy()
        for j in range(n):
            if kind[j] == "split":
                if lp.objective[j] != 0.0:
                    return LpSolution(LpStatus.UNBOUNDED, None, None, 0)
                x[j] = 0.0
            elif lp.objective[j] != 0.0:
                good = lp.objective[j] > 0.0
                limited = math.isfinite(lp.lower[j] if good else lp.upper[j])
                if not limited:
                    return LpSolution(LpStatus.UNBOUNDED, None, None, 0)
                x[j] = lp.lower[j] if good else lp.upper[j]
        return LpSolution(
            LpStatus.OPTIMAL, x, float(lp.objective @ x), 0
        )

    A = np.vstack(rows)
    b = np.asarray(rhs, dtype=float)
    flip = b < 0.0
    A[flip] *= -1.0
    b[flip] *= -1.0
    swapped = {"<=": ">=", ">=": "<=", "=": "="}
    rels = [swapped[r] if f else r for r, f in zip(rels, flip)]

    # Column layout: y variables | slack/surplus | artificials | rhs.
    num_slack = sum(1 for r in rels if r != "=")
    num_art = sum(1 for r in rels if r != "<=")
    width = cols + num_slack
    tableau = np.zeros((m, width + num_art + 1))
    basis = np.zeros(m, dtype=int)
    art_cols: list[int] = []
    s_at = cols
    a_at = width
    for r in range(m):
        tableau[r, :cols] = A[r]
        tableau[r, -1] = b[r]
        if rels[r] == "<=":
            tableau[r, s_at] = 1.0
            basis[r] = s_at
            s_at += 1
        elif rels[r] == ">=":
            tableau[r, s_at] = -1.0
            s_at += 1
            tableau[r, a_at] = 1.0
            basis[r] = a_at
            art_cols.append(a_at)
            a_at += 1
        else:
            tableau[r, a_at] = 1.0
            basis[r] = a_at
            art_cols.append(a_at)
            a_at += 1

    pivots = 0
    if art_cols:
        phase1 = np.zeros(width + num_art)
        phase1[art_cols] = 1.0
        crow = _reduced_costs(tableau, basis, phase1)
        outcome, used = _bland_simplex(tableau, basis, crow, pivot_tol, max_pivots)
        pivots += used
        if outcome != "optimal":  # phase 1 is bounded below by 0
            raise RuntimeError("phase 1 terminated abnormally")
        infeas = float(
            sum(tableau[r, -1] for r in range(m) if basis[r] in art_cols)
        )
        if infeas > feas_tol:
            return LpSolution(LpStatus.INFEASIBLE, None, None, pivots)
        # Drive leftover artificials out of the basis or drop their rows.
        art_set = set(art_cols)
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] not in art_set:
                continue
            pivot_cols = np.flatnonzero(np.abs(tableau[r, :width]) > pivot_tol)
            if pivot_cols.size:
                dummy = np.zeros(tableau.shape[1])
                _pivot(tableau, dummy, basis, r, int(pivot_cols[0]))
                pivots += 1
            else:
                keep[r] = False
        tableau = tableau[keep]
        basis = basis[keep]
        m = tableau.shape[0]
    # Discard artificial columns entirely.
    tableau = np.concatenate([tableau[:, :width], tableau[:, -1:]], axis=1)

    cost2 = np.zeros(width)
    cost2[:cols] = obj_row
    crow = _reduced_costs(tableau, basis, cost2)
    outcome, used = _bland_simplex(tableau, basis, crow, pivot_tol, max_pivots)
    pivots += used
    if outcome == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, None, None, pivots)

    y = np.zeros(width)
    y[basis] = tableau[:, -1]
    x = np.zeros(n)
    for j in range(n):
        if kind[j] == "shift":
            x[j] = offset[j] + y[col_of[j]]
        elif kind[j] == "mirror":
            x[j] = offset[j] - y[col_of[j]]
        else:
            x[j] = y[col_of[j]] - y[col_of[j] + 1]
    objective = float(lp.objective @ x)
    return LpSolution(LpStatus.OPTIMAL, x, objective, pivots)
