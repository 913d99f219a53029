"""Solver-independent linear programming layer.

:class:`CanonicalLp` is a sparse triplet form (minimisation) with row
senses, variable bounds and optional integrality flags (the flags exist
only so mixed-integer relaxations can be exported; the bundled solver
rejects them).  :func:`solve` is a bounded-variable revised simplex over a
sparse working matrix with an LU-factorised basis, intended for desk-scale
instances; anything larger should go through the MPS exporter in
:mod:`windplan.mps` and an external solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

#: Row senses as stored in :class:`CanonicalLp`.
SENSES = ("<", "=", ">")

_REFACTOR_EVERY = 100  # eta vectors kept before the basis is refactorised
_BLAND_AFTER = 1000    # non-improving pivots before switching to Bland's rule


@dataclass(frozen=True)
class CanonicalLp:
    """min c'x  s.t.  A x {<=,=,>=} b,  lower <= x <= upper."""

    objective: np.ndarray
    entry_rows: np.ndarray
    entry_cols: np.ndarray
    entry_vals: np.ndarray
    senses: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    var_names: tuple[str, ...]
    row_names: tuple[str, ...]
    name: str = "lp"

    def __post_init__(self) -> None:
        conv = {
            "objective": np.float64, "entry_rows": np.intp, "entry_cols": np.intp,
            "entry_vals": np.float64, "rhs": np.float64, "lower": np.float64,
            "upper": np.float64, "integer": bool,
        }
        for attr, dtype in conv.items():
            arr = np.array(getattr(self, attr), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "senses", tuple(self.senses))
        object.__setattr__(self, "var_names", tuple(self.var_names))
        object.__setattr__(self, "row_names", tuple(self.row_names))
        n, m = self.n_vars, self.n_rows
        if len(self.var_names) != n or self.lower.size != n or self.upper.size != n \
                or self.integer.size != n:
            raise ValueError("variable-sized fields disagree on the variable count")
        if len(self.row_names) != m or self.rhs.size != m:
            raise ValueError("row-sized fields disagree on the row count")
        if any(s not in SENSES for s in self.senses):
            raise ValueError("row senses must be one of <, =, >")
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective coefficients must be finite")
        if not np.all(np.isfinite(self.entry_vals)):
            raise ValueError("constraint coefficients must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("every lower bound must not exceed its upper bound")
        if self.entry_rows.size:
            if self.entry_rows.min() < 0 or self.entry_rows.max() >= m:
                raise ValueError("entry row index out of range")
            if self.entry_cols.min() < 0 or self.entry_cols.max() >= n:
                raise ValueError("entry column index out of range")
            keys = self.entry_rows * n + self.entry_cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (row, col) triplets")

    @property
    def n_vars(self) -> int:
        return int(self.objective.size)

    @property
    def n_rows(self) -> int:
        return int(self.rhs.size)

    def dense_matrix(self) -> np.ndarray:
        a = np.zeros((self.n_rows, self.n_vars))
        a[self.entry_rows, self.entry_cols] = self.entry_vals
        return a


class LpBuilder:
    """Incremental construction of a :class:`CanonicalLp`."""

    def __init__(self, name: str = "lp"):
        self.name = name
        self._obj: list[float] = []
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._integer: list[bool] = []
        self._var_names: list[str] = []
        self._senses: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self._entries: dict[tuple[int, int], float] = {}

    def add_var(self, name: str, lower: float = 0.0, upper: float = math.inf,
                objective: float = 0.0, integer: bool = False) -> int:
        self._var_names.append(name)
        self._lower.append(lower)
        self._upper.append(upper)
        self._obj.append(objective)
        self._integer.append(integer)
        return len(self._var_names) - 1

    def add_row(self, name: str, sense: str, rhs: float) -> int:
        self._row_names.append(name)
        self._senses.append(sense)
        self._rhs.append(rhs)
        return len(self._row_names) - 1

    def add_entry(self, row: int, col: int, value: float) -> None:
        key = (row, col)
        if key in self._entries:
            raise ValueError(f"duplicate entry for row {row}, col {col}")
        self._entries[key] = float(value)

    def build(self) -> CanonicalLp:
        keys = sorted(self._entries)
        return CanonicalLp(
            objective=self._obj,
            entry_rows=[k[0] for k in keys],
            entry_cols=[k[1] for k in keys],
            entry_vals=[self._entries[k] for k in keys],
            senses=tuple(self._senses),
            rhs=self._rhs,
            lower=self._lower,
            upper=self._upper,
            integer=self._integer,
            var_names=tuple(self._var_names),
            row_names=tuple(self._row_names),
            name=self.name,
        )


@dataclass(frozen=True)
class LpSolution:
    """Primal/dual result of a solve.

    ``duals`` holds one multiplier per original row and ``reduced_costs``
    one entry per structural variable.  For non-optimal statuses the primal
    values are the final iterate and the objective may be NaN.
    """

    status: str
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int = 0


# ---------------------------------------------------------------------------
# Revised simplex with bounds
# ---------------------------------------------------------------------------

_BASIC, _AT_LOWER, _AT_UPPER, _FREE = 0, 1, 2, 3


class _Basis:
    """LU-factorised basis with product-form eta updates.

    FTRAN/BTRAN go through the last factorisation plus the eta sequence;
    the factorisation is rebuilt once the sequence reaches
    ``_REFACTOR_EVERY`` entries (or on a degenerate pivot element).
    """

    def __init__(self, A: sp.csc_matrix, basis: np.ndarray):
        self.A = A
        self.refactor(basis)

    def refactor(self, basis: np.ndarray) -> None:
        matrix = self.A[:, basis].tocsc()
        self.lu = spla.splu(matrix.astype(np.float64))
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, rhs: np.ndarray) -> np.ndarray:
        x = self.lu.solve(rhs)
        for r, w in self.etas:
            xr = x[r] / w[r]
            if xr != 0.0:
                x -= w * xr
            x[r] = xr
        return x

    def btran(self, rhs: np.ndarray) -> np.ndarray:
        y = np.array(rhs, dtype=np.float64)
        for r, w in reversed(self.etas):
            y[r] = (y[r] - float(w @ y) + w[r] * y[r]) / w[r]
        return self.lu.solve(y, trans="T")

    def push_eta(self, row: int, spike: np.ndarray) -> bool:
        """Record a pivot; returns False when a refactorisation is due."""
        self.etas.append((row, spike.copy()))
        return len(self.etas) < _REFACTOR_EVERY


class _Simplex:
    """Bounded-variable two-phase revised simplex.

    Columns beyond the structural block are row slacks (one per inequality)
    and, during phase one, artificials.  Dantzig pricing with a permanent
    switch to Bland's rule after a stall.
    """

    def __init__(self, lp: CanonicalLp, feas_tol: float, opt_tol: float,
                 iteration_limit: int, on_iteration=None):
        self.lp = lp
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.iteration_limit = iteration_limit
        self.on_iteration = on_iteration
        self.iterations = 0
        self.bland = False

        m, n = lp.n_rows, lp.n_vars
        slack_rows = [i for i, s in enumerate(lp.senses) if s != "="]
        rows = list(lp.entry_rows)
        cols = list(lp.entry_cols)
        vals = list(lp.entry_vals)
        lower = [np.array(lp.lower)]
        upper = [np.array(lp.upper)]
        for k, i in enumerate(slack_rows):
            rows.append(i)
            cols.append(n + k)
            vals.append(1.0)
            if lp.senses[i] == "<":
                lower.append([0.0]); upper.append([math.inf])
            else:
                lower.append([-math.inf]); upper.append([0.0])
        self.n_struct = n
        self.n_real = n + len(slack_rows)
        self.slack_of_row = {row: n + k for k, row in enumerate(slack_rows)}
        self.b = np.array(lp.rhs)

        lower = np.concatenate(lower)
        upper = np.concatenate(upper)
        x = np.where(np.isfinite(lower), lower,
                     np.where(np.isfinite(upper), upper, 0.0))
        status = np.where(np.isfinite(lower), _AT_LOWER,
                          np.where(np.isfinite(upper), _AT_UPPER, _FREE))
        partial = sp.csc_matrix(
            (vals, (rows, cols)), shape=(m, self.n_real), dtype=np.float64
        )
        residual = self.b - partial @ x

        # Basis: the row's own slack when it can absorb the residual,
        # otherwise a fresh artificial column.
        basis = np.empty(m, dtype=np.intp)
        art_signs: list[float] = []
        art_rows: list[int] = []
        for i in range(m):
            slack = self.slack_of_row.get(i)
            if slack is not None and (
                (lp.senses[i] == "<" and residual[i] >= -feas_tol)
                or (lp.senses[i] == ">" and residual[i] <= feas_tol)
            ):
                x[slack] = residual[i]
                basis[i] = slack
            else:
                art_rows.append(i)
                art_signs.append(1.0 if residual[i] >= 0 else -1.0)
                basis[i] = self.n_real + len(art_rows) - 1
        self.n_art = len(art_rows)
        if self.n_art:
            rows.extend(art_rows)
            cols.extend(self.n_real + np.arange(self.n_art))
            vals.extend(art_signs)
            lower = np.concatenate([lower, np.zeros(self.n_art)])
            upper = np.concatenate([upper, np.full(self.n_art, math.inf)])
            x = np.concatenate([x, np.abs(residual[art_rows])])
            status = np.concatenate([status, np.full(self.n_art, _AT_LOWER, dtype=status.dtype)])
            for i, row in enumerate(art_rows):
                status[self.n_real + i] = _BASIC
        for i in range(m):
            if basis[i] < self.n_real:
                status[basis[i]] = _BASIC
        self.A = sp.csc_matrix(
            (vals, (rows, cols)), shape=(m, self.n_real + self.n_art), dtype=np.float64
        )
        self.AT = self.A.T.tocsr()
        self.lower = lower
        self.upper = upper
        self.x = x
        self.vstatus = status
        self.basis = basis
        self.factor = _Basis(self.A, self.basis)

    # -- linear algebra helpers -------------------------------------------

    def _recompute_basics(self) -> None:
        x_masked = np.array(self.x)
        x_masked[self.basis] = 0.0
        rhs = self.b - self.A @ x_masked
        self.x[self.basis] = self.factor.ftran(rhs)

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.lp.n_rows)
        start, end = self.A.indptr[j], self.A.indptr[j + 1]
        col[self.A.indices[start:end]] = self.A.data[start:end]
        return col

    # -- core loop ---------------------------------------------------------

    def run_phase(self, cost: np.ndarray, phase: int) -> str:
        best_obj = math.inf
        stall = 0
        while True:
            if self.iterations >= self.iteration_limit:
                return "iteration_limit"
            self.iterations += 1
            y = self.factor.btran(cost[self.basis])
            d = cost - self.AT @ y
            if self.on_iteration is not None and phase == 2:
                self.on_iteration({
                    "phase": phase,
                    "iteration": self.iterations,
                    "objective": float(cost @ self.x),
                    "dual_bound": self._dual_bound(y, d),
                })
            eligible = self._eligible(d)
            if not np.any(eligible):
                return "optimal"
            j = self._entering(d, eligible)
            direction = 1.0 if d[j] < 0 else -1.0
            w = self.factor.ftran(self._column(j))
            delta = -direction * w
            t_star, leave_row = self._ratio_test(j, delta)
            if t_star is None:
                return "unbounded"
            self._pivot(j, direction, delta, t_star, leave_row, w)
            obj_new = float(cost @ self.x)
            if obj_new < best_obj - 1e-10 * (1.0 + abs(best_obj)):
                best_obj = obj_new
                stall = 0
            else:
                stall += 1
                if stall >= _BLAND_AFTER:
                    self.bland = True

    def _eligible(self, d: np.ndarray) -> np.ndarray:
        movable = (self.vstatus != _BASIC) & (self.lower < self.upper)
        down = (self.vstatus == _AT_LOWER) & (d < -self.opt_tol)
        up = (self.vstatus == _AT_UPPER) & (d > self.opt_tol)
        free = (self.vstatus == _FREE) & (np.abs(d) > self.opt_tol)
        return movable & (down | up | free)

    def _entering(self, d: np.ndarray, eligible: np.ndarray) -> int:
        idx = np.flatnonzero(eligible)
        if self.bland:
            return int(idx[0])
        return int(idx[np.argmax(np.abs(d[idx]))])

    def _ratio_test(self, j: int, delta: np.ndarray):
        xb = self.x[self.basis]
        lb = self.lower[self.basis]
        ub = self.upper[self.basis]
        room = np.full(delta.shape, math.inf)
        pos = delta > self.feas_tol
        neg = delta < -self.feas_tol
        with np.errstate(invalid="ignore"):
            room[pos] = (ub[pos] - xb[pos]) / delta[pos]
            room[neg] = (xb[neg] - lb[neg]) / (-delta[neg])
        room = np.maximum(room, 0.0)
        t_bound = self.upper[j] - self.lower[j]
        row_min = room.min() if room.size else math.inf
        t_star = min(row_min, t_bound)
        if math.isinf(t_star):
            return None, None
        if t_bound <= row_min:
            return t_star, -1  # bound flip, no basis change
        ties = np.flatnonzero(room <= t_star + 1e-12)
        order = np.lexsort((self.basis[ties], -np.abs(delta[ties])))
        return t_star, int(ties[order[0]])

    def _pivot(self, j: int, direction: float, delta: np.ndarray,
               t: float, leave_row: int, w: np.ndarray) -> None:
        self.x[self.basis] += t * delta
        if leave_row < 0:  # bound flip
            if direction > 0:
                self.x[j] = self.upper[j]
                self.vstatus[j] = _AT_UPPER
            else:
                self.x[j] = self.lower[j]
                self.vstatus[j] = _AT_LOWER
            return
        entering_value = self.x[j] + direction * t
        leaving = self.basis[leave_row]
        # Snap the leaving variable onto the bound it reached.
        if delta[leave_row] > 0:
            self.x[leaving] = self.upper[leaving]
            self.vstatus[leaving] = _AT_UPPER
        else:
            self.x[leaving] = self.lower[leaving]
            self.vstatus[leaving] = _AT_LOWER
        self.basis[leave_row] = j
        self.vstatus[j] = _BASIC
        self.x[j] = entering_value
        if abs(w[leave_row]) < 1e-11 or not self.factor.push_eta(leave_row, w):
            self.factor.refactor(self.basis)
            self._recompute_basics()

    def _dual_bound(self, y: np.ndarray, d: np.ndarray) -> float:
        """Lagrangian bound y'b + sum_j min over [l_j, u_j] of d_j x_j.

        Valid for any multipliers, hence a true lower bound on the optimum
        at every iteration; equals the primal objective at optimality.
        """
        total = float(y @ self.b) if y.size else 0.0
        active = np.flatnonzero(np.abs(d) > self.opt_tol)
        for j in active:
            bound = self.lower[j] if d[j] > 0 else self.upper[j]
            if math.isinf(bound):
                return -math.inf
            total += d[j] * bound
        return total

    # -- phase driver ------------------------------------------------------

    def solve(self) -> LpSolution:
        lp = self.lp
        n_cols = self.A.shape[1]
        if self.n_art:
            cost1 = np.zeros(n_cols)
            cost1[self.n_real:] = 1.0
            status = self.run_phase(cost1, phase=1)
            if status == "iteration_limit":
                return self._finish("iteration_limit")
            infeasibility = float(self.x[self.n_real:].sum())
            if infeasibility > self.feas_tol * (1.0 + float(np.abs(self.b).sum())):
                return self._finish("infeasible")
            self._expel_artificials()
            # Artificials are pinned at zero for phase two.
            self.lower[self.n_real:] = 0.0
            self.upper[self.n_real:] = 0.0
            self.x[self.n_real:] = 0.0
            self.x[self.basis[self.basis >= self.n_real]] = 0.0
        cost2 = np.zeros(n_cols)
        cost2[: self.n_struct] = lp.objective
        status = self.run_phase(cost2, phase=2)
        return self._finish(status)

    def _expel_artificials(self) -> None:
        for row in range(self.lp.n_rows):
            j = self.basis[row]
            if j < self.n_real:
                continue
            unit = np.zeros(self.lp.n_rows)
            unit[row] = 1.0
            pivot_row = self.AT[: self.n_real] @ self.factor.btran(unit)
            candidates = np.flatnonzero(np.abs(pivot_row) > 1e-9)
            candidates = [int(c) for c in candidates if self.vstatus[c] != _BASIC]
            if not candidates:
                continue  # redundant row; artificial stays basic at zero
            enter = candidates[0]
            w = self.factor.ftran(self._column(enter))
            self.basis[row] = enter
            self.vstatus[enter] = _BASIC
            self.vstatus[j] = _AT_LOWER
            self.x[j] = 0.0
            if abs(w[row]) < 1e-11 or not self.factor.push_eta(row, w):
                self.factor.refactor(self.basis)
            self._recompute_basics()

    def _finish(self, status: str) -> LpSolution:
        lp = self.lp
        x = np.array(self.x[: self.n_struct])
        if status in ("optimal", "iteration_limit"):
            objective = float(lp.objective @ x) if x.size else 0.0
        else:
            objective = math.nan
        cost2 = np.zeros(self.A.shape[1])
        cost2[: self.n_struct] = lp.objective
        if lp.n_rows and status in ("optimal", "iteration_limit"):
            y = self.factor.btran(cost2[self.basis])
            d = cost2 - self.AT @ y
        else:
            y = np.zeros(lp.n_rows)
            d = np.array(cost2)
        return LpSolution(
            status=status,
            x=x,
            duals=np.array(y),
            reduced_costs=np.array(d[: self.n_struct]),
            objective=objective,
            iterations=self.iterations,
        )


def _solve_unconstrained(lp: CanonicalLp) -> LpSolution:
    x = np.zeros(lp.n_vars)
    for j in range(lp.n_vars):
        c = lp.objective[j]
        if c > 0:
            if not math.isfinite(lp.lower[j]):
                return LpSolution("unbounded", x, np.zeros(0), np.array(lp.objective), math.nan)
            x[j] = lp.lower[j]
        elif c < 0:
            if not math.isfinite(lp.upper[j]):
                return LpSolution("unbounded", x, np.zeros(0), np.array(lp.objective), math.nan)
            x[j] = lp.upper[j]
        else:
            if math.isfinite(lp.lower[j]) and lp.lower[j] > 0:
                x[j] = lp.lower[j]
            elif math.isfinite(lp.upper[j]) and lp.upper[j] < 0:
                x[j] = lp.upper[j]
    objective = float(lp.objective @ x) if x.size else 0.0
    return LpSolution("optimal", x, np.zeros(0), np.array(lp.objective), objective)


def solve(
    lp: CanonicalLp,
    feas_tol: float = 1e-7,
    opt_tol: float = 1e-7,
    iteration_limit: int = 100000,
    on_iteration=None,
) -> LpSolution:
    """Solve a continuous canonical LP with the reference simplex.

    Two-phase bounded-variable revised simplex: Dantzig pricing with a
    permanent fallback to Bland's anti-cycling rule after 1000
    non-improving pivots.  Optimal solutions satisfy primal feasibility and
    strong duality within the given tolerances.  Exceeding the iteration
    limit returns the best iterate with status ``iteration_limit``.
    """
    if np.any(lp.integer):
        raise ValueError("the reference solver handles continuous LPs only; "
                         "export integer models via MPS instead")
    if lp.n_vars == 0:
        return LpSolution("optimal", np.zeros(0), np.zeros(lp.n_rows), np.zeros(0), 0.0)
    if lp.n_rows == 0:
        return _solve_unconstrained(lp)
    simplex = _Simplex(lp, feas_tol, opt_tol, iteration_limit, on_iteration)
    return simplex.solve()
