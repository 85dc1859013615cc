"""Dense two-phase primal simplex.

Problems are stated as ``LpProblem`` (min or max, rows with LE/EQ/GE
relations, nonnegative or free variables) and converted to standard form
``min c'x, Ax = b, x >= 0, b >= 0`` on a dense tableau.  Pricing is Dantzig's
most-negative reduced cost; after ``5 * (m + n)`` degenerate pivots the solver
switches to Bland's rule for the rest of the solve, which guarantees
termination.

Tall problems (many more rows than columns, e.g. grid-discretised hedging
constraints) are solved through their LP dual when ``method="auto"``; the
primal solution is then read off the dual's optimal multipliers.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg.blas import dger

PIVOT_TOL = 1e-10
OPT_TOL = 1e-9
FEAS_TOL = 1e-7
HARRIS_TOL = 1e-11


class Sense(str, enum.Enum):
    MIN = "min"
    MAX = "max"


class Rel(str, enum.Enum):
    LE = "<="
    EQ = "=="
    GE = ">="


class Bound(str, enum.Enum):
    NONNEG = "nonneg"
    FREE = "free"


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpProblem:
    """A dense LP.  ``A`` has one row per constraint; ``rel`` and ``b`` align."""

    sense: Sense
    c: np.ndarray
    A: np.ndarray
    rel: list
    b: np.ndarray
    bounds: Optional[list] = None

    def __post_init__(self):
        self.sense = Sense(self.sense)
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if n else np.zeros((len(self.rel), 0))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.rel = [Rel(r) for r in self.rel]
        if self.bounds is None:
            self.bounds = [Bound.NONNEG] * n
        self.bounds = [Bound(v) for v in self.bounds]
        m = self.A.shape[0]
        if len(self.rel) != m or self.b.size != m:
            raise ValueError(f"row count mismatch: A has {m} rows, rel {len(self.rel)}, b {self.b.size}")
        if len(self.bounds) != n:
            raise ValueError(f"bounds has {len(self.bounds)} entries for {n} variables")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("right-hand side must be finite")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpSolution:
    status: Status
    x: Optional[np.ndarray] = None
    value: float = float("nan")
    duals: Optional[np.ndarray] = None  # d value / d b_i
    iterations: int = 0
    method: str = "primal"
    tableau: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def max_violation(lp: LpProblem, x: np.ndarray) -> float:
    """Largest constraint violation of ``x`` after scaling rows to unit max-abs."""
    if lp.A.shape[0] == 0:
        viol = 0.0
    else:
        scale = np.abs(lp.A).max(axis=1)
        scale[scale == 0] = 1.0
        r = (lp.A @ x - lp.b) / scale
        viol = 0.0
        for rel, v in zip(lp.rel, r):
            if rel is Rel.LE:
                viol = max(viol, v)
            elif rel is Rel.GE:
                viol = max(viol, -v)
            else:
                viol = max(viol, abs(v))
    nonneg = np.array([bd is Bound.NONNEG for bd in lp.bounds], dtype=bool)
    if nonneg.any():
        viol = max(viol, float(-x[nonneg].min()))
    return float(viol)


class _Tableau:
    """Standard-form tableau with an objective row of reduced costs."""

    def __init__(self, T, basis, n_struct, n_art_start, init_col):
        self.T = T  # shape (m + 1, ncols + 1); last row = reduced costs, last col = rhs
        self.basis = basis
        self.n_struct = n_struct
        self.art_start = n_art_start
        self.init_col = init_col
        self.iterations = 0
        self.orig = np.array(T[:-1], order="F")  # constraint rows as built, for refactorisation
        self.cost = None

    @property
    def m(self):
        return self.T.shape[0] - 1

    def set_costs(self, cost):
        m = self.m
        T = self.T
        self.cost = cost
        T[m, :-1] = cost
        T[m, -1] = 0.0
        cb = cost[self.basis]
        # reduced costs d = c - c_B B^-1 A ; objective cell holds -c_B x_B
        T[m, :] -= cb @ T[:m, :]

    def pivot(self, r, q):
        T = self.T
        T[r] /= T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        # in-place rank-one update on the Fortran-ordered tableau
        self.T = T = dger(-1.0, col, T[r], a=T, overwrite_a=1)
        T[r, q] = 1.0
        self.basis[r] = q
        self.iterations += 1

    def refactor(self):
        """Rebuild the tableau from the original rows and the current basis."""
        m = self.m
        B = self.orig[:, self.basis]
        self.T[:m] = np.linalg.solve(B, self.orig)
        self.T[np.arange(m), self.basis] = 1.0
        self.set_costs(self.cost)

    def run(self, allowed: np.ndarray, max_iter: int) -> Status:
        m = self.m
        T = self.T
        ncols = T.shape[1] - 1
        degenerate = 0
        bland = False
        limit = 5 * (m + ncols)
        fresh = False
        for _ in range(max_iter):
            d = T[m, :-1]
            cand = np.nonzero(allowed & (d < -OPT_TOL))[0]
            if cand.size == 0:
                return Status.OPTIMAL
            q = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            colq = T[:m, q]
            rows = np.nonzero(colq > PIVOT_TOL)[0]
            if rows.size == 0:
                if fresh:
                    return Status.UNBOUNDED
                # an unbounded ray on a drifted tableau is confirmed only after refactorising
                self.refactor()
                T = self.T
                fresh = True
                continue
            rhs = T[rows, -1]
            ratios = rhs / colq[rows]
            if bland:
                best = ratios.min()
                ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                # Harris: widest step within a small slack, then the largest pivot among those rows
                step = np.min((np.maximum(rhs, 0.0) + HARRIS_TOL) / colq[rows])
                ok = rows[ratios <= step]
                r = int(ok[np.argmax(colq[ok])])
            if T[r, -1] <= 1e-12:
                degenerate += 1
                if degenerate > limit:
                    bland = True
            self.pivot(r, q)
            T = self.T
            np.maximum(T[:m, -1], 0.0, out=T[:m, -1])
            fresh = False
        raise RuntimeError(f"simplex did not terminate within {max_iter} iterations")


def _standard_form(lp: LpProblem):
    """Return (A, b, c, col_map, row_factor) of the standard-form problem.

    ``col_map`` lists, per structural column, (original index, sign) and
    ``row_factor[i]`` is the multiplier applied to original row ``i``.
    """
    m, n = lp.A.shape
    cols = []
    col_map = []
    cost = []
    sgn = -1.0 if lp.sense is Sense.MAX else 1.0
    for j in range(n):
        cols.append(lp.A[:, j])
        col_map.append((j, 1.0))
        cost.append(sgn * lp.c[j])
        if lp.bounds[j] is Bound.FREE:
            cols.append(-lp.A[:, j])
            col_map.append((j, -1.0))
            cost.append(-sgn * lp.c[j])
    A = np.column_stack(cols) if cols else np.zeros((m, 0))
    b = lp.b.copy()
    scale = np.abs(A).max(axis=1) if A.shape[1] else np.zeros(m)
    scale[scale == 0] = 1.0
    A = A / scale[:, None]
    b = b / scale
    slack = np.zeros((m, m))
    has_slack = np.zeros(m, dtype=bool)
    for i, rel in enumerate(lp.rel):
        if rel is Rel.LE:
            slack[i, i] = 1.0
            has_slack[i] = True
        elif rel is Rel.GE:
            slack[i, i] = -1.0
            has_slack[i] = True
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    slack[flip] *= -1.0
    keep = has_slack
    slack = slack[:, keep]
    row_factor = np.where(flip, -1.0, 1.0) / scale
    return A, slack, b, np.array(cost), col_map, row_factor


def _solve_primal(lp: LpProblem, max_iter: Optional[int] = None, keep_tableau: bool = False) -> LpSolution:
    m, n = lp.A.shape
    A, S, b, cost, col_map, row_factor = _standard_form(lp)
    ns = A.shape[1]
    nslack = S.shape[1]
    # rows whose slack has +1 can start with the slack basic
    init_col = np.full(m, -1, dtype=int)
    for k in range(nslack):
        i = int(np.nonzero(S[:, k])[0][0])
        if S[i, k] > 0:
            init_col[i] = ns + k
    need_art = np.nonzero(init_col < 0)[0]
    nart = need_art.size
    ncols = ns + nslack + nart
    T = np.zeros((m + 1, ncols + 1), order="F")
    T[:m, :ns] = A
    T[:m, ns:ns + nslack] = S
    for k, i in enumerate(need_art):
        T[i, ns + nslack + k] = 1.0
        init_col[i] = ns + nslack + k
    T[:m, -1] = b
    basis = init_col.copy()
    tab = _Tableau(T, basis, ns + nslack, ns + nslack, init_col)
    max_iter = max_iter or 50 * (m + ncols) + 1000
    art_start = ns + nslack

    if nart:
        c1 = np.zeros(ncols)
        c1[art_start:] = 1.0
        tab.set_costs(c1)
        tab.run(np.ones(ncols, dtype=bool), max_iter)
        T = tab.T
        infeas = -T[m, -1]
        if infeas > OPT_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpSolution(Status.INFEASIBLE, iterations=tab.iterations)
        # drive zero-level artificials out of the basis where possible
        for r in range(m):
            if tab.basis[r] >= art_start:
                row = T[r, :art_start]
                nz = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
                if nz.size:
                    tab.pivot(r, int(nz[np.argmax(np.abs(row[nz]))]))
                    T = tab.T
                # otherwise the row is redundant; its artificial stays basic at zero

    c2 = np.zeros(ncols)
    c2[:ns] = cost
    tab.set_costs(c2)
    allowed = np.zeros(ncols, dtype=bool)
    allowed[:art_start] = True
    status = tab.run(allowed, max_iter)
    T = tab.T
    if status is Status.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, iterations=tab.iterations)

    xs = np.zeros(ncols)
    xs[tab.basis] = T[:m, -1]
    x = np.zeros(n)
    for k, (j, s) in enumerate(col_map):
        x[j] += s * xs[k]
    y_std = -T[m, init_col]
    duals = y_std * row_factor
    value = float(lp.c @ x)
    if lp.sense is Sense.MAX:
        duals = -duals
    return LpSolution(Status.OPTIMAL, x=x, value=value, duals=duals, iterations=tab.iterations,
                      method="primal", tableau=T.copy() if keep_tableau else None)


def dual_problem(lp: LpProblem):
    """The LP dual of ``lp``.  Rows of the dual correspond to variables of ``lp``.

    For a min problem the dual is ``max b'y`` with ``A_j'y <= c_j`` for
    nonnegative ``x_j`` and ``= c_j`` for free ``x_j``; multipliers of GE rows
    are nonnegative, of LE rows nonpositive (stored negated), of EQ rows free.
    A max problem is dualised through ``max c'x = -min (-c)'x``.
    """
    m, n = lp.A.shape
    sgn = 1.0 if lp.sense is Sense.MIN else -1.0
    c = sgn * lp.c
    colsign = np.ones(m)
    bounds = []
    for i, rel in enumerate(lp.rel):
        if rel is Rel.GE:
            bounds.append(Bound.NONNEG)
        elif rel is Rel.LE:
            colsign[i] = -1.0
            bounds.append(Bound.NONNEG)
        else:
            bounds.append(Bound.FREE)
    At = (lp.A * colsign[:, None]).T
    rel = [Rel.LE if bd is Bound.NONNEG else Rel.EQ for bd in lp.bounds]
    return LpProblem(Sense.MAX, lp.b * colsign, At, rel, c, bounds), colsign, sgn


def _solve_via_dual(lp: LpProblem, max_iter=None) -> LpSolution:
    dlp, colsign, sgn = dual_problem(lp)
    dsol = _solve_primal(dlp, max_iter)
    if dsol.status is Status.UNBOUNDED:
        return LpSolution(Status.INFEASIBLE, iterations=dsol.iterations, method="dual")
    if dsol.status is Status.INFEASIBLE:
        # primal is unbounded or infeasible; settle it on the primal side
        sol = _solve_primal(lp, max_iter)
        sol.iterations += dsol.iterations
        return sol
    x = dsol.duals.copy()
    y = dsol.x * colsign
    value = float(lp.c @ x)
    duals = sgn * y
    sol = LpSolution(Status.OPTIMAL, x=x, value=value, duals=duals,
                     iterations=dsol.iterations, method="dual")
    return sol


def solve(lp: LpProblem, method: str = "auto", max_iter: Optional[int] = None,
          dump_tableau: Optional[str] = None) -> LpSolution:
    """Solve ``lp``.

    ``method`` is ``"primal"``, ``"dual"`` or ``"auto"``; ``auto`` dualises when
    the problem has more than twice as many rows as columns.  Infeasible and
    unbounded problems are reported through ``status``, not raised.
    """
    m, n = lp.A.shape
    if method == "auto":
        method = "dual" if m > 2 * (n + 1) else "primal"
    if method == "dual":
        sol = _solve_via_dual(lp, max_iter)
        if sol.optimal and max_violation(lp, sol.x) > FEAS_TOL:
            # recovered multipliers lost accuracy; fall back to the direct route
            sol = _solve_primal(lp, max_iter)
    elif method == "primal":
        sol = _solve_primal(lp, max_iter, keep_tableau=dump_tableau is not None)
    else:
        raise ValueError(f"unknown method {method!r}")
    if dump_tableau is not None:
        tab = sol.tableau
        if tab is None:
            tab = _solve_primal(lp, max_iter, keep_tableau=True).tableau
        if tab is not None:
            with open(dump_tableau, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                for row in tab:
                    w.writerow([format(v, ".17g") for v in row])
    return sol


def make_lp(sense, c, rows: Sequence, bounds=None) -> LpProblem:
    """Build an ``LpProblem`` from ``(coefficients, relation, rhs)`` triples."""
    c = np.asarray(c, dtype=float)
    if rows:
        A = np.array([np.asarray(r[0], dtype=float) for r in rows])
        rel = [r[1] for r in rows]
        b = [r[2] for r in rows]
    else:
        A = np.zeros((0, c.size))
        rel, b = [], []
    for r in rows:
        if len(r[0]) != c.size:
            raise ValueError("row length does not match objective length")
    return LpProblem(sense, c, A, rel, b, bounds)
