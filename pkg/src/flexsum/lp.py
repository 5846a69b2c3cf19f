"""Self-contained linear programming for dispatch and verification.

The bundled engine is a dense two-phase revised simplex with general
variable bounds.  It favors predictable behavior over raw speed: Dantzig
pricing with a switch to Bland's rule once cycling is suspected, an
iteration cap of ``50 * (rows + cols)`` per phase, and periodic
refactorization of the basis inverse.  The solver sits behind
:func:`solve` so an external engine can be substituted without touching
callers; instances whose row count exceeds ``DENSE_ROW_LIMIT`` are routed
to ``scipy.optimize.linprog`` (HiGHS) when ``engine="auto"``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = ["LinearProgram", "LpSolution", "LpStatus", "solve", "DENSE_ROW_LIMIT"]

DENSE_ROW_LIMIT = 4000

_PIVOT_TOL = 1e-9
_DUAL_TOL = 1e-9
_REFACTOR_EVERY = 100
_STALL_LIMIT = 200


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """min ``c @ x`` s.t. ``a_ub @ x <= b_ub``, ``a_eq @ x == b_eq``, ``lo <= x <= hi``.

    ``bounds`` is a sequence of ``(lo, hi)`` pairs with ``None`` for an
    absent bound; variables default to free.  ``a_ub``/``a_eq`` may be dense
    arrays or scipy sparse matrices.
    """

    c: np.ndarray
    a_ub: object = None
    b_ub: np.ndarray = None
    a_eq: object = None
    b_eq: np.ndarray = None
    bounds: tuple = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1:
            raise ValueError("objective must be one-dimensional")
        object.__setattr__(self, "c", c)
        n = c.shape[0]
        for mat_name, vec_name in (("a_ub", "b_ub"), ("a_eq", "b_eq")):
            mat = getattr(self, mat_name)
            vec = getattr(self, vec_name)
            if (mat is None) != (vec is None):
                raise ValueError(f"{mat_name} and {vec_name} must be given together")
            if vec is not None:
                vec = np.asarray(vec, dtype=float)
                if mat.shape != (vec.shape[0], n):
                    raise ValueError(
                        f"{mat_name} shape {mat.shape} inconsistent with "
                        f"{vec_name} length {vec.shape[0]} and {n} variables"
                    )
                object.__setattr__(self, vec_name, vec)
        if self.bounds is not None and len(self.bounds) != n:
            raise ValueError("bounds must list one (lo, hi) pair per variable")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        rows = 0
        if self.b_ub is not None:
            rows += self.b_ub.shape[0]
        if self.b_eq is not None:
            rows += self.b_eq.shape[0]
        return rows

    def bound_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_vars
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        if self.bounds is not None:
            for i, (bl, bh) in enumerate(self.bounds):
                lo[i] = -np.inf if bl is None else float(bl)
                hi[i] = np.inf if bh is None else float(bh)
        if np.any(lo > hi):
            raise ValueError("every lower bound must not exceed its upper bound")
        return lo, hi


@dataclass(frozen=True)
class LpSolution:
    """Solver outcome; ``x`` and ``objective_value`` are meaningful when optimal."""

    status: LpStatus
    x: np.ndarray | None = None
    objective_value: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def solve(lp: LinearProgram, engine: str = "auto") -> LpSolution:
    """Solve a linear program.

    Args:
        lp: the program.
        engine: ``"simplex"`` for the bundled engine, ``"highs"`` for
            scipy's HiGHS, or ``"auto"`` (bundled, unless the instance has
            more than ``DENSE_ROW_LIMIT`` rows and scipy is importable).

    Returns:
        An :class:`LpSolution`; mathematically meaningful outcomes are
        reported as statuses, never exceptions.
    """
    if engine == "auto":
        engine = "simplex"
        if lp.n_rows > DENSE_ROW_LIMIT and _have_scipy():
            engine = "highs"
    if engine == "simplex":
        return _solve_simplex(lp)
    if engine == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown engine {engine!r}")


def _have_scipy() -> bool:
    try:
        import scipy.optimize  # noqa: F401
    except ImportError:
        return False
    return True


def _solve_highs(lp: LinearProgram) -> LpSolution:
    from scipy.optimize import linprog

    lo, hi = lp.bound_arrays()
    bounds = [
        (None if not np.isfinite(l) else l, None if not np.isfinite(h) else h)
        for l, h in zip(lo, hi)
    ]
    res = linprog(
        lp.c,
        A_ub=lp.a_ub,
        b_ub=lp.b_ub,
        A_eq=lp.a_eq,
        b_eq=lp.b_eq,
        bounds=bounds,
        method="highs",
    )
    if res.status == 0:
        return LpSolution(LpStatus.OPTIMAL, np.asarray(res.x), float(res.fun))
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED)
    if res.status == 1:
        return LpSolution(LpStatus.ITERATION_LIMIT)
    raise RuntimeError(f"external LP engine failed: {res.message}")


# ---------------------------------------------------------------------------
# bundled engine
# ---------------------------------------------------------------------------

def _densify(mat) -> np.ndarray:
    if mat is None:
        return None
    if hasattr(mat, "toarray"):
        if mat.shape[0] * mat.shape[1] > 4.0e7:
            raise MemoryError(
                "instance too large for the dense engine; use engine='highs'"
            )
        return np.asarray(mat.toarray(), dtype=float)
    return np.asarray(mat, dtype=float)


class _Simplex:
    """Working state of the bounded-variable revised simplex."""

    def __init__(self, a, b, lo, hi):
        self.a = a            # m x N dense column matrix
        self.b = b            # m
        self.lo = lo          # N
        self.hi = hi          # N
        self.m, self.n_cols = a.shape
        self.basis = np.empty(self.m, dtype=int)
        self.in_basis = np.zeros(self.n_cols, dtype=bool)
        self.at_upper = np.zeros(self.n_cols, dtype=bool)
        self.binv = np.eye(self.m)
        self.x_basic = np.zeros(self.m)
        self.pivots_since_refactor = 0
        self._ger_buf = np.empty((self.m, self.m))

    def nonbasic_values(self) -> np.ndarray:
        vals = np.where(np.isfinite(self.lo), self.lo, 0.0)
        vals = np.where(self.at_upper, self.hi, vals)
        vals[self.in_basis] = 0.0
        return vals

    def refactor(self):
        basis_mat = self.a[:, self.basis]
        self.binv = np.linalg.inv(basis_mat)
        rhs = self.b - self.a @ self.nonbasic_values()
        self.x_basic = self.binv @ rhs
        self.pivots_since_refactor = 0

    def full_x(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basis] = self.x_basic
        return x

    def run(self, cost: np.ndarray, maxiter: int, allow_unbounded: bool) -> LpStatus:
        """Iterate until optimal; returns the terminating status."""
        m = self.m
        dual_tol = _DUAL_TOL * max(1.0, float(np.max(np.abs(cost))) if cost.size else 1.0)
        movable = self.hi - self.lo > 0
        use_bland = False
        stalled = 0

        for _ in range(maxiter):
            y = cost[self.basis] @ self.binv
            reduced = cost - y @ self.a
            can_up = movable & ~self.in_basis & ~self.at_upper & (reduced < -dual_tol)
            can_dn = movable & ~self.in_basis & (self.at_upper | ~np.isfinite(self.lo))
            can_dn &= reduced > dual_tol
            candidates = np.nonzero(can_up | can_dn)[0]
            if candidates.size == 0:
                return LpStatus.OPTIMAL

            if use_bland:
                enter = int(candidates[0])
            else:
                enter = int(candidates[np.argmax(np.abs(reduced[candidates]))])
            sigma = 1.0 if can_up[enter] else -1.0

            w = self.binv @ self.a[:, enter]
            step = np.inf
            leave_row = -1
            # own opposite bound caps the step
            enter_val = self.hi[enter] if self.at_upper[enter] else (
                self.lo[enter] if np.isfinite(self.lo[enter]) else 0.0
            )
            if sigma > 0 and np.isfinite(self.hi[enter]):
                step = self.hi[enter] - enter_val
            elif sigma < 0 and np.isfinite(self.lo[enter]):
                step = enter_val - self.lo[enter]

            sw = sigma * w
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                drop = np.where(sw > _PIVOT_TOL, (self.x_basic - lo_b) / sw, np.inf)
                rise = np.where(sw < -_PIVOT_TOL, (self.x_basic - hi_b) / sw, np.inf)
            ratios = np.minimum(drop, rise)
            ratios[~np.isfinite(ratios)] = np.inf
            ratios = np.maximum(ratios, 0.0)
            best = float(np.min(ratios)) if ratios.size else np.inf
            if best < step:
                step = best
                tied = np.nonzero(ratios <= best * (1 + 1e-12) + 1e-15)[0]
                if use_bland:
                    leave_row = int(tied[np.argmin(self.basis[tied])])
                else:
                    leave_row = int(tied[np.argmax(np.abs(sw[tied]))])

            if not np.isfinite(step):
                return LpStatus.UNBOUNDED if allow_unbounded else LpStatus.ITERATION_LIMIT

            if step <= 1e-12:
                stalled += 1
                if stalled >= _STALL_LIMIT:
                    use_bland = True
            else:
                stalled = 0

            self.x_basic -= step * sw
            if leave_row < 0:
                # bound flip, basis unchanged
                self.at_upper[enter] = sigma > 0
                continue

            leave_col = self.basis[leave_row]
            hits_upper = sw[leave_row] < 0
            self.in_basis[leave_col] = False
            self.at_upper[leave_col] = hits_upper
            self.basis[leave_row] = enter
            self.in_basis[enter] = True
            self.x_basic[leave_row] = enter_val + sigma * step
            self.at_upper[enter] = False

            piv = w[leave_row]
            new_row = self.binv[leave_row, :] / piv
            np.multiply(w[:, None], new_row[None, :], out=self._ger_buf)
            self.binv -= self._ger_buf
            self.binv[leave_row, :] = new_row

            self.pivots_since_refactor += 1
            if self.pivots_since_refactor >= _REFACTOR_EVERY:
                self.refactor()

        return LpStatus.ITERATION_LIMIT


def _solve_simplex(lp: LinearProgram) -> LpSolution:
    a_ub = _densify(lp.a_ub)
    a_eq = _densify(lp.a_eq)
    n = lp.n_vars
    lo_s, hi_s = lp.bound_arrays()

    m_ub = 0 if a_ub is None else a_ub.shape[0]
    m_eq = 0 if a_eq is None else a_eq.shape[0]
    m = m_ub + m_eq
    b = np.concatenate(
        [lp.b_ub if m_ub else np.empty(0), lp.b_eq if m_eq else np.empty(0)]
    )
    feas_tol = 1e-7 * max(1.0, float(np.max(np.abs(b))) if m else 1.0)

    if m == 0:
        # pure bound-constrained problem: each variable sits at its cheaper bound
        if np.any((lp.c > 0) & ~np.isfinite(lo_s)) or np.any((lp.c < 0) & ~np.isfinite(hi_s)):
            return LpSolution(LpStatus.UNBOUNDED)
        x = np.where(lp.c > 0, lo_s, np.where(lp.c < 0, hi_s, 0.0))
        x = np.clip(x, lo_s, hi_s)
        return LpSolution(LpStatus.OPTIMAL, x, float(lp.c @ x))

    # columns: structural | slack (ub rows) | artificials (rows whose slack
    # cannot start basic: equalities and rows with negative initial residual)
    n_slack = m_ub
    start = np.where(np.isfinite(lo_s), lo_s, 0.0)
    prefer_hi = np.isfinite(hi_s) & (~np.isfinite(lo_s) | (np.abs(hi_s) < np.abs(lo_s)))
    start = np.where(prefer_hi, hi_s, start)
    a_struct = np.vstack([blk for blk in (a_ub, a_eq) if blk is not None])
    resid = b - a_struct @ start
    art_rows = [i for i in range(m) if i >= m_ub or resid[i] < 0]
    n_art = len(art_rows)
    n_total = n + n_slack + n_art

    a = np.zeros((m, n_total))
    a[:, :n] = a_struct
    if m_ub:
        a[:m_ub, n : n + n_slack] = np.eye(m_ub)
    for j, i in enumerate(art_rows):
        a[i, n + n_slack + j] = 1.0 if resid[i] >= 0 else -1.0
    lo = np.concatenate([lo_s, np.zeros(n_slack + n_art)])
    hi = np.concatenate([hi_s, np.full(n_slack + n_art, np.inf)])

    state = _Simplex(a, b, lo, hi)
    state.at_upper[:n] = prefer_hi & np.isfinite(hi_s)
    art_of_row = {i: n + n_slack + j for j, i in enumerate(art_rows)}
    for i in range(m):
        col = art_of_row.get(i, n + i)
        state.basis[i] = col
        state.in_basis[col] = True
    state.refactor()

    maxiter = 50 * (m + n_total)

    phase1_cost = np.zeros(n_total)
    phase1_cost[n + n_slack :] = 1.0
    status = state.run(phase1_cost, maxiter, allow_unbounded=False)
    if status is LpStatus.ITERATION_LIMIT:
        return LpSolution(LpStatus.ITERATION_LIMIT)
    state.refactor()
    if float(phase1_cost @ state.full_x()) > feas_tol:
        return LpSolution(LpStatus.INFEASIBLE)

    # freeze artificials at zero for phase 2
    state.lo[n + n_slack :] = 0.0
    state.hi[n + n_slack :] = 0.0

    phase2_cost = np.zeros(n_total)
    phase2_cost[:n] = lp.c
    status = state.run(phase2_cost, maxiter, allow_unbounded=True)
    if status is LpStatus.ITERATION_LIMIT:
        return LpSolution(LpStatus.ITERATION_LIMIT)
    if status is LpStatus.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED)

    state.refactor()
    x_full = state.full_x()
    x = x_full[:n]

    # certify primal feasibility before reporting optimality
    worst = 0.0
    if m_ub:
        worst = max(worst, float(np.max(a_ub @ x - lp.b_ub)))
    if m_eq:
        worst = max(worst, float(np.max(np.abs(a_eq @ x - lp.b_eq))))
    worst = max(worst, float(np.max(lo_s - x, initial=0.0)))
    worst = max(worst, float(np.max(x - hi_s, initial=0.0)))
    if worst > 100 * feas_tol:
        raise RuntimeError(f"simplex returned a point violating constraints by {worst:.3e}")
    return LpSolution(LpStatus.OPTIMAL, x, float(lp.c @ x))
