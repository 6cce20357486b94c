"""Dense linear programming kernel.

Two-phase primal simplex with Bland's anti-cycling rule on a dense tableau.
Every optimal solve is certified: primal feasibility, dual feasibility and the
duality gap are checked against the requested tolerance and a
:class:`~conic_pricer.errors.ComputationError` is raised if certification
fails, so a wrong status is never returned silently.

An exact-rational mode (``exact=True``) runs the same pivoting over
``fractions.Fraction`` entries; it is slow and intended for dispute resolution
in tests.

The linear-fractional entry point :func:`solve_ratio` applies the
Charnes-Cooper transformation (scale the variables, pin the denominator to 1,
add a nonnegative scale variable) and de-homogenizes the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import ComputationError, ValidationError

DEFAULT_TOL = 1e-9


@dataclass
class LinearProgram:
    """max/min  c @ x  subject to  a_ub @ x <= b_ub,  a_eq @ x == b_eq,
    0 <= x <= upper (upper optional, may contain +inf)."""

    sense: str
    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    upper: Optional[np.ndarray] = None

    @classmethod
    def build(cls, sense, c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, upper=None):
        if sense not in ("max", "min"):
            raise ValidationError(f"sense must be 'max' or 'min', got {sense!r}")
        c = np.atleast_1d(np.asarray(c, dtype=float))
        n = c.shape[0]
        a_ub = np.zeros((0, n)) if a_ub is None else np.atleast_2d(np.asarray(a_ub, float))
        b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, float))
        a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, float))
        b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, float))
        if a_ub.shape != (b_ub.shape[0], n) or a_eq.shape != (b_eq.shape[0], n):
            raise ValidationError("inconsistent LP dimensions")
        for name, arr in (("c", c), ("a_ub", a_ub), ("b_ub", b_ub),
                          ("a_eq", a_eq), ("b_eq", b_eq)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite coefficients in {name}")
        if upper is not None:
            upper = np.atleast_1d(np.asarray(upper, dtype=float))
            if upper.shape != (n,):
                raise ValidationError("upper bounds must have one entry per variable")
            if np.any(np.isnan(upper)) or np.any(upper < 0):
                raise ValidationError("upper bounds must be nonnegative (inf allowed)")
        return cls(sense, c, a_ub, b_ub, a_eq, b_eq, upper)


@dataclass
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: float = np.nan
    x: Optional[np.ndarray] = None
    dual_ub: Optional[np.ndarray] = None
    dual_eq: Optional[np.ndarray] = None
    dual_upper: Optional[np.ndarray] = None
    gap: float = np.nan
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    iterations: int = 0


def _pivot(T, basis, row, col):
    piv = T[row, col]
    T[row, :] = T[row, :] / piv
    for i in range(T.shape[0]):
        if i != row:
            factor = T[i, col]
            if factor != 0:
                T[i, :] = T[i, :] - factor * T[row, :]
    basis[row] = col


def _run_simplex(T, basis, blocked, tol, max_iter):
    """Bland's rule on tableau T (last row = reduced costs, last col = rhs).

    Returns ("optimal" | "unbounded", iterations).
    """
    m = T.shape[0] - 1
    width = T.shape[1] - 1
    it = 0
    while True:
        enter = -1
        zrow = T[-1]
        for j in range(width):
            if j in blocked:
                continue
            if zrow[j] < -tol:
                enter = j
                break
        if enter < 0:
            return "optimal", it
        leave, best_ratio, best_basis = -1, None, None
        for i in range(m):
            a = T[i, enter]
            if a > tol:
                ratio = T[i, -1] / a
                if best_ratio is None or ratio < best_ratio or (
                    ratio == best_ratio and basis[i] < best_basis
                ):
                    leave, best_ratio, best_basis = i, ratio, basis[i]
        if leave < 0:
            return "unbounded", it
        _pivot(T, basis, leave, enter)
        it += 1
        if it > max_iter:
            raise ComputationError(
                f"simplex iteration limit ({max_iter}) exceeded; numerical breakdown"
            )


def _to_fraction_array(arr):
    out = np.empty(arr.shape, dtype=object)
    flat_in = arr.ravel()
    flat_out = out.ravel()
    for k, v in enumerate(flat_in):
        flat_out[k] = Fraction(float(v))
    return out


def solve(
    lp: LinearProgram,
    *,
    tol: float = DEFAULT_TOL,
    exact: bool = False,
    max_iter: Optional[int] = None,
) -> LPSolution:
    """Solve the LP, certifying optimal answers by strong duality."""
    n = lp.c.shape[0]
    sense_mult = 1.0 if lp.sense == "max" else -1.0
    c_obj = sense_mult * lp.c

    # Fold finite variable upper bounds in as extra <= rows.
    ub_rows = []
    ub_rhs = []
    ub_vars = []
    if lp.upper is not None:
        for i, u in enumerate(lp.upper):
            if np.isfinite(u):
                row = np.zeros(n)
                row[i] = 1.0
                ub_rows.append(row)
                ub_rhs.append(u)
                ub_vars.append(i)
    n_orig_ub = lp.a_ub.shape[0]
    a_ub = np.vstack([lp.a_ub] + ub_rows) if ub_rows else lp.a_ub
    b_ub = np.concatenate([lp.b_ub, np.asarray(ub_rhs)]) if ub_rows else lp.b_ub

    m_ub, m_eq = a_ub.shape[0], lp.a_eq.shape[0]
    m = m_ub + m_eq

    # Normalized rows: [A | slack | artificial | rhs], rhs >= 0.
    A = np.vstack([a_ub, lp.a_eq]) if m else np.zeros((0, n))
    b = np.concatenate([b_ub, lp.b_eq]) if m else np.zeros(0)

    # Row equilibration keeps mixed-magnitude rows (e.g. wide density bands)
    # well conditioned; duals are rescaled back below.
    row_scale = np.ones(m)
    for i in range(m):
        s = float(np.max(np.abs(A[i]))) if n else 0.0
        if s > 0:
            row_scale[i] = s
            A[i] = A[i] / s
            b[i] = b[i] / s
    sigma = np.ones(m)
    slack = np.zeros((m, m_ub))
    for i in range(m_ub):
        slack[i, i] = 1.0
    for i in range(m):
        if b[i] < 0:
            sigma[i] = -1.0
            A[i] = -A[i]
            b[i] = -b[i]
            if i < m_ub:
                slack[i, i] = -1.0

    # Artificial columns only where the slack cannot start the basis: equality
    # rows and sign-flipped inequality rows (surplus form).  This keeps
    # phase 1 small and far less degenerate.
    needs_art = [i >= m_ub or sigma[i] < 0 for i in range(m)]
    art_of: dict[int, int] = {}
    n_art = 0
    for i in range(m):
        if needs_art[i]:
            art_of[i] = n + m_ub + n_art
            n_art += 1
    width = n + m_ub + n_art  # + rhs column appended below
    full = np.zeros((m + 1, width + 1))
    if m:
        full[:m, :n] = A
        full[:m, n : n + m_ub] = slack
        for i, col in art_of.items():
            full[i, col] = 1.0
        full[:m, -1] = b
    art_cols = set(art_of.values())
    full0 = full.copy()  # pristine scaled rows, for fresh dual recovery

    if exact:
        T = _to_fraction_array(full)
        zero = Fraction(0)
        piv_tol = zero
    else:
        T = full
        zero = 0.0
        piv_tol = tol

    basis = [art_of[i] if needs_art[i] else n + i for i in range(m)]
    if max_iter is None:
        max_iter = 500 + 80 * (m + width)

    it1 = 0
    if n_art:
        # Phase 1: maximize -(sum of artificials).
        c1 = np.zeros(width, dtype=object if exact else float)
        for j in art_cols:
            c1[j] = Fraction(-1) if exact else -1.0
        T[-1, :width] = -c1
        T[-1, -1] = zero
        for i, bi in enumerate(basis):
            if c1[bi] != 0:
                T[-1, :] = T[-1, :] + c1[bi] * T[i, :]
        status1, it1 = _run_simplex(T, basis, set(), piv_tol, max_iter)
        phase1_val = T[-1, -1]
        feas_tol = zero if exact else max(tol, 1e-9)
        if status1 != "optimal" or phase1_val < -feas_tol:
            return LPSolution(status="infeasible", iterations=it1)

    # Drive remaining basic artificials out; drop redundant rows.
    drop_rows = []
    for i in range(len(basis)):
        if basis[i] in art_cols:
            done = False
            for j in range(n + m_ub):
                if abs(T[i, j]) > (piv_tol if not exact else 0):
                    _pivot(T, basis, i, j)
                    done = True
                    break
            if not done:
                drop_rows.append(i)
    if drop_rows:
        keep = [i for i in range(len(basis)) if i not in drop_rows]
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[i] for i in keep]

    # Phase 2 objective.
    c2 = np.zeros(width, dtype=object if exact else float)
    for j in range(n):
        c2[j] = Fraction(float(c_obj[j])) if exact else c_obj[j]
    T[-1, :width] = -c2
    T[-1, -1] = zero
    for i, bi in enumerate(basis):
        if c2[bi] != 0:
            T[-1, :] = T[-1, :] + c2[bi] * T[i, :]
    blocked = set(art_cols)
    status2, it2 = _run_simplex(T, basis, blocked, piv_tol, max_iter)
    if status2 == "unbounded":
        return LPSolution(status="unbounded", iterations=it1 + it2)

    x_full = np.zeros(width, dtype=object if exact else float)
    nrows = T.shape[0] - 1
    for i in range(nrows):
        x_full[basis[i]] = T[i, -1]
    x = np.array([float(v) for v in x_full[:n]])
    value_max = float(T[-1, -1])

    # Row duals, recomputed fresh from the final basis (the maintained
    # objective row can drift over many pivots): y solves B^T y = c_B over the
    # pristine scaled rows; dropped redundant rows carry dual zero.
    alive = [i for i in range(m) if i not in drop_rows]
    y_norm = np.zeros(m)
    if alive:
        if exact:
            for pos, i in enumerate(alive):
                col = art_of.get(i, n + i)
                y_norm[i] = float(T[-1, col])
        else:
            basis_mat = full0[np.ix_(alive, basis)]
            cb = np.array([c2[j] for j in basis])
            try:
                y_alive = np.linalg.solve(basis_mat.T, cb)
                for _ in range(2):  # iterative refinement against conditioning
                    resid = cb - basis_mat.T @ y_alive
                    y_alive = y_alive + np.linalg.solve(basis_mat.T, resid)
            except np.linalg.LinAlgError:
                y_alive, *_ = np.linalg.lstsq(basis_mat.T, cb, rcond=None)
            for pos, i in enumerate(alive):
                y_norm[i] = float(y_alive[pos])
    # duals of the rows as supplied (all-<= + eq), max sense
    y = sigma * y_norm / row_scale

    y_ub_all = y[:m_ub]
    y_eq = y[m_ub:]
    y_ub = y_ub_all[:n_orig_ub]
    y_upper = np.zeros(n)
    for k, var in enumerate(ub_vars):
        y_upper[var] = y_ub_all[n_orig_ub + k]

    # Certification in max space; residuals are relative to the magnitudes
    # entering each row/column so badly scaled data certify honestly.
    primal_res = float(np.max(-x)) if n else 0.0
    ax_abs = np.abs(a_ub) @ np.abs(x) if m_ub else np.zeros(0)
    for i in range(m_ub):
        primal_res = max(
            primal_res,
            float(a_ub[i] @ x - b_ub[i]) / (1.0 + abs(b_ub[i]) + ax_abs[i]),
        )
    if m_eq:
        aeqx_abs = np.abs(lp.a_eq) @ np.abs(x)
        for i in range(m_eq):
            primal_res = max(
                primal_res,
                abs(float(lp.a_eq[i] @ x - lp.b_eq[i]))
                / (1.0 + abs(lp.b_eq[i]) + aeqx_abs[i]),
            )
    reduced = c_obj.copy()
    reduced_scale = 1.0 + np.abs(c_obj)
    if m_ub:
        reduced -= a_ub.T @ y_ub_all
        reduced_scale += np.abs(a_ub.T) @ np.abs(y_ub_all)
    if m_eq:
        reduced -= lp.a_eq.T @ y_eq
        reduced_scale += np.abs(lp.a_eq.T) @ np.abs(y_eq)
    dual_res = float(np.max(reduced / reduced_scale)) if n else 0.0
    if m_ub:
        dual_res = max(dual_res, float(np.max(-y_ub_all)) / (1.0 + float(np.max(np.abs(y_ub_all)))))
    dual_res = max(dual_res, 0.0)
    dual_value = float(b_ub @ y_ub_all if m_ub else 0.0) + float(
        lp.b_eq @ y_eq if m_eq else 0.0
    )
    dual_mass = (
        float(np.abs(b_ub) @ np.abs(y_ub_all)) if m_ub else 0.0
    ) + (float(np.abs(lp.b_eq) @ np.abs(y_eq)) if m_eq else 0.0)
    gap = abs(value_max - dual_value) / (1.0 + abs(value_max) + dual_mass)
    if primal_res > tol or dual_res > tol or gap > tol:
        if not exact:
            # Tableau drift can park the float path at a near-optimal basis;
            # the rational path has no drift and re-certifies from scratch.
            return solve(lp, tol=tol, exact=True, max_iter=max_iter)
        raise ComputationError(
            "LP certification failed: "
            f"primal={primal_res:.3e} dual={dual_res:.3e} gap={gap:.3e} (tol {tol:.3e})"
        )

    value = sense_mult * value_max
    return LPSolution(
        status="optimal",
        value=value,
        x=x,
        dual_ub=sense_mult * y_ub,
        dual_eq=sense_mult * y_eq,
        dual_upper=sense_mult * y_upper,
        gap=gap,
        primal_residual=primal_res,
        dual_residual=dual_res,
        iterations=it1 + it2,
    )


@dataclass
class RatioSolution:
    value: float
    x: np.ndarray
    scale: float
    lp_solution: LPSolution = field(repr=False, default=None)


def solve_ratio(
    num,
    den,
    *,
    num0: float = 0.0,
    den0: float = 0.0,
    a_ub=None,
    b_ub=None,
    a_eq=None,
    b_eq=None,
    upper=None,
    sense: str = "max",
    tol: float = DEFAULT_TOL,
) -> RatioSolution:
    """Optimize (num @ x + num0) / (den @ x + den0) over the LP feasible set.

    The caller must guarantee the denominator is strictly positive on the
    feasible set.  Charnes-Cooper: with y = s*x, s >= 0, constraints become
    homogeneous in (y, s) and the denominator is pinned to 1.
    """
    num = np.atleast_1d(np.asarray(num, dtype=float))
    den = np.atleast_1d(np.asarray(den, dtype=float))
    n = num.shape[0]
    if den.shape[0] != n:
        raise ValidationError("numerator/denominator dimension mismatch")
    a_ub = np.zeros((0, n)) if a_ub is None else np.atleast_2d(np.asarray(a_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, float))
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, float))
    rows_ub = []
    rhs_ub = []
    if a_ub.shape[0]:
        rows_ub.append(np.hstack([a_ub, -b_ub[:, None]]))
        rhs_ub.append(np.zeros(a_ub.shape[0]))
    if upper is not None:
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        for i, u in enumerate(upper):
            if np.isfinite(u):
                row = np.zeros(n + 1)
                row[i] = 1.0
                row[n] = -u
                rows_ub.append(row[None, :])
                rhs_ub.append(np.zeros(1))
    rows_eq = [np.hstack([den, [den0]])[None, :]]
    rhs_eq = [np.ones(1)]
    if a_eq.shape[0]:
        rows_eq.append(np.hstack([a_eq, -b_eq[:, None]]))
        rhs_eq.append(np.zeros(a_eq.shape[0]))
    prog = LinearProgram.build(
        sense,
        np.hstack([num, [num0]]),
        a_ub=np.vstack(rows_ub) if rows_ub else None,
        b_ub=np.concatenate(rhs_ub) if rows_ub else None,
        a_eq=np.vstack(rows_eq),
        b_eq=np.concatenate(rhs_eq),
    )
    sol = solve(prog, tol=tol)
    if sol.status != "optimal":
        raise ComputationError(f"fractional program not solvable: LP status {sol.status}")
    s = float(sol.x[n])
    if s <= tol:
        raise ComputationError("denominator degenerate: zero scale at optimum")
    return RatioSolution(value=float(sol.value), x=sol.x[:n] / s, scale=s, lp_solution=sol)
