"""Dense tableau primal simplex with Bland's anti-cycling rule.

Solves   min c'x   s.t.  A x = b,  x >= 0   from a caller-supplied starting
basis whose basic solution is feasible.  Small and deterministic; meant for
the compact phase-one pricing LPs built by the solver, not for large-scale
optimization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray
    objective: float
    duals: np.ndarray
    pivots: int


def solve_standard_form(
    c: np.ndarray,
    a_mat: np.ndarray,
    b: np.ndarray,
    basis: list[int],
    max_pivots: int = 50_000,
    tol: float = 1e-9,
) -> SimplexResult:
    """Run the primal simplex; returns primal solution and row duals.

    `basis` must index m linearly-independent columns whose basic solution
    is nonnegative.  Entering variable: smallest index with a reduced cost
    below -tol; leaving variable: ratio test with ties broken by the
    smallest basic variable index (Bland's rule, so the walk is finite).
    """
    a_mat = np.asarray(a_mat, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = a_mat.shape
    if len(basis) != m:
        raise ValueError(f"basis size {len(basis)} != row count {m}")

    tableau = np.hstack([a_mat, b.reshape(-1, 1)]).astype(float)
    basis = list(basis)

    # Canonicalize: identity under the starting basis columns.
    for i in range(m):
        col = basis[i]
        piv = tableau[i, col]
        if abs(piv) <= tol:
            swap = next(
                (r for r in range(i + 1, m) if abs(tableau[r, col]) > tol), None
            )
            if swap is None:
                raise ValueError(f"singular starting basis at column {col}")
            tableau[[i, swap]] = tableau[[swap, i]]
            basis[i], basis[swap] = basis[swap], basis[i]
            piv = tableau[i, col]
        tableau[i] /= piv
        for r in range(m):
            if r != i and abs(tableau[r, col]) > 0:
                tableau[r] -= tableau[r, col] * tableau[i]

    if np.any(tableau[:, -1] < -1e-7):
        raise ValueError("starting basis is not primal feasible")

    pivots = 0
    while pivots < max_pivots:
        cb = c[basis]
        reduced = c - cb @ tableau[:, :n]
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            return _finish(OPTIMAL, c, a_mat, tableau, basis, n, pivots)
        enter = int(candidates[0])  # Bland: smallest improving index

        col = tableau[:, enter]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            return _finish(UNBOUNDED, c, a_mat, tableau, basis, n, pivots)
        ratios = tableau[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[np.flatnonzero(ratios <= best + 1e-12)]
        leave_row = int(min(tied, key=lambda r: basis[r]))

        piv = tableau[leave_row, enter]
        tableau[leave_row] /= piv
        factors = tableau[:, enter].copy()
        factors[leave_row] = 0.0
        tableau -= np.outer(factors, tableau[leave_row])
        basis[leave_row] = enter
        pivots += 1

    return _finish(ITERATION_LIMIT, c, a_mat, tableau, basis, n, pivots)


def _finish(status, c, a_mat, tableau, basis, n, pivots) -> SimplexResult:
    m = a_mat.shape[0]
    x = np.zeros(n)
    x[basis] = tableau[:, -1]
    # y' = c_B' B^-1, recovered from the original basis matrix.
    b_mat = a_mat[:, basis]
    try:
        duals = np.linalg.solve(b_mat.T, c[basis])
    except np.linalg.LinAlgError:  # pragma: no cover - defensive
        duals = np.zeros(m)
    return SimplexResult(
        status=status,
        x=x,
        objective=float(c @ x),
        duals=duals,
        pivots=pivots,
    )
