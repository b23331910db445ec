"""Dense phase-one simplex for linear feasibility ``A x = b, x >= 0``.

Problem sizes here are tiny (a few dozen rows, a couple hundred columns), so
a full tableau is fine.  Pricing is Dantzig's largest-coefficient rule; after
a run of degenerate pivots the solver switches to Bland's rule, which cannot
cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-12


class LPNumericalError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class LPResult:
    feasible: bool
    x: Optional[np.ndarray]
    phase_one_value: float
    residual: float
    iterations: int


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])


def lp_feasibility(A, b, *, tol: float = FEAS_TOL, max_iter: Optional[int] = None,
                   degenerate_switch: int = 50) -> LPResult:
    """Find ``x >= 0`` with ``A x = b`` or certify that none exists.

    Returns an :class:`LPResult`; ``feasible`` is False when the phase-one
    optimum (sum of artificials) exceeds ``tol``.
    """
    A = np.array(A, dtype=float, ndmin=2)
    b = np.array(b, dtype=float).ravel()
    m, k = A.shape
    if b.shape[0] != m:
        raise ValueError(f"A has {m} rows but b has {b.shape[0]} entries")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("A and b must be finite")
    if max_iter is None:
        max_iter = 50 * (m + k) + 1000

    flip = b < 0
    A[flip] *= -1.0
    b = np.where(flip, -b, b)

    # tableau: [A | I | b], objective row holds reduced costs of phase one
    T = np.zeros((m + 1, k + m + 1))
    T[:m, :k] = A
    T[:m, k:k + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :k] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(k, k + m))

    use_bland = False
    degenerate_run = 0
    it = 0
    while True:
        costs = T[m, :-1]
        candidates = np.flatnonzero(costs < -PIVOT_TOL)
        if candidates.size == 0:
            break
        if it >= max_iter:
            raise LPNumericalError("simplex iteration limit exceeded",
                                   residual=float(-T[m, -1]))
        col = int(candidates[0]) if use_bland else int(candidates[np.argmin(costs[candidates])])
        column = T[:m, col]
        rows = np.flatnonzero(column > PIVOT_TOL)
        if rows.size == 0:
            # unbounded direction cannot occur in phase one; treat as breakdown
            raise LPNumericalError("phase-one ray encountered", residual=float(-T[m, -1]))
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_TOL]
        if use_bland:
            row = int(min(ties, key=lambda r: basis[r]))
        else:
            row = int(ties[np.argmax(column[ties])])
        if best <= PIVOT_TOL:
            degenerate_run += 1
            if degenerate_run >= degenerate_switch:
                use_bland = True
        else:
            degenerate_run = 0
        _pivot(T, row, col)
        basis[row] = col
        it += 1

    phase_one = max(0.0, float(-T[m, -1]))
    x = np.zeros(k)
    for r, j in enumerate(basis):
        if j < k:
            x[j] = T[r, -1]
    x = np.clip(x, 0.0, None)
    residual = float(np.max(np.abs(A @ x - b))) if m else 0.0
    if phase_one > tol:
        return LPResult(False, None, phase_one, residual, it)
    if residual > tol:
        raise LPNumericalError("feasible basis does not reproduce b", residual=residual)
    return LPResult(True, x, phase_one, residual, it)
