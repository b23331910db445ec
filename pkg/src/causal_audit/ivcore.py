"""Instrumental-variable inequalities for a binary instrument and outcome.

Roles: instrument = S (``z``), treatment = D (``x``, n values), outcome = A
(``y``).  A kernel ``K[z, x, y]`` satisfies the inequalities iff

    max_x  sum_y  max_z  K(x, y | z)  <=  1,

which for binary ``z, y`` reduces to the 2n cross-stratum constraints

    K(x, 0 | z) + K(x, 1 | z') <= 1,   (z, z') in {(0, 1), (1, 0)}.

The polytope of kernels obeying them has exactly ``4n^2 - 2n`` vertices, each
the sum of one unit cell per stratum.  Every vertex is induced by a
deterministic response pair, so a convex decomposition over vertices doubles
as a response-function model reproducing the kernel.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .lp import LPNumericalError, lp_feasibility
from .tables import CategorySpace, ConditionalKernel

KERNEL_TOL = 1e-9


class RealizationError(ValueError):
    pass


@dataclass(frozen=True)
class SlackReport:
    """Slack of every cross-stratum inequality plus the max-LHS summary.

    ``slacks[x, 0]`` is ``1 - K(x,0|0) - K(x,1|1)`` and ``slacks[x, 1]`` is
    ``1 - K(x,0|1) - K(x,1|0)``.
    """

    slacks: np.ndarray
    max_lhs: float
    satisfied: bool
    tolerance: float

    @property
    def min_slack(self) -> float:
        return float(self.slacks.min())

    def tight(self, atol: float = KERNEL_TOL) -> int:
        return int(np.sum(np.abs(self.slacks) <= atol))

    def to_dict(self) -> dict:
        return {
            "max_lhs": self.max_lhs,
            "satisfied": self.satisfied,
            "tolerance": self.tolerance,
            "min_slack": self.min_slack,
            "slacks": self.slacks.tolist(),
        }


def _kernel_array(kernel) -> np.ndarray:
    if isinstance(kernel, ConditionalKernel):
        return kernel.kernel
    return np.asarray(kernel, dtype=float)


def cross_sums(K: np.ndarray) -> np.ndarray:
    """Cross-stratum sums, shape ``(..., n, 2)``; works on stacked kernels."""
    first = K[..., 0, :, 0] + K[..., 1, :, 1]
    second = K[..., 1, :, 0] + K[..., 0, :, 1]
    return np.stack([first, second], axis=-1)


def iv_slacks(kernel, tolerance: float = 0.0) -> SlackReport:
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    K = _kernel_array(kernel)
    cross = cross_sums(K)
    slacks = 1.0 - cross
    # same-stratum sums are <= 1 by row normalization; clip rounding overshoot
    same = np.minimum(K.sum(axis=2), 1.0).max()
    max_lhs = float(max(cross.max(), same))
    satisfied = bool(cross.max() <= 1.0 + tolerance)
    return SlackReport(slacks, max_lhs, satisfied, tolerance)


def iv_satisfied_batch(kernels: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
    """Vectorized ``iv_slacks(k, tolerance).satisfied`` over ``kernels[i]``."""
    cross = cross_sums(kernels)
    return np.all(cross <= 1.0 + tolerance, axis=(-2, -1))


# ---------------------------------------------------------------------------
# vertices

@dataclass(frozen=True, order=True)
class ExtremePoint:
    """Unit mass at ``(x0, y0 | z=0)`` plus unit mass at ``(x1, y1 | z=1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 == self.x1 and self.y0 != self.y1:
            raise ValueError("same treatment value requires the same outcome in both strata")

    @property
    def kind(self) -> str:
        return "diagonal" if self.x0 == self.x1 else "off-diagonal"

    @property
    def cells(self) -> Tuple[Tuple[int, int, int], Tuple[int, int, int]]:
        return ((self.x0, self.y0, 0), (self.x1, self.y1, 1))

    def kernel(self, n: int) -> np.ndarray:
        K = np.zeros((2, n, 2))
        K[0, self.x0, self.y0] = 1.0
        K[1, self.x1, self.y1] = 1.0
        return K

    def response_pair(self, n: int) -> Tuple[Tuple[int, int], Tuple[int, ...]]:
        """Deterministic ``(r1, r2)`` inducing this vertex; ``r2`` is 0 off support."""
        r2 = [0] * n
        r2[self.x0] = self.y0
        r2[self.x1] = self.y1
        return (self.x0, self.x1), tuple(r2)


def enumerate_extreme_points(n: int) -> List[ExtremePoint]:
    if int(n) != n or n < 2:
        raise ValueError(f"need an integer n >= 2, got {n!r}")
    points = []
    for x0, y0, x1, y1 in itertools.product(range(n), (0, 1), range(n), (0, 1)):
        if x0 == x1 and y0 != y1:
            continue
        points.append(ExtremePoint(x0, y0, x1, y1))
    return points


def _vertex_matrix(n: int, points: List[ExtremePoint]) -> np.ndarray:
    return np.stack([p.kernel(n).ravel() for p in points], axis=1)


# ---------------------------------------------------------------------------
# decomposition and realization

@dataclass(frozen=True)
class ConvexDecomposition:
    n: int
    weights: Dict[ExtremePoint, float]

    def reconstruct(self) -> np.ndarray:
        K = np.zeros((2, self.n, 2))
        for point, w in self.weights.items():
            K += w * point.kernel(self.n)
        return K


def decompose(kernel, *, tol: float = KERNEL_TOL) -> Optional[ConvexDecomposition]:
    """Write ``kernel`` as a mixture of extreme points, or return None."""
    K = _kernel_array(kernel)
    n = K.shape[1]
    points = enumerate_extreme_points(n)
    V = _vertex_matrix(n, points)
    A = np.vstack([V, np.ones((1, V.shape[1]))])
    b = np.concatenate([K.ravel(), [1.0]])
    result = lp_feasibility(A, b, tol=tol)
    if not result.feasible:
        return None
    lam = result.x
    total = lam.sum()
    lam = lam / total
    weights = {p: float(w) for p, w in zip(points, lam) if w > 0}
    dec = ConvexDecomposition(n, weights)
    err = float(np.max(np.abs(dec.reconstruct() - K)))
    if err > tol:
        raise LPNumericalError("decomposition does not reconstruct the kernel", residual=err)
    return dec


@dataclass(frozen=True)
class ResponseFunctionIVModel:
    """Mixture over deterministic response pairs plus an instrument law.

    ``r1`` maps the instrument value to a treatment (stored as the tuple
    ``(r1(0), r1(1))``); ``r2`` maps treatment to outcome (length-n tuple).
    """

    n: int
    p_instrument: Tuple[float, float]
    weights: Dict[Tuple[Tuple[int, int], Tuple[int, ...]], float]

    def __post_init__(self):
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"response weights sum to {total!r}")
        if abs(sum(self.p_instrument) - 1.0) > 1e-12 or min(self.p_instrument) < 0:
            raise ValueError("p_instrument must be a distribution over {0, 1}")

    def interventional_kernel(self) -> np.ndarray:
        """P(X, Y | do(Z)) as ``K[z, x, y]``."""
        K = np.zeros((2, self.n, 2))
        for (r1, r2), w in self.weights.items():
            for z in (0, 1):
                x = r1[z]
                K[z, x, r2[x]] += w
        return K


def realize(kernel, p_instrument=(0.5, 0.5), *, tol: float = KERNEL_TOL) -> ResponseFunctionIVModel:
    p_instrument = tuple(float(p) for p in p_instrument)
    if len(p_instrument) != 2 or min(p_instrument) <= 0:
        raise RealizationError("p_instrument must be strictly positive on {0, 1}")
    K = _kernel_array(kernel)
    dec = decompose(K, tol=tol)
    if dec is None:
        raise RealizationError("kernel violates the IV inequalities; no IV model induces it")
    weights: Dict = {}
    for point, w in dec.weights.items():
        key = point.response_pair(dec.n)
        weights[key] = weights.get(key, 0.0) + w
    total = sum(weights.values())
    weights = {k: v / total for k, v in weights.items()}
    return ResponseFunctionIVModel(dec.n, p_instrument, weights)


def random_kernel(n: int, rng: np.random.Generator, concentration: float = 1.0) -> ConditionalKernel:
    """Uniform (Dirichlet(1)) draw per stratum over the 2n cells."""
    K = rng.dirichlet(np.full(2 * n, concentration), size=2).reshape(2, n, 2)
    K = K / K.sum(axis=(1, 2), keepdims=True)
    return ConditionalKernel(CategorySpace.default(n), K)
