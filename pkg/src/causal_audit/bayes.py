"""Bayesian model selection between 'IV inequalities hold' and 'violated'.

The two hypotheses partition the simplex and share a Dirichlet prior, so
their truncation constants cancel: sampling the untruncated conjugate
posterior and counting how often a draw satisfies the inequalities gives a
Binomial(n, P(M0 | data)) count, from which a Clopper-Pearson interval
follows.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import special

from .ivcore import iv_satisfied_batch
from .tables import CategorySpace, ContingencyTable3, JointDistribution

CHUNK = 1 << 16
QUANTILE_TOL = 1e-12


@dataclass(frozen=True)
class DirichletSpec:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 3 or alpha.shape[0] != 2 or alpha.shape[2] != 2:
            raise ValueError(f"alpha must have shape (2, n, 2), got {alpha.shape}")
        if not np.all(alpha > 0) or not np.all(np.isfinite(alpha)):
            raise ValueError("Dirichlet parameters must be positive and finite")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def symmetric(cls, alpha: float, n: int) -> "DirichletSpec":
        return cls(np.full((2, n, 2), float(alpha)))


@dataclass(frozen=True)
class BayesReport:
    n_samples: int
    n_satisfying: int
    point_estimate: float
    ci: Tuple[float, float]
    level: float
    seed: int
    tolerance: float
    alpha: float = float("nan")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci"] = list(self.ci)
        out["violations"] = self.n_samples - self.n_satisfying
        return out


def posterior_params(table: ContingencyTable3, prior: DirichletSpec) -> DirichletSpec:
    if prior.alpha.shape != table.counts.shape:
        raise ValueError(f"prior shape {prior.alpha.shape} does not match table {table.counts.shape}")
    return DirichletSpec(prior.alpha + table.counts)


def _draw(alpha: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` Dirichlet draws via normalized unit-scale Gamma variates.

    Draws whose Gamma variates all underflow, or that leave a whole S stratum
    at zero, are redrawn.
    """
    g = rng.standard_gamma(np.broadcast_to(alpha, (size,) + alpha.shape))
    while True:
        strata = g.sum(axis=(-2, -1))
        bad = np.any(strata <= 0, axis=-1)
        if not bad.any():
            break
        g[bad] = rng.standard_gamma(np.broadcast_to(alpha, (int(bad.sum()),) + alpha.shape))
    return g / g.sum(axis=(-3, -2, -1), keepdims=True)


def sample_simplex(params: DirichletSpec, seed, size: int = None):
    """One Dirichlet draw as a JointDistribution (or ``size`` raw draws)."""
    rng = np.random.default_rng(seed)
    if size is None:
        theta = _draw(params.alpha, 1, rng)[0]
        return JointDistribution(CategorySpace.default(params.alpha.shape[1]), theta)
    return _draw(params.alpha, size, rng)


def _count_satisfying(alpha: np.ndarray, n: int, seed: int, tolerance: float) -> int:
    hits = 0
    for chunk, start in enumerate(range(0, n, CHUNK)):
        size = min(CHUNK, n - start)
        rng = np.random.default_rng([int(seed), chunk])
        theta = _draw(alpha, size, rng)
        kernels = theta / theta.sum(axis=(2, 3), keepdims=True)
        hits += int(iv_satisfied_batch(kernels, tolerance).sum())
    return hits


def _beta_quantile(q: float, a: float, b: float) -> float:
    lo, hi = 0.0, 1.0
    while hi - lo > QUANTILE_TOL:
        mid = 0.5 * (lo + hi)
        if special.betainc(a, b, mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def clopper_pearson(x: int, n: int, level: float = 0.95) -> Tuple[float, float]:
    """Exact two-sided binomial interval for ``x`` successes in ``n`` trials."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if int(x) != x or not 0 <= x <= n:
        raise ValueError(f"x must be an integer in [0, n], got {x!r}")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    x, n = int(x), int(n)
    tail = (1.0 - level) / 2.0
    if x == 0:
        lower = 0.0
    elif x == n:
        lower = tail ** (1.0 / n)
    else:
        lower = _beta_quantile(tail, x, n - x + 1)
    if x == n:
        upper = 1.0
    elif x == 0:
        upper = -math.expm1(math.log(tail) / n)
    else:
        upper = _beta_quantile(1.0 - tail, x + 1, n - x)
    return lower, upper


def posterior_model_probability(table: ContingencyTable3, prior: DirichletSpec, n: int = 10**6,
                                level: float = 0.95, seed: int = 0, tolerance: float = 0.0) -> BayesReport:
    if n < 1:
        raise ValueError("need at least one posterior sample")
    post = posterior_params(table, prior)
    hits = _count_satisfying(post.alpha, n, seed, tolerance)
    alpha = prior.alpha.flat[0] if np.all(prior.alpha == prior.alpha.flat[0]) else float("nan")
    return BayesReport(
        n_samples=n,
        n_satisfying=hits,
        point_estimate=hits / n,
        ci=clopper_pearson(hits, n, level),
        level=level,
        seed=int(seed),
        tolerance=tolerance,
        alpha=float(alpha),
    )


def sub_seed(seed: int, index: int) -> int:
    """Seed for the ``index``-th prior in a sweep, derived from the base seed."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def prior_sweep(table: ContingencyTable3, alphas: Sequence[float], n: int = 10**5,
                level: float = 0.95, seed: int = 0, tolerance: float = 0.0) -> List[BayesReport]:
    alphas = list(alphas)
    if not alphas:
        raise ValueError("alphas must be non-empty")
    seeds = [seed] if len(alphas) == 1 else [sub_seed(seed, i) for i in range(len(alphas))]
    return [
        posterior_model_probability(table, DirichletSpec.symmetric(a, table.n), n, level, s, tolerance)
        for a, s in zip(alphas, seeds)
    ]
