"""Partial identification of direct effects from P(D, A | S).

Notation: ``K[s, d, a] = P(D=d, A=a | S=s)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tables import ConditionalKernel, JointDistribution, PositivityError


@dataclass(frozen=True)
class EffectInterval:
    lower: float
    upper: float

    def __post_init__(self):
        # closed forms can cross by a rounding step when the interval is a point
        if self.lower > self.upper + 1e-12:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    @property
    def contains_zero(self) -> bool:
        return bool(self.lower <= 0.0 <= self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, atol: float = 0.0) -> bool:
        return self.lower - atol <= value <= self.upper + atol

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "contains_zero": self.contains_zero}


def _K(kernel) -> np.ndarray:
    return kernel.kernel if isinstance(kernel, ConditionalKernel) else np.asarray(kernel, dtype=float)


def cde_bounds(kernel, d: int) -> EffectInterval:
    """Sharp bounds on P(A=1|do(S=1),do(D=d)) - P(A=1|do(S=0),do(D=d))."""
    K = _K(kernel)
    if not 0 <= d < K.shape[1]:
        raise IndexError(f"department index {d} out of range 0..{K.shape[1] - 1}")
    lower = K[1, d, 1] + K[0, d, 0] - 1.0
    upper = 1.0 - K[1, d, 0] - K[0, d, 1]
    return EffectInterval(float(lower), float(upper))


def cde_zero_compatible(kernel) -> bool:
    K = _K(kernel)
    return all(cde_bounds(K, d).contains_zero for d in range(K.shape[1]))


def nde_point(joint: JointDistribution, s: int, s_prime: int) -> float:
    """Mediation formula sum_d (P(A=1|d,s') - P(A=1|d,s)) P(d|s).

    Equals the natural direct effect only when there is no latent
    confounding between D and A.
    """
    P = np.asarray(joint.probs)
    p_sd = P.sum(axis=2)
    zero = np.argwhere(p_sd <= 0)
    if zero.size:
        s0, d0 = zero[0]
        raise PositivityError(f"P(S={s0}, D={d0}) = 0; mediation formula undefined", stratum=(int(s0), int(d0)))
    rate = P[:, :, 1] / p_sd
    d_given_s = p_sd[s] / p_sd[s].sum()
    return float(np.sum((rate[s_prime] - rate[s]) * d_given_s))


def nde_bounds_binary(kernel, direction: str = "0->1") -> EffectInterval:
    """Bounds on the natural direct effect for binary D under D-A confounding.

    Each term ``P(A=a | D=d | S=s)`` of the closed forms is read as the
    joint-given-S mass ``K[s, d, a]``.
    """
    K = _K(kernel)
    if K.shape[1] != 2:
        raise ValueError(f"NDE bounds need a binary mediator, got n={K.shape[1]}")
    p = lambda a, d, s: K[s, d, a]  # noqa: E731
    if direction == "0->1":
        pa0 = K[0, :, 0].sum()
        pa1 = K[0, :, 1].sum()
        lower = max(
            pa0 - 1.0,
            p(0, 0, 0) - p(1, 1, 0) + p(1, 0, 1) - 1.0,
            p(0, 1, 0) - p(1, 0, 0) + p(1, 1, 1) - 1.0,
        )
        upper = min(
            1.0 - pa1,
            1.0 + p(0, 1, 0) - p(1, 0, 0) - p(0, 0, 1),
            1.0 + p(0, 0, 0) - p(1, 1, 0) - p(0, 1, 1),
        )
    elif direction == "1->0":
        pa0 = K[1, :, 0].sum()
        pa1 = K[1, :, 1].sum()
        lower = max(
            pa0 - 1.0,
            p(1, 0, 0) - p(1, 1, 1) + p(0, 0, 1) - 1.0,
            p(1, 1, 0) - p(1, 0, 1) + p(0, 1, 1) - 1.0,
        )
        upper = min(
            1.0 - pa1,
            1.0 + p(0, 0, 1) - p(0, 1, 0) - p(1, 1, 1),
            1.0 + p(0, 1, 1) - p(0, 0, 0) - p(1, 0, 1),
        )
    else:
        raise ValueError(f"direction must be '0->1' or '1->0', got {direction!r}")
    return EffectInterval(float(lower), float(upper))
