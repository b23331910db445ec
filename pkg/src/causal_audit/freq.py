"""Frequentist tests on the (S, D, A) table.

All chi-square statistics are plain Pearson statistics without continuity
correction.  P-values below the smallest double come back as exactly 0 and
are flagged as underflowed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import special

from .ivcore import SlackReport, iv_slacks
from .tables import ContingencyTable3, PositivityError, TableError, kernel_from_table


class UntestableError(TableError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float
    level: float
    strata_detail: Dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def reject(self) -> bool:
        return bool(self.p_value < self.level)

    @property
    def underflow(self) -> bool:
        return self.p_value == 0.0

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "p_value_underflow": self.underflow,
            "level": self.level,
            "reject": self.reject,
            "strata": self.strata_detail,
        }


def chi_square_upper_tail(x: float, df: int) -> float:
    """P(chi2_df >= x) as the regularized upper incomplete gamma Q(df/2, x/2)."""
    if int(df) != df or df < 1:
        raise ValueError(f"df must be a positive integer, got {df!r}")
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x!r}")
    return float(special.gammaincc(df / 2.0, x / 2.0))


def pearson_2x2(table: np.ndarray) -> Optional[float]:
    """Pearson statistic of a 2x2 table, or None when a margin is empty."""
    t = np.asarray(table, dtype=float)
    rows = t.sum(axis=1)
    cols = t.sum(axis=0)
    total = t.sum()
    if np.any(rows == 0) or np.any(cols == 0):
        return None
    det = t[0, 0] * t[1, 1] - t[0, 1] * t[1, 0]
    return float(total * det * det / (rows[0] * rows[1] * cols[0] * cols[1]))


def cond_indep_test(table: ContingencyTable3, level: float = 0.05) -> TestResult:
    """Stratified test of A independent of S given D (summed per-department chi-square)."""
    stat = 0.0
    df = 0
    detail = {}
    for d, label in enumerate(table.space.d_labels):
        x = pearson_2x2(table.counts[:, d, :])
        if x is None:
            detail[str(label)] = {"skipped": True}
            continue
        stat += x
        df += 1
        detail[str(label)] = {"statistic": x, "p_value": chi_square_upper_tail(x, 1)}
    if df == 0:
        raise UntestableError("no department has both sexes and both outcomes")
    return TestResult(stat, df, chi_square_upper_tail(stat, df), level, detail)


def demographic_parity_test(table: ContingencyTable3, level: float = 0.05) -> TestResult:
    margin = table.counts.sum(axis=1)
    if np.any(margin.sum(axis=1) == 0):
        raise UntestableError("one sex has no records; demographic parity untestable")
    x = pearson_2x2(margin)
    rates = margin[:, 1] / margin.sum(axis=1)
    detail = {"rates": rates.tolist(), "totals": margin.sum(axis=1).tolist()}
    if x is None:
        return TestResult(0.0, 1, 1.0, level, detail)
    return TestResult(x, 1, chi_square_upper_tail(x, 1), level, detail)


def ml_iv_check(table: ContingencyTable3) -> SlackReport:
    return iv_slacks(kernel_from_table(table), tolerance=0.0)


# ---------------------------------------------------------------------------
# per-inequality association test

@dataclass(frozen=True)
class WrrCell:
    d: int
    a: int
    gamma_hat: float
    statistic: float
    association_p: float
    one_sided_p: float
    adjusted_p: float
    challenged: bool

    @property
    def underflow(self) -> bool:
        return self.association_p == 0.0


@dataclass(frozen=True)
class WrrReport:
    cells: Tuple[WrrCell, ...]
    level: float
    bonferroni_factor: int = 2

    @property
    def reject(self) -> bool:
        return bool(any(c.adjusted_p < self.level for c in self.cells))

    def gammas(self) -> np.ndarray:
        n = max(c.d for c in self.cells) + 1
        g = np.zeros((n, 2))
        for c in self.cells:
            g[c.d, c.a] = c.gamma_hat
        return g

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "bonferroni_factor": self.bonferroni_factor,
            "reject": self.reject,
            "cells": [
                {"d": c.d, "a": c.a, "gamma_hat": c.gamma_hat, "statistic": c.statistic,
                 "association_p": c.association_p, "association_p_underflow": c.underflow,
                 "one_sided_p": c.one_sided_p, "adjusted_p": c.adjusted_p,
                 "challenged": c.challenged}
                for c in self.cells
            ],
        }


def q_table(counts: np.ndarray, d: int, a: int) -> np.ndarray:
    """2x2 counts of (S, Q) for the indicator Q^{d,a}; rows s, columns q."""
    n_s = counts.sum(axis=(1, 2))
    q1_s1 = counts[1, d, a]
    q1_s0 = n_s[0] - counts[0, d, 1 - a]
    return np.array([[n_s[0] - q1_s0, q1_s0], [n_s[1] - q1_s1, q1_s1]], dtype=float)


def population_gamma(kernel) -> np.ndarray:
    """gamma^{d,a} = K(d,a|1) + K(d,1-a|0) - 1 for every (d, a)."""
    K = kernel.kernel if hasattr(kernel, "kernel") else np.asarray(kernel)
    return K[1] + K[0, :, ::-1] - 1.0


def wrr_test(table: ContingencyTable3, level: float = 0.05) -> WrrReport:
    counts = table.counts
    n_s = counts.sum(axis=(1, 2))
    for s in (0, 1):
        if n_s[s] == 0:
            raise PositivityError(f"no records with sex {table.space.s_labels[s]!r}", stratum=s)
    cells = []
    for d in range(table.n):
        for a in (0, 1):
            q = q_table(counts, d, a)
            gamma = q[1, 1] / n_s[1] - q[0, 1] / n_s[0]
            x = pearson_2x2(q)
            if x is None:
                stat, p = 0.0, 1.0
            else:
                stat, p = x, chi_square_upper_tail(x, 1)
            challenged = bool(gamma > 0)
            one_sided = p / 2.0 if challenged else 1.0 - p / 2.0
            cells.append(WrrCell(d, a, float(gamma), stat, p, one_sided,
                                 min(1.0, 2.0 * one_sided), challenged))
    return WrrReport(tuple(cells), level)
