"""Three-variable categorical data: counts, joint distributions, kernels.

Axis convention everywhere in the package is ``[s, d, a]`` for tables and
joints, and ``[s, d, a]`` for kernels as well, where ``kernel[s]`` is the
conditional distribution of ``(D, A)`` given ``S = s``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

HEADER = ("sex", "department", "admitted", "count")
ROW_TOL = 1e-12


class TableError(ValueError):
    """Base class for ingestion and validation failures."""


class ParseError(TableError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(TableError):
    pass


class EmptyDataError(TableError):
    pass


class PositivityError(TableError):
    """A conditioning stratum has zero probability."""

    def __init__(self, message: str, stratum=None):
        super().__init__(message)
        self.stratum = stratum


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CategorySpace:
    s_labels: tuple
    d_labels: tuple
    a_labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "s_labels", tuple(self.s_labels))
        object.__setattr__(self, "d_labels", tuple(self.d_labels))
        object.__setattr__(self, "a_labels", tuple(self.a_labels))
        for name, labels in (("sex", self.s_labels), ("department", self.d_labels),
                             ("admitted", self.a_labels)):
            if len(set(labels)) != len(labels):
                raise SchemaError(f"duplicate {name} labels: {labels!r}")
        if len(self.s_labels) != 2:
            raise SchemaError(f"expected 2 sex labels, got {len(self.s_labels)}")
        if len(self.a_labels) != 2:
            raise SchemaError(f"expected 2 admitted labels, got {len(self.a_labels)}")
        if len(self.d_labels) < 2:
            raise SchemaError("need at least 2 department labels")

    @property
    def n(self) -> int:
        return len(self.d_labels)

    @property
    def shape(self) -> tuple:
        return (2, self.n, 2)

    @classmethod
    def default(cls, n: int) -> "CategorySpace":
        return cls((0, 1), tuple(range(n)), (0, 1))

    def coding(self) -> dict:
        return {
            "sex": {str(l): i for i, l in enumerate(self.s_labels)},
            "department": {str(l): i for i, l in enumerate(self.d_labels)},
            "admitted": {str(l): i for i, l in enumerate(self.a_labels)},
        }


@dataclass(frozen=True)
class ContingencyTable3:
    space: CategorySpace
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != self.space.shape:
            raise SchemaError(f"counts shape {counts.shape} != {self.space.shape}")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.round(counts)):
                raise TableError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise TableError("counts must be non-negative")
        if counts.sum() < 1:
            raise EmptyDataError("table has zero total count")
        object.__setattr__(self, "counts", _frozen(counts))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n(self) -> int:
        return self.space.n

    @classmethod
    def from_counts(cls, counts, space: Optional[CategorySpace] = None) -> "ContingencyTable3":
        counts = np.asarray(counts)
        if space is None:
            space = CategorySpace.default(counts.shape[1])
        return cls(space, counts)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADER)
        for s, sl in enumerate(self.space.s_labels):
            for d, dl in enumerate(self.space.d_labels):
                for a, al in enumerate(self.space.a_labels):
                    writer.writerow([sl, dl, al, int(self.counts[s, d, a])])
        return buf.getvalue()


@dataclass(frozen=True)
class JointDistribution:
    space: CategorySpace
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != self.space.shape:
            raise SchemaError(f"probs shape {probs.shape} != {self.space.shape}")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise TableError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > ROW_TOL:
            raise TableError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def n(self) -> int:
        return self.space.n

    @classmethod
    def from_probs(cls, probs, space: Optional[CategorySpace] = None) -> "JointDistribution":
        probs = np.asarray(probs, dtype=float)
        if space is None:
            space = CategorySpace.default(probs.shape[1])
        return cls(space, probs)

    def p_s(self) -> np.ndarray:
        return self.probs.sum(axis=(1, 2))

    def p_sd(self) -> np.ndarray:
        return self.probs.sum(axis=2)


@dataclass(frozen=True)
class ConditionalKernel:
    """K(d, a | s), stored as ``kernel[s, d, a]``."""

    space: CategorySpace
    kernel: np.ndarray

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=float)
        if kernel.shape != self.space.shape:
            raise SchemaError(f"kernel shape {kernel.shape} != {self.space.shape}")
        if np.any(kernel < 0) or not np.all(np.isfinite(kernel)):
            raise TableError("kernel entries must be finite and non-negative")
        rows = kernel.sum(axis=(1, 2))
        if np.any(np.abs(rows - 1.0) > ROW_TOL):
            raise TableError(f"kernel rows sum to {rows.tolist()}, not 1")
        object.__setattr__(self, "kernel", _frozen(kernel))

    @property
    def n(self) -> int:
        return self.space.n

    @classmethod
    def from_array(cls, kernel, space: Optional[CategorySpace] = None) -> "ConditionalKernel":
        kernel = np.asarray(kernel, dtype=float)
        if space is None:
            space = CategorySpace.default(kernel.shape[1])
        return cls(space, kernel)

    def joint(self, p_s: Sequence[float]) -> JointDistribution:
        p_s = np.asarray(p_s, dtype=float)
        return JointDistribution(self.space, self.kernel * p_s[:, None, None])


def _index_labels(seen: list, label: str, fixed: Optional[Mapping], column: str, line: int,
                  limit: Optional[int]) -> int:
    if fixed is not None:
        if label not in fixed:
            raise SchemaError(f"line {line}: {column} label {label!r} not in coding")
        return int(fixed[label])
    if label not in seen:
        seen.append(label)
        if limit is not None and len(seen) > limit:
            raise SchemaError(f"more than {limit} distinct {column} labels: {seen!r}")
    return seen.index(label)


def _ordered(fixed: Optional[Mapping], seen: list) -> list:
    if fixed is None:
        return list(seen)
    by_index = sorted(fixed.items(), key=lambda kv: kv[1])
    if [i for _, i in by_index] != list(range(len(by_index))):
        raise SchemaError(f"coding indices must be 0..k-1, got {dict(fixed)!r}")
    return [label for label, _ in by_index]


def parse_long_csv(text, coding: Optional[Mapping[str, Mapping[str, int]]] = None) -> ContingencyTable3:
    """Accumulate ``sex,department,admitted,count`` rows into a table.

    ``text`` is a string or a text stream.  ``coding`` optionally pins label
    indices per column, e.g. ``{"sex": {"male": 0, "female": 1}}``; columns
    without a coding are indexed by first appearance.
    """
    if not isinstance(text, str):
        text = text.read()
    coding = dict(coding or {})
    fixed = {col: coding.get(col) for col in HEADER[:3]}
    lines = text.splitlines()
    if not lines or lines[0].lstrip("﻿").strip() != ",".join(HEADER):
        raise ParseError(1, f"header must be exactly {','.join(HEADER)!r}")

    seen = {col: [] for col in HEADER[:3]}
    limits = {"sex": 2, "department": None, "admitted": 2}
    cells = []
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != 4:
            raise ParseError(lineno, f"expected 4 fields, got {len(row)}")
        s_lab, d_lab, a_lab, raw = (f.strip() for f in row)
        try:
            count = int(raw)
        except ValueError:
            raise ParseError(lineno, f"count {raw!r} is not an integer") from None
        if count < 0:
            raise TableError(f"line {lineno}: negative count {count}")
        idx = tuple(
            _index_labels(seen[col], lab, fixed[col], col, lineno, limits[col])
            for col, lab in zip(HEADER[:3], (s_lab, d_lab, a_lab))
        )
        cells.append((idx, count))

    if fixed["sex"] is None and len(seen["sex"]) < 2:
        raise PositivityError(f"only {len(seen['sex'])} sex label(s) present: {seen['sex']!r}; "
                              "pass a coding to name the missing one", stratum=len(seen["sex"]))
    labels = {col: _ordered(fixed[col], seen[col]) for col in HEADER[:3]}
    space = CategorySpace(labels["sex"], labels["department"], labels["admitted"])
    counts = np.zeros(space.shape, dtype=np.int64)
    for (s, d, a), c in cells:
        counts[s, d, a] += c
    return ContingencyTable3(space, counts)


def empirical_joint(table: ContingencyTable3) -> JointDistribution:
    total = table.total
    if total < 1:
        raise EmptyDataError("cannot estimate a distribution from zero counts")
    return JointDistribution(table.space, table.counts / total)


def conditional_kernel(joint: JointDistribution) -> ConditionalKernel:
    p_s = joint.p_s()
    for s in range(2):
        if p_s[s] <= 0:
            raise PositivityError(
                f"P(S={joint.space.s_labels[s]!r}) = 0; kernel undefined", stratum=s)
    kernel = joint.probs / p_s[:, None, None]
    # renormalize per row so rounding never trips the row-sum check
    kernel = kernel / kernel.sum(axis=(1, 2), keepdims=True)
    return ConditionalKernel(joint.space, kernel)


def kernel_from_table(table: ContingencyTable3) -> ConditionalKernel:
    return conditional_kernel(empirical_joint(table))
