"""Finite structural causal models over (S, D, A), solved by exact enumeration.

Every exogenous variable has a finite support and a pmf; mechanisms are
lookup tables.  Axis layout of the tables:

    f_S[u...]            -> s
    f_D[s, u...]         -> d
    f_A[s, d, u...]      -> a

where ``u...`` runs over the exogenous variables the mechanism may read,
fixed per model class:

    no-cf  : S <- U_S          D <- U_D            A <- U_A
    cf     : S <- U_S          D <- U, U_D         A <- U, U_A
    cf+SD  : S <- U_S, U_SD    D <- U, U_D, U_SD   A <- U, U_A

Potential outcomes under different interventions share one exogenous draw,
so joint counterfactual events are evaluated configuration by configuration.
Configurations of probability zero are dropped up front, which makes every
almost-sure statement an exact check over the remaining ones.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .ivcore import ResponseFunctionIVModel
from .tables import CategorySpace, ConditionalKernel, JointDistribution, conditional_kernel

CLASS_TAGS = ("no-cf", "cf", "cf+SD")
READS = {
    "no-cf": {"S": ("U_S",), "D": ("U_D",), "A": ("U_A",)},
    "cf": {"S": ("U_S",), "D": ("U", "U_D"), "A": ("U", "U_A")},
    "cf+SD": {"S": ("U_S", "U_SD"), "D": ("U", "U_D", "U_SD"), "A": ("U", "U_A")},
}
EXOGENOUS = {
    "no-cf": ("U_S", "U_D", "U_A"),
    "cf": ("U_S", "U_D", "U_A", "U"),
    "cf+SD": ("U_S", "U_D", "U_A", "U", "U_SD"),
}
EQ_TOL = 1e-12
MAX_CONFIGS = 10**6


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FiniteSCM:
    class_tag: str
    n: int
    exogenous: Mapping[str, Tuple[float, ...]]
    f_S: np.ndarray
    f_D: np.ndarray
    f_A: np.ndarray

    def __post_init__(self):
        if self.class_tag not in CLASS_TAGS:
            raise ModelError(f"unknown class tag {self.class_tag!r}")
        names = EXOGENOUS[self.class_tag]
        if set(self.exogenous) != set(names):
            raise ModelError(f"class {self.class_tag} needs exogenous {names}, got {tuple(self.exogenous)}")
        exo = {}
        for name in names:
            pmf = tuple(float(p) for p in self.exogenous[name])
            if not pmf or min(pmf) < 0 or abs(sum(pmf) - 1.0) > 1e-12:
                raise ModelError(f"pmf of {name} is not a distribution: {pmf}")
            exo[name] = pmf
        object.__setattr__(self, "exogenous", exo)
        sizes = {k: len(v) for k, v in exo.items()}
        reads = READS[self.class_tag]
        expected = {
            "S": tuple(sizes[r] for r in reads["S"]),
            "D": (2,) + tuple(sizes[r] for r in reads["D"]),
            "A": (2, self.n) + tuple(sizes[r] for r in reads["A"]),
        }
        limits = {"S": 2, "D": self.n, "A": 2}
        for var, name in (("S", "f_S"), ("D", "f_D"), ("A", "f_A")):
            table = np.array(getattr(self, name), dtype=np.int64)
            if table.shape != expected[var]:
                raise ModelError(f"{name} has shape {table.shape}, expected {expected[var]}")
            if table.size and (table.min() < 0 or table.max() >= limits[var]):
                raise ModelError(f"{name} has values outside 0..{limits[var] - 1}")
            table.setflags(write=False)
            object.__setattr__(self, name, table)
        if math.prod(sizes.values()) > MAX_CONFIGS:
            raise ModelError("exogenous space too large for exact enumeration")

    # -- enumeration -------------------------------------------------------

    @cached_property
    def _configs(self) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        names = list(self.exogenous)
        grids = np.meshgrid(*[np.arange(len(self.exogenous[k])) for k in names], indexing="ij")
        idx = {k: g.ravel() for k, g in zip(names, grids)}
        w = np.ones(grids[0].size)
        for k in names:
            w = w * np.asarray(self.exogenous[k])[idx[k]]
        keep = w > 0
        return {k: v[keep] for k, v in idx.items()}, w[keep]

    @property
    def weights(self) -> np.ndarray:
        return self._configs[1]

    def _u(self, var: str) -> Tuple[np.ndarray, ...]:
        idx = self._configs[0]
        return tuple(idx[r] for r in READS[self.class_tag][var])

    def solve(self, do: Optional[Mapping[str, int]] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values of (S, D, A) on every positive-probability configuration."""
        do = dict(do or {})
        bad = set(do) - {"S", "D"}
        if bad:
            raise ModelError(f"interventions allowed on S and D only, got {sorted(bad)}")
        k = self.weights.size
        if "S" in do:
            s = np.full(k, int(do["S"]))
        else:
            s = self.f_S[self._u("S")]
        if "D" in do:
            d = np.full(k, int(do["D"]))
        else:
            d = self.f_D[(s,) + self._u("D")]
        a = self.f_A[(s, d) + self._u("A")]
        return s, d, a

    def solve_a(self, s: np.ndarray, d: np.ndarray) -> np.ndarray:
        """A on every configuration with S and D clamped per configuration."""
        return self.f_A[(s, d) + self._u("A")]

    def space(self) -> CategorySpace:
        return CategorySpace.default(self.n)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "class": self.class_tag,
            "n": self.n,
            "exogenous": [[k, list(v)] for k, v in self.exogenous.items()],
            "mechanisms": {"S": self.f_S.tolist(), "D": self.f_D.tolist(), "A": self.f_A.tolist()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Mapping) -> "FiniteSCM":
        try:
            mech = data["mechanisms"]
            return cls(
                class_tag=data["class"],
                n=int(data["n"]),
                exogenous={k: tuple(v) for k, v in data["exogenous"]},
                f_S=np.array(mech["S"]),
                f_D=np.array(mech["D"]),
                f_A=np.array(mech["A"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"invalid model serialization: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "FiniteSCM":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelError(f"invalid model serialization: {exc}") from exc
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# queries

def _fsum_groups(keys: np.ndarray, w: np.ndarray, size: int) -> np.ndarray:
    """Correctly rounded sum of ``w`` per integer key, so every query path agrees bit for bit."""
    out = np.zeros(size)
    order = np.argsort(keys, kind="stable")
    bounds = np.searchsorted(keys[order], np.arange(size + 1))
    ws = w[order]
    for k in range(size):
        if bounds[k + 1] > bounds[k]:
            out[k] = math.fsum(ws[bounds[k]:bounds[k + 1]])
    return out


def _tabulate(s, d, a, w, n) -> np.ndarray:
    return _fsum_groups((s * n + d) * 2 + a, w, 4 * n).reshape(2, n, 2)


def observational(model: FiniteSCM) -> JointDistribution:
    s, d, a = model.solve()
    P = _tabulate(s, d, a, model.weights, model.n)
    return JointDistribution(model.space(), P / P.sum())


def interventional(model: FiniteSCM, do: Mapping[str, int], query: Sequence[str] = ("S", "D", "A")) -> np.ndarray:
    """Distribution of ``query`` (kept in S, D, A order) under ``do``."""
    query = [v for v in ("S", "D", "A") if v in set(query)]
    if not query:
        raise ModelError("empty query")
    s, d, a = model.solve(do)
    values = {"S": (s, 2), "D": (d, model.n), "A": (a, 2)}
    key = np.zeros(s.size, dtype=np.int64)
    shape = []
    for v in query:
        arr, size = values[v]
        key = key * size + arr
        shape.append(size)
    return _fsum_groups(key, model.weights, math.prod(shape)).reshape(shape)


@dataclass(frozen=True)
class PotentialOutcomeQuery:
    """Joint event over A-values of several worlds sharing exogenous noise.

    ``event`` is called with one integer array per intervention (the A value
    in that world, per exogenous configuration) and returns a boolean array.
    An empty assignment denotes the factual world.
    """

    interventions: Tuple[Mapping[str, int], ...]
    event: Callable[..., np.ndarray]

    def __post_init__(self):
        ivs = tuple(dict(i) for i in self.interventions)
        if not ivs:
            raise ModelError("at least one intervention is required")
        for iv in ivs:
            if set(iv) - {"S", "D"}:
                raise ModelError(f"intervention targets must be within S, D: {iv}")
        object.__setattr__(self, "interventions", ivs)


def counterfactual_event_prob(model: FiniteSCM, query: PotentialOutcomeQuery,
                              given: Optional[Mapping[str, int]] = None) -> float:
    """P(event) or, with ``given`` factual values of S/D, P(event | given).

    Returns NaN when the conditioning event has probability zero.
    """
    w = model.weights
    worlds = [model.solve(iv)[2] for iv in query.interventions]
    hit = np.asarray(query.event(*worlds), dtype=bool)
    if given:
        s, d, _ = model.solve()
        mask = np.ones(w.size, dtype=bool)
        if "S" in given:
            mask &= s == given["S"]
        if "D" in given:
            mask &= d == given["D"]
        denom = math.fsum(w[mask])
        if denom <= 0:
            return float("nan")
        return math.fsum(w[mask & hit]) / denom
    return math.fsum(w[hit])


def natural_direct_effect(model: FiniteSCM, s: int, s_prime: int) -> float:
    """P(A^{do(S=s', D=D^{do(S=s)})} = 1) - P(A^{do(S=s)} = 1), by enumeration."""
    w = model.weights
    _, d_nat, a_base = model.solve({"S": s})
    a_switch = model.solve_a(np.full(w.size, s_prime), d_nat)
    return float(w[a_switch == 1].sum() - w[a_base == 1].sum())


def controlled_direct_effect(model: FiniteSCM, d: int) -> float:
    """P(A=1 | do(S=1, D=d)) - P(A=1 | do(S=0, D=d))."""
    p1 = interventional(model, {"S": 1, "D": d}, ("A",))[1]
    p0 = interventional(model, {"S": 0, "D": d}, ("A",))[1]
    return float(p1 - p0)


# ---------------------------------------------------------------------------
# fairness notions

@dataclass(frozen=True)
class FairnessVerdicts:
    graph_fair: bool
    ctrf_fair: bool
    inter_fair: bool
    obs_fair: bool
    kusner_ctrf_fair: bool
    path_dep_fair: bool
    positivity_sd: bool
    positivity_s: bool

    def consistency_violations(self) -> list:
        out = []
        if self.graph_fair != self.ctrf_fair:
            out.append("graph_fair != ctrf_fair")
        if self.ctrf_fair and not self.inter_fair:
            out.append("ctrf_fair but not inter_fair")
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _close(x: float, y: float) -> bool:
    return abs(x - y) <= EQ_TOL


def classify_fairness(model: FiniteSCM) -> FairnessVerdicts:
    n = model.n
    w = model.weights
    joint = observational(model).probs
    p_sd = joint.sum(axis=2)
    p_s = p_sd.sum(axis=1)
    s_nat, d_nat, _ = model.solve()

    # S is a parent of A unless f_A(0, d, u) == f_A(1, d, u) a.s. for every d
    graph = True
    for d in range(n):
        dd = np.full(w.size, d)
        if np.any(model.solve_a(np.zeros_like(dd), dd) != model.solve_a(np.ones_like(dd), dd)):
            graph = False
            break

    ctrf = True
    for s, d in itertools.product((0, 1), range(n)):
        q = PotentialOutcomeQuery(({"S": s, "D": d}, {"D": d}), lambda x, y: x != y)
        if counterfactual_event_prob(model, q) != 0.0:
            ctrf = False
            break

    inter = True
    for d in range(n):
        base = interventional(model, {"D": d}, ("A",))[1]
        for s in (0, 1):
            if not _close(interventional(model, {"S": s, "D": d}, ("A",))[1], base):
                inter = False
    obs = True
    for d in range(n):
        p_d = p_sd[:, d].sum()
        if p_d <= 0:
            continue
        p_a_d = joint[:, d, 1].sum() / p_d
        for s in (0, 1):
            if p_sd[s, d] > 0 and not _close(joint[s, d, 1] / p_sd[s, d], p_a_d):
                obs = False

    kusner = True
    path_dep = True
    a_is_one = lambda a: a == 1  # noqa: E731
    for s, d in itertools.product((0, 1), range(n)):
        if p_sd[s, d] <= 0:
            continue
        ctx = {"S": s, "D": d}
        factual = counterfactual_event_prob(model, PotentialOutcomeQuery(({"S": s},), a_is_one), ctx)
        flipped = counterfactual_event_prob(model, PotentialOutcomeQuery(({"S": 1 - s},), a_is_one), ctx)
        if not _close(flipped, factual):
            kusner = False
        same_path = counterfactual_event_prob(
            model, PotentialOutcomeQuery(({"S": s, "D": d},), a_is_one), ctx)
        flip_path = counterfactual_event_prob(
            model, PotentialOutcomeQuery(({"S": 1 - s, "D": d},), a_is_one), ctx)
        if not _close(flip_path, same_path):
            path_dep = False

    return FairnessVerdicts(
        graph_fair=graph,
        ctrf_fair=ctrf,
        inter_fair=inter,
        obs_fair=obs,
        kusner_ctrf_fair=kusner,
        path_dep_fair=path_dep,
        positivity_sd=bool(np.all(p_sd > 0)),
        positivity_s=bool(np.all(p_s > 0)),
    )


def induced_kernel(model: FiniteSCM) -> ConditionalKernel:
    return conditional_kernel(observational(model))


def demographic_parity_gap(joint: JointDistribution) -> float:
    p_s = joint.p_s()
    if np.any(p_s <= 0):
        return 0.0
    rates = joint.probs[:, :, 1].sum(axis=1) / p_s
    return float(abs(rates[1] - rates[0]))


# ---------------------------------------------------------------------------
# constructors

def example1(delta: float, epsilon: float) -> FiniteSCM:
    """S = U_S ~ Ber(delta), D = S xor U_D with U_D ~ Ber(1/2), A = S xor D xor U_A, U_A ~ Ber(epsilon)."""
    f_A = np.array([[[s ^ d ^ u for u in (0, 1)] for d in (0, 1)] for s in (0, 1)])
    return FiniteSCM(
        "no-cf", 2,
        {"U_S": (1 - delta, delta), "U_D": (0.5, 0.5), "U_A": (1 - epsilon, epsilon)},
        f_S=np.array([0, 1]),
        f_D=np.array([[s ^ u for u in (0, 1)] for s in (0, 1)]),
        f_A=f_A,
    )


def example2(epsilon: float) -> FiniteSCM:
    """S = 0, D = 0, A = S xor U_A with U_A ~ Ber(epsilon)."""
    return FiniteSCM(
        "no-cf", 2,
        {"U_S": (1.0,), "U_D": (1.0,), "U_A": (1 - epsilon, epsilon)},
        f_S=np.array([0]),
        f_D=np.array([[0], [0]]),
        f_A=np.array([[[s ^ u for u in (0, 1)] for _ in (0, 1)] for s in (0, 1)]),
    )


def from_response_model(model: ResponseFunctionIVModel) -> FiniteSCM:
    """Class-cf model whose shared noise U indexes the response pairs."""
    pairs = list(model.weights)
    k = len(pairs)
    f_D = np.zeros((2, k, 1), dtype=np.int64)
    f_A = np.zeros((2, model.n, k, 1), dtype=np.int64)
    for i, (r1, r2) in enumerate(pairs):
        for s in (0, 1):
            f_D[s, i, 0] = r1[s]
            f_A[s, :, i, 0] = r2
    return FiniteSCM(
        "cf", model.n,
        {"U_S": tuple(model.p_instrument), "U_D": (1.0,), "U_A": (1.0,),
         "U": tuple(model.weights[p] for p in pairs)},
        f_S=np.array([0, 1]), f_D=f_D, f_A=f_A,
    )


def _coupled_noise(conditionals: np.ndarray) -> Tuple[Tuple[float, ...], np.ndarray]:
    """One noise variable reproducing every row of ``conditionals``.

    Rows are conditional pmfs (one per parent configuration).  The unit
    interval is cut at every row's cumulative breakpoints; each piece becomes
    a noise value mapped to the per-row quantile it falls in.
    """
    cum = np.cumsum(conditionals, axis=1)
    cum[:, -1] = 1.0
    cuts = np.unique(np.concatenate([[0.0], cum.ravel(), [1.0]]))
    cuts = cuts[(cuts >= 0) & (cuts <= 1)]
    lows, highs = cuts[:-1], cuts[1:]
    keep = highs - lows > 0
    lows, highs = lows[keep], highs[keep]
    mids = (lows + highs) / 2
    table = np.stack([np.searchsorted(row, mids, side="right") for row in cum])
    table = np.minimum(table, conditionals.shape[1] - 1)
    pmf = highs - lows
    return tuple(pmf / pmf.sum()), table


def realize_markov(joint: JointDistribution, tol: float = 1e-9) -> FiniteSCM:
    """No-cf model without the S -> A edge reproducing ``joint``.

    Requires A independent of S given D.
    """
    P = np.asarray(joint.probs)
    n = P.shape[1]
    p_sd = P.sum(axis=2)
    p_d = p_sd.sum(axis=0)
    p_da = P.sum(axis=0)
    gap = np.abs(P * p_d[None, :, None] - p_sd[:, :, None] * p_da[None, :, :]).max()
    if gap > tol:
        raise ModelError(f"A is not independent of S given D (gap {gap:.3e})")
    p_s = p_sd.sum(axis=1)
    d_given_s = np.where(p_s[:, None] > 0, p_sd / np.where(p_s > 0, p_s, 1)[:, None], 1.0 / n)
    a_given_d = np.where(p_d[:, None] > 0, p_da / np.where(p_d > 0, p_d, 1)[:, None], 0.5)
    pmf_d, table_d = _coupled_noise(d_given_s)
    pmf_a, table_a = _coupled_noise(a_given_d)
    f_A = np.broadcast_to(table_a, (2,) + table_a.shape).copy()
    return FiniteSCM(
        "no-cf", n,
        {"U_S": tuple(p_s / p_s.sum()), "U_D": pmf_d, "U_A": pmf_a},
        f_S=np.array([0, 1]), f_D=table_d, f_A=f_A,
    )


FLAVORS = ("free", "graph", "inter", "kusner")


def _random_pmf(rng: np.random.Generator, k: int, allow_zero: bool) -> Tuple[float, ...]:
    p = rng.dirichlet(np.ones(k))
    if allow_zero and k > 1 and rng.random() < 0.25:
        p[rng.integers(k)] = 0.0
    return tuple(p / p.sum())


def random_model(class_tag: str, n: int, seed: int, *, force: Optional[str] = None,
                 positive: bool = False) -> FiniteSCM:
    """Random model with exogenous supports of at most 4 values.

    ``force`` picks a construction: ``"graph"`` drops S from f_A,
    ``"inter"`` masks the S-dependence of A behind a fair coin (interventional
    but not graphical fairness), ``"kusner"`` yields Kusner counterfactual
    fairness.  Without it a flavour (including unconstrained) is drawn at
    random.  ``positive`` forces P(S=s, D=d) > 0 for all s, d.
    """
    if class_tag not in CLASS_TAGS:
        raise ModelError(f"unknown class tag {class_tag!r}")
    if n < 2:
        raise ModelError("mediator needs at least 2 values")
    if force is not None and force not in FLAVORS:
        raise ModelError(f"unknown force {force!r}; choose from {FLAVORS}")
    rng = np.random.default_rng([int(seed), int(n), CLASS_TAGS.index(class_tag)])
    flavor = force or FLAVORS[rng.choice(4, p=[0.4, 0.2, 0.2, 0.2])]
    kusner_blind = flavor == "kusner" and rng.random() < 0.5
    masked = flavor == "inter" or (flavor == "kusner" and not kusner_blind)

    names = EXOGENOUS[class_tag]
    sizes = {k: int(rng.integers(1, 5)) for k in names}
    if positive:
        sizes["U_S"] = max(sizes["U_S"], 2)
        d_reads = [r for r in READS[class_tag]["D"]]
        while math.prod(sizes[r] for r in d_reads) < n:
            grow = [r for r in d_reads if sizes[r] < 4]
            if not grow:
                raise ModelError(f"cannot force positivity with n={n} in class {class_tag}")
            sizes[grow[int(rng.integers(len(grow)))]] += 1
    if masked:
        sizes["U_A"] = 2
    exo = {k: _random_pmf(rng, sizes[k], allow_zero=not positive) for k in names}
    if masked:
        exo["U_A"] = (0.5, 0.5)

    reads = READS[class_tag]
    shape = lambda var: tuple(sizes[r] for r in reads[var])  # noqa: E731
    f_S = rng.integers(0, 2, size=shape("S"))
    f_D = rng.integers(0, n, size=(2,) + shape("D"))
    f_A = rng.integers(0, 2, size=(2, n) + shape("A"))

    if positive:
        flat = f_S.reshape(-1)
        pos = rng.permutation(flat.size)[:2]
        flat[pos[0]], flat[pos[1]] = 0, 1
        for s in (0, 1):
            flat_d = f_D[s].reshape(-1)
            flat_d[rng.permutation(flat_d.size)[:n]] = np.arange(n)
    if flavor == "graph" or kusner_blind:
        f_A[1] = f_A[0]
    if kusner_blind:
        f_D[1] = f_D[0]
    if masked:
        # A = s xor U_A xor g(d, other noise): a fair coin hides s in distribution
        ua_axis = 2 + reads["A"].index("U_A")
        g = np.take(f_A[0], 0, axis=ua_axis - 1)
        for s in (0, 1):
            for ua in (0, 1):
                sl = [s, slice(None)] + [slice(None)] * len(reads["A"])
                sl[ua_axis] = ua
                f_A[tuple(sl)] = g ^ s ^ ua
    return FiniteSCM(class_tag, n, exo, f_S=f_S, f_D=f_D, f_A=f_A)


def sample_table(model: FiniteSCM, count: int, rng: np.random.Generator):
    """Multinomial draw of ``count`` records from the observational law."""
    from .tables import ContingencyTable3

    P = observational(model).probs.ravel()
    counts = rng.multinomial(count, P / P.sum()).reshape(2, model.n, 2)
    return ContingencyTable3(model.space(), counts)
