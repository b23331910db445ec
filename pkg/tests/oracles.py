"""Independent reference computations used by the test-suite.

None of these call into the package's own algorithms beyond data
containers; they exist to check the package against a second route.
"""

import itertools

import numpy as np
from scipy.optimize import linprog


def hv_vertices(n, tol=1e-9):
    """Vertices of the IV kernel polytope by exhaustive active-set search.

    Variables: K[z, x, y] flattened (4n of them).  Constraints: two row-sum
    equalities, 4n nonnegativity and 2n cross-stratum inequalities.  A point
    is a vertex iff it is feasible and 4n linearly independent constraints
    are active; every such point is the solution of some square subsystem.
    """
    dim = 4 * n
    idx = lambda z, x, y: (z * n + x) * 2 + y  # noqa: E731
    eq_rows, eq_rhs = [], []
    for z in (0, 1):
        row = np.zeros(dim)
        for x in range(n):
            for y in (0, 1):
                row[idx(z, x, y)] = 1
        eq_rows.append(row)
        eq_rhs.append(1.0)
    ineq_rows, ineq_rhs = [], []  # G k <= h
    for i in range(dim):
        row = np.zeros(dim)
        row[i] = -1
        ineq_rows.append(row)
        ineq_rhs.append(0.0)
    for x in range(n):
        for z in (0, 1):
            row = np.zeros(dim)
            row[idx(z, x, 0)] = 1
            row[idx(1 - z, x, 1)] = 1
            ineq_rows.append(row)
            ineq_rhs.append(1.0)
    E, e = np.array(eq_rows), np.array(eq_rhs)
    G, h = np.array(ineq_rows), np.array(ineq_rhs)

    found = set()
    for active in itertools.combinations(range(len(G)), dim - 2):
        M = np.vstack([E, G[list(active)]])
        if np.linalg.matrix_rank(M) < dim:
            continue
        k = np.linalg.solve(M, np.concatenate([e, h[list(active)]]))
        if np.all(G @ k <= h + tol) and np.allclose(E @ k, e, atol=tol):
            found.add(tuple(np.round(k, 9) + 0.0))
    return {tuple(v) for v in found}


def response_cde_range(K, d):
    """Min and max CDE(d) over every unconstrained response-function model.

    A model draws (r1, r2) with r1: S -> D and r2: (S, D) -> A, weights w.
    Constraints reproduce the kernel K[s, d, a]; objective is
    sum_w w * (r2(1, d) - r2(0, d)).  Solved with scipy's HiGHS.
    """
    n = K.shape[1]
    r1s = list(itertools.product(range(n), repeat=2))
    r2s = list(itertools.product((0, 1), repeat=2 * n))
    pairs = [(r1, r2) for r1 in r1s for r2 in r2s]
    A_eq = np.zeros((4 * n, len(pairs)))
    c = np.zeros(len(pairs))
    for j, (r1, r2) in enumerate(pairs):
        for s in (0, 1):
            x = r1[s]
            a = r2[s * n + x]
            A_eq[(s * n + x) * 2 + a, j] = 1
        c[j] = r2[n + d] - r2[d]
    b_eq = np.asarray(K, dtype=float).ravel()
    lo = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    hi = linprog(-c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert lo.status == 0 and hi.status == 0
    return lo.fun, -hi.fun


def scipy_feasible(A, b):
    res = linprog(np.zeros(A.shape[1]), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    return res.status == 0


def forward_sample(model, size, rng):
    """Sample (s, d, a) by drawing each exogenous variable and looping the mechanisms."""
    from causal_audit.scm import READS

    names = list(model.exogenous)
    draws = {k: rng.choice(len(model.exogenous[k]), size=size, p=model.exogenous[k]) for k in names}
    reads = READS[model.class_tag]
    out = np.zeros((2, model.n, 2))
    for i in range(size):
        u = {k: draws[k][i] for k in names}
        s = model.f_S[tuple(u[r] for r in reads["S"])]
        d = model.f_D[(s,) + tuple(u[r] for r in reads["D"])]
        a = model.f_A[(s, d) + tuple(u[r] for r in reads["A"])]
        out[s, d, a] += 1
    return out


def violating_counts(n=2, mass=10_000):
    """Counts piled on (s=0, d=0, a=0) and (s=1, d=0, a=1)."""
    counts = np.zeros((2, n, 2), dtype=np.int64)
    counts[0, 0, 0] = mass
    counts[1, 0, 1] = mass
    return counts
