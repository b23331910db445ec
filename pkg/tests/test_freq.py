import math

import numpy as np
import pytest
from scipy import stats

import oracles
from causal_audit import ivcore, scm
from causal_audit.freq import (
    UntestableError, chi_square_upper_tail, cond_indep_test, demographic_parity_test, ml_iv_check,
    pearson_2x2, population_gamma, q_table, wrr_test,
)
from causal_audit.tables import ContingencyTable3, PositivityError


def table(counts):
    return ContingencyTable3.from_counts(np.asarray(counts))


def null_table(rng, n=3, per_stratum=500):
    """Counts with S and A independent inside every department."""
    c = np.zeros((2, n, 2), dtype=np.int64)
    for d in range(n):
        ps, pa = rng.uniform(0.2, 0.8, size=2)
        cell = np.outer([1 - ps, ps], [1 - pa, pa]).ravel()
        c[:, d, :] = rng.multinomial(per_stratum, cell).reshape(2, 2)
    return table(c)


# -- chi-square tail ----------------------------------------------------------------------

def test_tail_examples():
    assert chi_square_upper_tail(0.0, 1) == 1.0
    assert chi_square_upper_tail(3.841, 1) == pytest.approx(math.erfc(math.sqrt(3.841 / 2)), abs=1e-12)
    assert chi_square_upper_tail(3.841, 1) == pytest.approx(0.05, abs=1e-4)
    assert chi_square_upper_tail(200.0, 1) < 1e-40
    assert chi_square_upper_tail(200.0, 1) == pytest.approx(math.erfc(10.0), rel=1e-12)


@pytest.mark.parametrize("df", [1, 2, 5, 6, 30])
def test_tail_matches_scipy(df):
    for x in (0.1, 1.0, df, 3.0 * df, 60.0):
        assert chi_square_upper_tail(x, df) == pytest.approx(stats.chi2.sf(x, df), abs=1e-12)


def test_tail_domain():
    for bad in (0, -1, 1.5):
        with pytest.raises(ValueError):
            chi_square_upper_tail(1.0, bad)
    with pytest.raises(ValueError):
        chi_square_upper_tail(-0.5, 1)


def test_pearson_matches_scipy(rng):
    for _ in range(50):
        t = rng.integers(1, 200, size=(2, 2))
        ref = stats.chi2_contingency(t, correction=False)[0]
        assert pearson_2x2(t) == pytest.approx(ref, rel=1e-12)
    assert pearson_2x2([[0, 0], [3, 4]]) is None


# -- conditional independence --------------------------------------------------------------

def test_perfect_association_stratum():
    c = np.zeros((2, 2, 2), dtype=int)
    c[0, 0, 1] = 100
    c[1, 0, 0] = 100
    res = cond_indep_test(table(c))
    assert res.statistic == pytest.approx(200.0)
    assert res.df == 1 and res.p_value < 1e-6
    assert res.strata_detail["1"] == {"skipped": True}


def test_identical_rows():
    c = np.zeros((2, 2, 2), dtype=int)
    c[:, 0, :] = [[30, 10], [30, 10]]
    res = cond_indep_test(table(c))
    assert res.statistic == 0.0 and res.p_value == 1.0 and not res.reject


def test_untestable():
    c = np.zeros((2, 2, 2), dtype=int)
    c[0, :, :] = 5
    with pytest.raises(UntestableError):
        cond_indep_test(table(c))


def test_null_data_rarely_rejected_at_1_percent(rng):
    small = sum(cond_indep_test(null_table(rng, 3, 10_000)).p_value > 0.01 for _ in range(200))
    assert small / 200 >= 0.95


def test_relabel_invariance(berkeley):
    base = cond_indep_test(berkeley).statistic
    perm = np.array([3, 0, 5, 1, 4, 2])
    assert cond_indep_test(table(berkeley.counts[:, perm])).statistic == pytest.approx(base, rel=1e-12)
    assert cond_indep_test(table(berkeley.counts[::-1])).statistic == pytest.approx(base, rel=1e-12)


def test_berkeley_department_a_drives_dependence(berkeley):
    res = cond_indep_test(berkeley)
    assert res.df == 6
    worst = max(res.strata_detail, key=lambda k: res.strata_detail[k]["statistic"])
    assert worst == "A"


def test_size_control_small(rng):
    rejections = sum(cond_indep_test(null_table(rng)).reject for _ in range(400))
    assert 0.02 <= rejections / 400 <= 0.08


# -- demographic parity ----------------------------------------------------------------------

def test_campus_wide_summary():
    men, women = 8442, 4321
    men_in, women_in = round(0.442 * men), round(0.346 * women)
    c = np.zeros((2, 2, 2), dtype=int)
    c[0, 0] = [men - men_in, men_in]
    c[1, 0] = [women - women_in, women_in]
    res = demographic_parity_test(table(c))
    ref = stats.chi2_contingency([[men - men_in, men_in], [women - women_in, women_in]], correction=False)
    assert res.statistic == pytest.approx(ref[0], rel=1e-12)
    assert res.p_value == pytest.approx(ref[1], rel=1e-9)
    assert res.p_value < 1e-6
    assert res.strata_detail["rates"][0] == pytest.approx(0.442, abs=1e-4)


def test_parity_trivial_cases():
    c = np.zeros((2, 2, 2), dtype=int)
    c[:, 0, :] = [[40, 10], [20, 5]]
    assert demographic_parity_test(table(c)).p_value == 1.0
    res = demographic_parity_test(table(np.full((2, 2, 2), 2)))
    assert res.statistic == 0.0 and res.p_value == 1.0


def test_parity_needs_both_sexes():
    c = np.zeros((2, 2, 2), dtype=int)
    c[0] = 3
    with pytest.raises(UntestableError):
        demographic_parity_test(table(c))


def test_berkeley_aggregate_disparity(berkeley):
    res = demographic_parity_test(berkeley)
    assert res.reject and res.p_value < 1e-15
    rates = res.strata_detail["rates"]
    assert rates[0] > rates[1]


# -- ML check ----------------------------------------------------------------------------------

def test_ml_check_examples(berkeley):
    assert ml_iv_check(berkeley).satisfied
    rep = ml_iv_check(table(oracles.violating_counts(2, 10_000)))
    assert not rep.satisfied and rep.max_lhs == 2.0
    rep = ml_iv_check(table(np.full((2, 4, 2), 7)))
    assert rep.satisfied and rep.max_lhs == pytest.approx(0.25)


def test_ml_check_positivity():
    c = np.zeros((2, 2, 2), dtype=int)
    c[0] = 1
    with pytest.raises(PositivityError):
        ml_iv_check(table(c))


# -- per-inequality association test -------------------------------------------------------

def test_q_table_definition(rng):
    c = rng.integers(0, 30, size=(2, 3, 2))
    c[:, 0, 0] += 1
    for d in range(3):
        for a in (0, 1):
            q = q_table(c, d, a)
            ns = c.sum(axis=(1, 2))
            assert q[1, 1] == c[1, d, a]
            assert q[0, 1] == ns[0] - c[0, d, 1 - a]
            assert np.array_equal(q.sum(axis=1), ns)


def test_berkeley_wrr(berkeley):
    rep = wrr_test(berkeley)
    assert len(rep.cells) == 12
    assert all(c.gamma_hat < -0.6 for c in rep.cells)
    assert all(c.association_p == 0.0 and c.underflow for c in rep.cells)
    assert not any(c.challenged for c in rep.cells)
    assert not rep.reject


def test_independent_q_is_unchallenged():
    # both strata identical with K(d, a) + K(d, 1-a) = 1 at d = 0: gamma^{0,a} = 0
    c = np.zeros((2, 2, 2), dtype=int)
    c[:, 0, :] = [30, 70]
    rep = wrr_test(table(c))
    for cell in rep.cells:
        if cell.d == 0:
            assert cell.gamma_hat == 0.0 and not cell.challenged and cell.adjusted_p == 1.0


def test_wrr_power_on_violating_kernel():
    rng = np.random.default_rng(8)
    K = np.array([[[0.6, 0.1], [0.2, 0.1]], [[0.1, 0.6], [0.1, 0.2]]])
    assert not ivcore.iv_slacks(K).satisfied
    c = np.stack([rng.multinomial(10_000, K[s].ravel()).reshape(2, 2) for s in (0, 1)])
    rep = wrr_test(table(c))
    assert rep.reject
    assert any(cell.gamma_hat > 0 and cell.adjusted_p < 0.05 for cell in rep.cells)


def test_wrr_positivity():
    c = np.zeros((2, 2, 2), dtype=int)
    c[1] = 4
    with pytest.raises(PositivityError):
        wrr_test(table(c))


def test_population_gamma_iff_inequalities(rng):
    for _ in range(2000):
        K = ivcore.random_kernel(int(rng.integers(2, 6)), rng, 0.3).kernel
        assert bool(np.all(population_gamma(K) <= 0)) == ivcore.iv_slacks(K).satisfied


def test_wrr_soundness_on_graph_fair_models():
    for seed in range(20):
        m = scm.random_model("cf", 3, seed, force="graph", positive=True)
        K = scm.induced_kernel(m).kernel
        gamma = population_gamma(K)
        assert np.all(gamma <= 1e-12)
        t = scm.sample_table(m, 20_000, np.random.default_rng(seed))
        ns = t.counts.sum(axis=(1, 2))
        est = wrr_test(t).gammas()
        for d in range(3):
            for a in (0, 1):
                q = q_table(K * ns[:, None, None], d, a)
                p1, p0 = q[1, 1] / ns[1], q[0, 1] / ns[0]
                sigma = math.sqrt(p1 * (1 - p1) / ns[1] + p0 * (1 - p0) / ns[0])
                assert abs(est[d, a] - gamma[d, a]) <= 3 * sigma + 1e-12


def test_report_serialization(berkeley):
    d = wrr_test(berkeley).to_dict()
    assert list(d) == ["level", "bonferroni_factor", "reject", "cells"]
    assert d["cells"][0]["association_p_underflow"] is True
