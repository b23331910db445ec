import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_audit.tables import (
    CategorySpace, ConditionalKernel, ContingencyTable3, EmptyDataError, JointDistribution,
    ParseError, PositivityError, SchemaError, TableError, conditional_kernel, empirical_joint,
    kernel_from_table, parse_long_csv,
)

HEAD = "sex,department,admitted,count\n"


def test_single_row():
    t = parse_long_csv(HEAD + "male,A,yes,512\nfemale,B,no,0\n")
    assert t.total == 512
    assert np.count_nonzero(t.counts) == 1


def test_duplicate_rows_accumulate():
    t = parse_long_csv(HEAD + "m,A,y,3\nf,A,n,1\nm,A,y,4\nf,B,y,0\n")
    assert t.counts[0, 0, 0] == 7


def test_berkeley_shape(berkeley):
    assert berkeley.counts.shape == (2, 6, 2)
    assert berkeley.total == 4526
    assert berkeley.space.d_labels == tuple("ABCDEF")
    assert berkeley.counts[0, 0, 1] == 512 and berkeley.counts[1, 0, 1] == 89


def test_stream_input_and_bom():
    t = parse_long_csv(io.StringIO("﻿" + HEAD + "a,x,0,1\nb,y,1,2\n"))
    assert t.total == 3


@pytest.mark.parametrize("body,exc,line", [
    ("m,A,y\n", ParseError, 2),
    ("m,A,y,1\nf,A,n,x\n", ParseError, 3),
    ("m,A,y,1.5\n", ParseError, 2),
])
def test_parse_errors_carry_line(body, exc, line):
    with pytest.raises(exc) as info:
        parse_long_csv(HEAD + body)
    assert info.value.line == line


def test_bad_header():
    with pytest.raises(ParseError):
        parse_long_csv("sex,dept,admitted,count\nm,A,y,1\n")


def test_negative_count():
    with pytest.raises(TableError):
        parse_long_csv(HEAD + "m,A,y,-1\nf,A,n,1\n")


def test_three_sexes_or_outcomes():
    with pytest.raises(SchemaError):
        parse_long_csv(HEAD + "m,A,y,1\nf,A,n,1\nx,A,y,1\n")
    with pytest.raises(SchemaError):
        parse_long_csv(HEAD + "m,A,y,1\nf,A,n,1\nf,A,maybe,1\n")


def test_single_sex_is_positivity_failure():
    with pytest.raises(PositivityError):
        parse_long_csv(HEAD + "m,A,y,1\nm,B,n,1\n")


def test_coding_pins_order():
    text = HEAD + "female,A,yes,1\nmale,A,no,2\nmale,B,yes,3\n"
    t = parse_long_csv(text, {"sex": {"male": 0, "female": 1}, "admitted": {"no": 0, "yes": 1}})
    assert t.space.s_labels == ("male", "female")
    assert t.counts[1, 0, 1] == 1 and t.counts[0, 0, 0] == 2
    with pytest.raises(SchemaError):
        parse_long_csv(text, {"sex": {"male": 0}})


def test_round_trip(berkeley):
    again = parse_long_csv(berkeley.to_csv(), berkeley.space.coding())
    assert np.array_equal(again.counts, berkeley.counts)
    assert again.space == berkeley.space


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=8, max_size=8))
def test_round_trip_property(cells):
    counts = np.array(cells).reshape(2, 2, 2)
    counts[0, 0, 0] += 1
    counts[1, 0, 0] += 1
    t = ContingencyTable3.from_counts(counts)
    again = parse_long_csv(t.to_csv(), t.space.coding())
    assert np.array_equal(again.counts, counts)


def test_space_invariants():
    with pytest.raises(SchemaError):
        CategorySpace(("a", "a"), (0, 1), (0, 1))
    with pytest.raises(SchemaError):
        CategorySpace(("a", "b"), (0,), (0, 1))
    assert CategorySpace.default(3).shape == (2, 3, 2)


def test_table_is_immutable(berkeley):
    with pytest.raises(ValueError):
        berkeley.counts[0, 0, 0] = 1


def test_empirical_joint_examples():
    c = np.zeros((2, 2, 2), dtype=int)
    c[0, 0, 0] = c[1, 0, 0] = 1
    P = empirical_joint(ContingencyTable3.from_counts(c)).probs
    assert P[0, 0, 0] == P[1, 0, 0] == 0.5 and P.sum() == 1.0
    c = np.zeros((2, 2, 2), dtype=int)
    c[1, 1, 1] = 9
    assert empirical_joint(ContingencyTable3.from_counts(c)).probs[1, 1, 1] == 1.0


def test_empirical_joint_exact_rational(rng):
    c = rng.multinomial(97, np.full(12, 1 / 12)).reshape(2, 3, 2)
    P = empirical_joint(ContingencyTable3.from_counts(c)).probs
    for k, p in zip(c.ravel(), P.ravel()):
        assert p == float(Fraction(int(k), 97))
    assert abs(P.sum() - 1) <= 1e-12


def test_empty_table():
    with pytest.raises(EmptyDataError):
        ContingencyTable3.from_counts(np.zeros((2, 2, 2), dtype=int))


def test_kernel_uniform_and_positivity():
    n = 3
    J = JointDistribution.from_probs(np.full((2, n, 2), 1 / (4 * n)))
    assert np.allclose(conditional_kernel(J).kernel, 1 / (2 * n), atol=1e-15)
    P = np.zeros((2, n, 2))
    P[0] = 1 / (2 * n)
    with pytest.raises(PositivityError) as info:
        conditional_kernel(JointDistribution.from_probs(P))
    assert info.value.stratum == 1


def test_kernel_round_trip_1000(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        K = rng.dirichlet(np.ones(2 * n), size=2).reshape(2, n, 2)
        K /= K.sum(axis=(1, 2), keepdims=True)
        p = rng.dirichlet([1, 1])
        p = np.clip(p, 1e-3, None)
        p /= p.sum()
        kern = ConditionalKernel.from_array(K)
        J = kern.joint(p)
        J = JointDistribution.from_probs(J.probs / J.probs.sum())
        assert np.max(np.abs(conditional_kernel(J).kernel - K)) <= 1e-12


def test_kernel_rows_checked():
    with pytest.raises(TableError):
        ConditionalKernel.from_array(np.full((2, 2, 2), 0.3))


def test_kernel_from_table(berkeley):
    K = kernel_from_table(berkeley).kernel
    assert np.allclose(K.sum(axis=(1, 2)), 1.0)
    assert K[1, 0, 1] == pytest.approx(89 / 1835)
