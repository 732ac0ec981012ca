from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from liplab.map_operator import (
    BoundedSeq,
    MapOperator,
    NetPremiseError,
    abs_diff_le,
    apply,
    net_amplification_certificate,
    partition_for_diameter,
)
from liplab.verify import random_net_instance


def example_seq():
    return BoundedSeq.from_values([0, 0.4, 1.0, 1.3, 2.2], labels=[1, 2, 3, 4, 5])


def test_hand_bucketing_example():
    a = example_seq()
    op = partition_for_diameter([a], 0.5)
    blocks = [[a.labels[i] for i in b] for b in op.blocks()]
    assert blocks == [[1, 2], [3, 4], [5]]
    assert [a.labels[i] for i in op.reps] == [1, 3, 5]
    pa = apply(op, a)
    assert pa.values.tolist() == [0, 0, 1.0, 1.0, 2.2]
    assert (pa - a).sup_norm == 0.4


def test_single_cell_is_rank_one():
    vals = np.array([[0.01, 0.02, 0.03], [5.1, 5.2, 5.0]])
    op = partition_for_diameter(vals, 1.0)
    assert op.rank == 1
    a = BoundedSeq.from_values([3.0, -1.0, 7.0])
    assert apply(op, a).values.tolist() == [3.0, 3.0, 3.0]


def test_identity_case():
    vals = np.arange(50, dtype=float)[None, :] * 2.0
    op = partition_for_diameter(vals, 0.5)
    assert op.rank == 50
    a = BoundedSeq.from_values(np.random.default_rng(0).normal(size=50))
    assert np.array_equal(apply(op, a).values, a.values)


def test_constants_fixed():
    op = partition_for_diameter(np.random.default_rng(1).normal(size=(3, 100)), 0.3)
    c = BoundedSeq.from_values(np.full(100, -2.5))
    assert np.array_equal(apply(op, c).values, c.values)


def test_label_mismatch_rejected():
    op = partition_for_diameter([example_seq()], 0.5)
    with pytest.raises(ValueError):
        apply(op, BoundedSeq.from_values([0, 1, 2, 3, 4]))
    with pytest.raises(ValueError):
        partition_for_diameter([example_seq(), BoundedSeq.from_values([0, 1, 2, 3, 4])], 0.5)
    with pytest.raises(ValueError):
        partition_for_diameter([example_seq()], 0.0)


def test_abs_diff_le_is_exact_at_the_threshold():
    # the float difference rounds down onto eps while the exact gap exceeds it
    x, y, eps = 0.08, -0.05000000000000001, 0.13
    assert abs(x - y) <= eps
    assert Fraction(x) - Fraction(y) > Fraction(eps)
    assert not abs_diff_le(x, y, eps)
    assert abs_diff_le(1.5, 1.0, 0.5)
    assert abs_diff_le(np.array([1.0, 2.0]), np.array([1.0, 3.0]), 1.0).all()


@given(st.floats(1e-3, 10.0), st.integers(0, 2**31 - 1))
@settings(max_examples=100, deadline=None)
def test_guarantee_holds_on_cell_boundaries(eps, seed):
    # values within a few ulps of k * eps, where float cell keys can disagree with exact cells
    rng = np.random.default_rng(seed)
    k = rng.integers(-50, 50, size=(2, 400))
    base = k * eps
    ulps = rng.integers(-3, 4, size=base.shape)
    vals = np.nextafter(base, np.where(ulps > 0, np.inf, -np.inf))
    vals = np.where(ulps == 0, base, vals)
    op = partition_for_diameter(vals, eps)
    assert np.all(abs_diff_le(op.apply_values(vals), vals, eps))


@given(
    arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 200)), elements=st.floats(-1e6, 1e6)),
    st.floats(1e-6, 1e3),
)
@settings(max_examples=200, deadline=None)
def test_partition_properties(A, eps):
    op = partition_for_diameter(A, eps)
    P = op.apply_values(A)
    # eps-approximation on the generating vectors, decided exactly
    assert np.all(abs_diff_le(P, A, eps))
    assert np.array_equal(op.apply_values(P), P)
    b = np.arange(A.shape[1], dtype=float)
    assert np.array_equal(op.apply_values(A[0] + 3.0 * b), op.apply_values(A[0]) + 3.0 * op.apply_values(b))
    assert np.array_equal(op.apply_values(np.ones(A.shape[1])), np.ones(A.shape[1]))
    assert 1 <= op.rank <= A.shape[1]
    # norm one: ||p(a)||_inf <= ||a||_inf with equality on constants
    assert np.abs(op.apply_values(b)).max() <= np.abs(b).max()


def test_matrix_agrees_with_gather():
    A = np.random.default_rng(2).normal(size=(2, 40))
    op = partition_for_diameter(A, 0.7)
    M = op.matrix()
    assert M.shape == (40, 40)
    assert np.allclose(M @ A[0], op.apply_values(A[0]))
    assert np.array_equal(M @ M, M)


def test_operator_json_round_trip():
    op = partition_for_diameter([example_seq()], 0.5)
    back = MapOperator.from_json(op.to_json())
    assert back.labels == op.labels
    assert np.array_equal(back.block_of, op.block_of) and np.array_equal(back.reps, op.reps)


def test_bounded_seq_csv_round_trip():
    a = BoundedSeq.from_values([0.1, -2.5, 1e-300, 3.0], labels=["a", "b", "c", "d"])
    back = BoundedSeq.from_csv(a.to_csv())
    assert back.labels == a.labels and np.array_equal(back.values, a.values)


def test_net_of_itself():
    rng = np.random.default_rng(3)
    F = [BoundedSeq.from_values(v) for v in rng.normal(size=(5, 300))]
    op = partition_for_diameter(F, 0.2)
    cert = net_amplification_certificate(F, F, op, 0.2)
    assert cert.passed and cert.worst_ratio <= 1.0


def test_violated_premise_raises():
    F = [BoundedSeq.from_values(np.zeros(10))]
    K = [BoundedSeq.from_values(np.ones(10))]
    op = partition_for_diameter(F, 0.1)
    with pytest.raises(NetPremiseError):
        net_amplification_certificate(K, F, op, 0.1)
    cert = net_amplification_certificate(K, F, op, 0.1, strict=False)
    assert not cert.net_ok and not cert.passed


@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 10.0))
@settings(max_examples=40, deadline=None)
def test_three_eps_amplification(seed, eps):
    K, F = random_net_instance(np.random.default_rng(seed), eps, max_labels=300)
    op = partition_for_diameter(F, eps)
    cert = net_amplification_certificate(K, F, op, eps)
    assert cert.passed
    assert cert.worst_ratio <= 3.0
