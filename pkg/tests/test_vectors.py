"""Core vector operations against hand arithmetic and brute-force oracles."""

import math

import numpy as np
import pytest

from hybrid_retriever.vectors import (
    CompositeField,
    CompositeVector,
    Space,
    SparseVector,
    composite_score,
    cosine_similarity,
    dense,
    dot_dense,
    dot_sparse,
    l2_distance,
    normalize_l2,
)


def sv(d):
    return SparseVector.from_dict(d)


class TestDotDense:
    def test_zero_vector(self):
        assert dot_dense(dense([0, 0]), dense([3, 4])) == 0.0

    def test_hand_values(self):
        assert dot_dense(dense([1, 2]), dense([3, 4])) == 11.0
        assert dot_dense(dense([2, 0]), dense([2, 0])) == 4.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dot_dense(dense([1]), dense([1, 2]))

    def test_symmetry_and_bilinearity(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            d = rng.integers(1, 20)
            a = dense(rng.normal(size=d))
            b = dense(rng.normal(size=d))
            assert dot_dense(a, b) == dot_dense(b, a)
            # power-of-two scales are exact in float32, so equality is sharp
            alpha = float(2.0 ** rng.integers(-3, 4))
            lhs = dot_dense(dense(alpha * a.astype(np.float64)), b)
            rhs = alpha * dot_dense(a, b)
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


class TestDotSparse:
    def test_empty(self):
        assert dot_sparse(sv({}), sv({5: 1.0})) == 0.0

    def test_hand_merge(self):
        assert dot_sparse(sv({1: 2.0, 5: 3.0}), sv({5: 4.0, 7: 1.0})) == 12.0

    def test_disjoint(self):
        assert dot_sparse(sv({1: 1.0}), sv({2: 1.0})) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            a = _random_sparse(rng)
            b = _random_sparse(rng)
            assert dot_sparse(a, b) == dot_sparse(b, a)

    def test_dense_materialization_oracle(self):
        # integer-valued vectors: exact agreement with a dense dot product
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = _random_sparse(rng, integer=True)
            b = _random_sparse(rng, integer=True)
            top = 1 + max([0, *a.term_ids.tolist(), *b.term_ids.tolist()])
            da = np.zeros(top)
            db = np.zeros(top)
            da[a.term_ids] = a.values
            db[b.term_ids] = b.values
            assert dot_sparse(a, b) == float(np.dot(da, db))


class TestL2Distance:
    def test_identity(self):
        v = dense([1.5, -2.5, 3.0])
        assert l2_distance(v, v) == 0.0

    def test_hand_values(self):
        assert l2_distance(dense([0, 0]), dense([3, 4])) == 5.0
        assert l2_distance(dense([1]), dense([-1])) == 2.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            l2_distance(dense([1, 2, 3]), dense([1, 2]))


class TestCosine:
    def test_unit_cases(self):
        assert cosine_similarity(dense([1, 0]), dense([1, 0])) == 1.0
        assert cosine_similarity(dense([1, 0]), dense([0, 1])) == 0.0
        assert cosine_similarity(dense([1, 0]), dense([-1, 0])) == -1.0

    def test_zero_vector_defined_as_zero(self):
        assert cosine_similarity(dense([0, 0]), dense([1, 2])) == 0.0

    def test_range_and_self(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            a = dense(rng.normal(size=8))
            b = dense(rng.normal(size=8))
            c = cosine_similarity(a, b)
            assert -1.0 - 1e-9 <= c <= 1.0 + 1e-9
            assert cosine_similarity(a, a) == 1.0  # exact, nonzero vector


class TestNormalize:
    def test_hand_value(self):
        np.testing.assert_allclose(normalize_l2(dense([3, 4])), [0.6, 0.8], rtol=1e-7)

    def test_zero_passthrough(self):
        np.testing.assert_array_equal(normalize_l2(dense([0, 0])), [0.0, 0.0])

    def test_single(self):
        np.testing.assert_allclose(normalize_l2(dense([5])), [1.0])


class TestComposite:
    def test_single_field_degenerate(self):
        q = CompositeVector((CompositeField("a", dense([1, 2]), 1.0),))
        d = CompositeVector((CompositeField("a", dense([3, 4]), 1.0),))
        assert composite_score(q, d) == 11.0

    def test_hand_weighted_sum(self):
        q = CompositeVector((
            CompositeField("A", dense([1, 0]), 0.3),
            CompositeField("B", sv({2: 2.0}), 0.7),
        ))
        d = CompositeVector((
            CompositeField("A", dense([2, 5]), 1.0),
            CompositeField("B", sv({2: 5.0}), 1.0),
        ))
        assert composite_score(q, d) == pytest.approx(0.3 * 2.0 + 0.7 * 10.0, rel=1e-12)

    def test_zero_weight_ignores_field(self):
        q = CompositeVector((CompositeField("a", dense([100.0]), 0.0),))
        d = CompositeVector((CompositeField("a", dense([100.0]), 1.0),))
        assert composite_score(q, d) == 0.0

    def test_schema_mismatch(self):
        q = CompositeVector((CompositeField("a", dense([1]), 1.0),))
        d = CompositeVector((CompositeField("b", dense([1]), 1.0),))
        with pytest.raises(ValueError):
            composite_score(q, d)

    def test_equals_per_field_sum(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            qa, da = dense(rng.normal(size=4)), dense(rng.normal(size=4))
            qb, db = _random_sparse(rng), _random_sparse(rng)
            w1, w2 = rng.normal(), rng.normal()
            q = CompositeVector((CompositeField("x", qa, w1), CompositeField("y", qb, w2)))
            d = CompositeVector((CompositeField("x", da, 1.0), CompositeField("y", db, 1.0)))
            expected = w1 * dot_dense(qa, da) + w2 * dot_sparse(qb, db)
            assert composite_score(q, d) == pytest.approx(expected, rel=1e-9, abs=1e-12)


class TestSparseInvariants:
    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            SparseVector(np.array([5, 1]), np.array([1.0, 2.0], dtype=np.float32))

    def test_rejects_zero_values(self):
        with pytest.raises(ValueError):
            SparseVector(np.array([1]), np.array([0.0], dtype=np.float32))

    def test_from_pairs_sorts_and_drops_zeros(self):
        v = SparseVector.from_pairs([(5, 1.0), (1, 2.0), (3, 0.0)])
        assert v.term_ids.tolist() == [1, 5]
        assert v.to_dict() == {1: 2.0, 5: 1.0}


class TestSpace:
    def test_orientations(self):
        assert Space("l2_dense").orientation == "distance"
        for kind in ("cosine_dense", "ip_dense", "ip_sparse", "composite_ip"):
            assert Space(kind).orientation == "similarity"

    def test_distance_negates_similarity(self):
        a, b = dense([1, 2]), dense([3, 4])
        assert Space("ip_dense").distance(a, b) == -11.0
        assert Space("l2_dense").distance(dense([0, 0]), dense([3, 4])) == 5.0

    def test_vector_kind_checks(self):
        with pytest.raises(ValueError):
            Space("ip_sparse").check_vector(dense([1.0]))
        with pytest.raises(ValueError):
            Space("l2_dense").check_vector(sv({1: 1.0}))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Space("hamming")


def _random_sparse(rng, integer=False, max_terms=12, id_space=30) -> SparseVector:
    n = int(rng.integers(0, max_terms))
    ids = sorted(rng.choice(id_space, size=n, replace=False).tolist()) if n else []
    if integer:
        vals = rng.integers(1, 9, size=n).astype(float)
    else:
        vals = rng.normal(size=n)
        vals[vals == 0] = 1.0
    return SparseVector.from_pairs(zip(ids, vals.tolist() if n else []))
