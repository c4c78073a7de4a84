import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symsgd.core import (
    Dataset,
    DimensionMismatch,
    Example,
    SparseVector,
    dot,
    saxpy,
)


def sv(d):
    return SparseVector.from_dict(d)


class TestSparseVector:
    def test_canonical_from_dict(self):
        x = sv({5: 1.5, 1: -2.0, 3: 0.0})
        assert x.indices.tolist() == [1, 5]
        assert x.values.tolist() == [-2.0, 1.5]
        assert x.nnz == 2

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            SparseVector([3, 1], [1.0, 2.0])

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            SparseVector([1, 1], [1.0, 2.0])

    def test_rejects_stored_zero(self):
        with pytest.raises(ValueError):
            SparseVector([0], [0.0])

    def test_rejects_negative_index(self):
        with pytest.raises(ValueError):
            SparseVector([-1, 2], [1.0, 1.0])

    def test_empty(self):
        x = SparseVector.empty()
        assert x.nnz == 0
        assert x.max_index() == -1

    def test_to_dense(self):
        x = sv({0: 1.0, 2: 3.0})
        assert x.to_dense(4).tolist() == [1.0, 0.0, 3.0, 0.0]
        with pytest.raises(DimensionMismatch):
            x.to_dense(2)


class TestDot:
    def test_example(self):
        assert dot(sv({0: 1.0, 2: 1.0}), np.array([4.0, 5.0, 6.0])) == 10.0

    def test_empty_is_zero(self):
        assert dot(SparseVector.empty(), np.array([4.0, 5.0])) == 0.0

    def test_out_of_range(self):
        with pytest.raises(DimensionMismatch):
            dot(sv({3: 1.0}), np.zeros(3))

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-10, 10), min_size=1, max_size=8),
        st.data(),
    )
    def test_bilinear_in_w(self, wlist, data):
        f = len(wlist)
        w = np.array(wlist)
        u = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=f, max_size=f)))
        entries = data.draw(
            st.dictionaries(
                st.integers(0, f - 1), st.floats(-5, 5).filter(lambda v: v != 0), max_size=f
            )
        )
        x = sv(entries)
        a = data.draw(st.floats(-3, 3))
        lhs = dot(x, a * w + u)
        rhs = a * dot(x, w) + dot(x, u)
        assert lhs == pytest.approx(rhs, abs=1e-9)


class TestSaxpy:
    def test_example(self):
        out = saxpy(np.array([1.0, 1.0]), 2.0, sv({1: 3.0}))
        assert out.tolist() == [1.0, 7.0]

    def test_zero_coefficient(self):
        w = np.array([2.0, 3.0])
        assert saxpy(w, 0.0, sv({0: 5.0})).tolist() == [2.0, 3.0]

    def test_does_not_mutate(self):
        w = np.array([1.0, 1.0])
        saxpy(w, 2.0, sv({0: 1.0}))
        assert w.tolist() == [1.0, 1.0]

    def test_out_of_range(self):
        with pytest.raises(DimensionMismatch):
            saxpy(np.zeros(2), 1.0, sv({5: 1.0}))

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_inverse(self, data):
        f = data.draw(st.integers(1, 8))
        w = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=f, max_size=f)))
        entries = data.draw(
            st.dictionaries(
                st.integers(0, f - 1), st.floats(-5, 5).filter(lambda v: v != 0), max_size=f
            )
        )
        c = data.draw(st.floats(-4, 4))
        x = sv(entries)
        back = saxpy(saxpy(w, c, x), -c, x)
        assert np.allclose(back, w, atol=1e-9)


class TestDataset:
    def test_validates_feature_range(self):
        with pytest.raises(DimensionMismatch):
            Dataset([Example(sv({4: 1.0}), 0.0)], num_features=3)

    def test_counts(self):
        d = Dataset([Example(sv({0: 1.0}), 1.0), Example(SparseVector.empty(), 0.0)], 2)
        assert d.num_examples == 2
        assert len(d) == 2
        assert d.labels().tolist() == [1.0, 0.0]

    def test_csr_matches_dense(self):
        d = Dataset(
            [Example(sv({0: 1.0, 2: -2.0}), 1.0), Example(sv({1: 3.0}), 0.0)],
            num_features=3,
        )
        dense = d.to_csr().toarray()
        assert dense.tolist() == [[1.0, 0.0, -2.0], [0.0, 3.0, 0.0]]
