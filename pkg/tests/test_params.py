import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustfed.errors import NumericError, StructuralError, UsageError
from robustfed.params import add, as_vector, coordinate_median, coordinate_stats, euclidean_distance, scale, zero

finite = st.floats(-1e6, 1e6, allow_nan=False)


def vectors(dim, count):
    return st.lists(st.lists(finite, min_size=dim, max_size=dim), min_size=count, max_size=count)


def test_add():
    assert add([1, 2], [3, 4]).tolist() == [4, 6]
    v = as_vector([0.25, -3.0, 7.5])
    assert add(v, zero(3)).tolist() == v.tolist()
    assert add([0.5, -0.5], [-0.5, 0.5]).tolist() == [0, 0]


def test_add_dimension_mismatch():
    with pytest.raises(StructuralError):
        add([1, 2], [1, 2, 3])


@pytest.mark.parametrize("c, expected", [(0, [0, 0]), (1, [1, 2])])
def test_scale(c, expected):
    assert scale([1, 2], c).tolist() == expected


def test_scale_half():
    assert scale([2, -4], 0.5).tolist() == [1, -2]


def test_scale_rejects_nonfinite_factor():
    with pytest.raises(UsageError):
        scale([1.0], float("inf"))


def test_as_vector_rejects_nan():
    with pytest.raises(NumericError):
        as_vector([1.0, float("nan")])


def test_distance_examples():
    assert euclidean_distance([0, 0], [3, 4]) == 5
    assert euclidean_distance([1.5, -2], [1.5, -2]) == 0
    assert euclidean_distance([1, 1, 1], [2, 2, 2]) == pytest.approx(1.7320508, abs=1e-7)


def test_distance_mismatch():
    with pytest.raises(StructuralError):
        euclidean_distance([0], [0, 1])


def test_median_examples():
    assert coordinate_median([[1], [2], [9]]).tolist() == [2]
    assert coordinate_median([[1], [3]]).tolist() == [2]
    assert coordinate_median([[1, 10], [2, 20], [3, 30]]).tolist() == [2, 20]


def test_median_empty():
    with pytest.raises(UsageError):
        coordinate_median([])


def test_stats_examples():
    mean, std = coordinate_stats([[2], [2]])
    assert mean.tolist() == [2] and std.tolist() == [0]
    mean, std = coordinate_stats([[1], [3]])
    assert mean.tolist() == [2] and std.tolist() == [1]
    v = [0.3, -1.25, 4.0]
    mean, std = coordinate_stats([v])
    assert mean.tolist() == v and std.tolist() == [0, 0, 0]
    with pytest.raises(UsageError):
        coordinate_stats([])


@settings(max_examples=200)
@given(st.integers(1, 8).flatmap(lambda d: vectors(d, 3)))
def test_distance_symmetry_and_triangle(vs):
    a, b, c = vs
    assert euclidean_distance(a, b) == euclidean_distance(b, a)
    assert euclidean_distance(a, c) <= euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-6


def _median_oracle(vs):
    out = []
    for j in range(len(vs[0])):
        col = sorted(v[j] for v in vs)
        k = len(col)
        out.append(col[k // 2] if k % 2 else (col[k // 2 - 1] + col[k // 2]) / 2.0)
    return out


@settings(max_examples=200)
@given(st.integers(1, 8).flatmap(lambda d: st.integers(1, 9).flatmap(lambda k: vectors(d, k))), st.randoms())
def test_median_matches_sort_oracle_and_is_permutation_invariant(vs, rnd):
    expected = _median_oracle(vs)
    assert coordinate_median(vs).tolist() == expected
    shuffled = list(vs)
    rnd.shuffle(shuffled)
    assert coordinate_median(shuffled).tolist() == expected


@settings(max_examples=200)
@given(st.integers(1, 8).flatmap(lambda d: vectors(d, 3)), finite, finite)
def test_vector_space_axioms(vs, c1, c2):
    a, b, c = (np.array(v) for v in vs)
    tol = 1e-12

    def close(x, y):
        return np.allclose(x, y, rtol=tol, atol=tol * (1 + np.abs(x).max() + np.abs(y).max()))

    assert close(add(add(a, b), c), add(a, add(b, c)))
    assert close(scale(add(a, b), c1), add(scale(a, c1), scale(b, c1)))
    assert close(scale(a, c1 + c2), add(scale(a, c1), scale(a, c2)))
