import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strassen_lab.tensor_core import MLPParams, ShapeError, matmul, mlp_eval, relu, stable_softmax, strassen_matmul


def test_matmul_small_known_product():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal(matmul(a, b), [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_rejects_inner_mismatch():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_rejects_vectors():
    with pytest.raises(ShapeError):
        matmul(np.ones(3), np.ones((3, 1)))


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 40), q=st.integers(1, 40), r=st.integers(1, 40), seed=st.integers(0, 2**32 - 1),
       cutoff=st.sampled_from([1, 2, 4, 8]))
def test_strassen_matches_naive_on_any_shape(p, q, r, seed, cutoff):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((p, q)), rng.standard_normal((q, r))
    ref = matmul(a, b)
    got = strassen_matmul(a, b, cutoff=cutoff)
    assert got.shape == (p, r)
    assert np.allclose(got, ref, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(ref).max()))


def test_strassen_exact_on_small_integers():
    rng = np.random.default_rng(3)
    a = rng.integers(-4, 5, (37, 29)).astype(float)
    b = rng.integers(-4, 5, (29, 45)).astype(float)
    assert np.array_equal(strassen_matmul(a, b, cutoff=2), a @ b)


def test_strassen_bad_cutoff():
    with pytest.raises(ValueError):
        strassen_matmul(np.ones((2, 2)), np.ones((2, 2)), cutoff=0)


def test_softmax_basics():
    p = stable_softmax(np.array([1000.0, 1000.0, -np.inf]))
    assert np.array_equal(p, [0.5, 0.5, 0.0])
    with pytest.raises(ValueError):
        stable_softmax(np.array([]))
    with pytest.raises(ValueError):
        stable_softmax(np.array([-np.inf, -np.inf]))
    with pytest.raises(ValueError):
        stable_softmax(np.array([np.nan, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-700, 700), min_size=1, max_size=20), st.floats(-1e3, 1e3))
def test_softmax_shift_invariant_and_normalized(xs, c):
    x = np.array(xs)
    p = stable_softmax(x)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.allclose(p, stable_softmax(x + c), atol=1e-12)


def test_mlp_chain_and_eval():
    mlp = MLPParams([(np.array([[1.0, -1.0]]), [0.5]), (np.array([[2.0]]), [1.0])])
    assert mlp.size == 2 + 1 + 1 + 1
    x = np.array([[3.0, 1.0], [0.0, 4.0]])
    # second row: relu(-4 + 0.5) = 0
    assert np.allclose(mlp_eval(mlp, x), [[2 * 2.5 + 1], [1.0]])
    with pytest.raises(ShapeError):
        MLPParams([(np.ones((3, 2)), np.zeros(3)), (np.ones((1, 2)), np.zeros(1))])
    assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
