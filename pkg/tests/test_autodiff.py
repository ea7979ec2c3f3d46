import numpy as np
import pytest

from strassen_lab import autodiff as ad
from strassen_lab.attention import AttentionParams, Kind, standard_attention


def test_square_gradient():
    g = ad.grad(lambda x: ad.sum(x * x), [np.array([[3.0]])])
    assert g[0][0, 0] == 6.0


def test_constant_function_has_zero_gradient():
    g = ad.grad(lambda x: ad.sum(np.ones((2, 2)) * 4.0) + 0.0 * ad.sum(x), [np.ones((2, 3))])
    assert np.array_equal(g[0], np.zeros((2, 3)))


def test_linear_fd_is_tight():
    w = np.random.default_rng(0).normal(size=(3, 4))
    assert ad.fd_check(lambda x: ad.sum(x * w), [np.zeros((3, 4))]) < 1e-10


def test_fd_check_rejects_bad_eps():
    with pytest.raises(ValueError):
        ad.fd_check(lambda x: ad.sum(x), [np.ones(1)], eps=0.5)


def test_unsupported_numpy_function_is_refused():
    def f(x):
        return np.tanh(x)

    with pytest.raises(TypeError):
        ad.grad(f, [np.ones((2, 2))])
    with ad.Tape() as tape:
        with pytest.raises(ad.UnsupportedOpError):
            tape.record("tanh", ())


def test_tape_is_topological():
    with ad.Tape() as tape:
        a = tape.leaf(np.ones((2, 2)))
        b = ad.exp(a) @ a
        ad.sum(ad.relu(b))
    for idx, node in enumerate(tape.nodes):
        assert all(p < idx for p in node.parents)


def test_every_op_against_fd():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    c = rng.uniform(0.5, 2.0, size=(3, 2))

    def f(a, b, c):
        m = a @ b
        s = ad.softmax(m, axis=1) + ad.exp(m * 0.3) / c - ad.log(c) * ad.softplus(m)
        s = ad.relu(s - 0.2) + ad.transpose(ad.reshape(s, (2, 3))).T.T
        s = ad.einsum("ij,kj->ik", s, s)
        return ad.mean(ad.select(s, (slice(0, 2), [0, 2]))) - ad.sum(ad.take_rows(a, np.array([0, 0, 2])))

    assert ad.fd_check(f, [a, b, c]) < 1e-6


def test_einsum_with_index_summed_inside_one_operand():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(3,))

    def f(x, y):
        return ad.sum(ad.einsum("ij,k->i", x, y) * w)

    assert ad.fd_check(f, [rng.normal(size=(3, 2)), rng.normal(size=(4,))]) < 1e-8


def test_masked_softmax_gives_zero_and_no_gradient_leak():
    mask = np.array([[True, False, True]])
    x = np.array([[0.1, 5.0, -0.3]])
    w = np.array([[1.0, 2.0, 3.0]])
    g = ad.grad(lambda t: ad.sum(ad.softmax(t, axis=1, mask=mask) * w), [x])[0]
    assert g[0, 1] == 0.0
    with ad.Tape() as tape:
        p = ad.softmax(tape.leaf(x), axis=1, mask=mask)
    assert p.value[0, 1] == 0.0


def test_linearity_of_gradients():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 3))
    p = AttentionParams.random(Kind.STANDARD, 3, rng, std=0.5)

    def out(t, k):
        q = t @ p["wq"].T
        s = ad.einsum("ie,je->ij", q, t @ p["wk"].T) * p.scale
        return ad.sum(ad.select(ad.softmax(s, axis=1) @ (t @ p["wv"].T), (slice(None), k)))

    total = ad.grad(lambda t: out(t, 0) + out(t, 1) + out(t, 2), [x])[0]
    parts = sum(ad.grad(lambda t, k=k: out(t, k), [x])[0] for k in range(3))
    assert np.abs(total - parts).max() < 1e-10
    # and the forward agrees with the numpy kernel
    with ad.Tape() as tape:
        t = tape.leaf(x)
        q = t @ p["wq"].T
        s = ad.einsum("ie,je->ij", q, t @ p["wk"].T) * p.scale
        a = ad.softmax(s, axis=1) @ (t @ p["wv"].T)
    assert np.allclose(a.value, standard_attention(x, p), atol=1e-14)


def test_relu_subgradient_at_zero_is_zero():
    g = ad.grad(lambda x: ad.sum(ad.relu(x)), [np.array([0.0, 1.0, -1.0])])[0]
    assert np.array_equal(g, [0.0, 1.0, 0.0])
