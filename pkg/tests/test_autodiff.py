import numpy as np
import pytest

from spark.autodiff import Tape, backward
from spark.errors import InvalidInputError, TapeReusedError
from spark.gradcheck import grad_check
from spark.params import ParameterStore, adam_step


def finite_diff(f, x, eps=1e-6):
    """Central-difference gradient of scalar f over a flat numpy array."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy(); xp.flat[i] += eps
        xm = x.copy(); xm.flat[i] -= eps
        g.flat[i] = (f(xp) - f(xm)) / (2 * eps)
    return g


def test_quadratic_gradient():
    store = ParameterStore()
    store.add("theta", np.array([3.0]))

    def loss(s):
        t = Tape()
        th = t.leaf(s["theta"])
        L = t.sum(t.mul(th, th))
        backward(t, L)
        return float(L.value)

    err = grad_check(loss, store, eps=1e-5)
    assert err <= 1e-9
    assert abs(store["theta"].grad[0] - 6.0) < 1e-12


def test_tape_reuse_rejected():
    t = Tape()
    store = ParameterStore()
    x = t.leaf(store.add("x", np.array([2.0])))
    L = t.sum(t.mul(x, x))
    backward(t, L)
    with pytest.raises(TapeReusedError):
        backward(t, L)


def test_composite_ops_vs_finite_difference():
    rng = np.random.default_rng(7)
    W = rng.normal(size=(5, 8))
    x0 = rng.normal(size=8)

    def f(x):
        t = Tape()
        xn = t.constant(x)
        Wn = t.constant(W)
        h = t.silu(t.matvec(Wn, xn))
        p = t.softmax(h)
        return float(t.dot(p, h).value)

    def f_node(x):
        t = Tape()
        store = ParameterStore()
        xn = t.leaf(store.add("x", x))
        Wn = t.constant(W)
        h = t.silu(t.matvec(Wn, xn))
        p = t.softmax(h)
        L = t.dot(p, h)
        backward(t, L)
        return store["x"].grad

    assert np.allclose(f_node(x0), finite_diff(f, x0), atol=1e-7)


def test_log_magnitude_gradient():
    rng = np.random.default_rng(11)
    x0 = rng.normal(size=12)

    def val(x):
        t = Tape()
        y = t.log_magnitude(t.constant(x))
        return float(t.sum(t.mul(y, y)).value)

    t = Tape()
    store = ParameterStore()
    xn = t.leaf(store.add("x", x0))
    y = t.log_magnitude(xn)
    backward(t, t.sum(t.mul(y, y)))
    assert np.allclose(store["x"].grad, finite_diff(val, x0), atol=1e-6)


def test_matmul_narrow_concat_gradients():
    rng = np.random.default_rng(13)
    A0 = rng.normal(size=(4, 6))

    def val(A):
        t = Tape()
        An = t.constant(A)
        left = t.narrow(An, 1, 0, 3)
        right = t.narrow(An, 1, 3, 3)
        S = t.matmul(left, t.transpose(right))
        P = t.softmax_rows(S)
        out = t.concat([P, S], axis=1)
        return float(t.sum(t.mul(out, out)).value)

    t = Tape()
    store = ParameterStore()
    An = t.leaf(store.add("A", A0))
    left = t.narrow(An, 1, 0, 3)
    right = t.narrow(An, 1, 3, 3)
    S = t.matmul(left, t.transpose(right))
    P = t.softmax_rows(S)
    out = t.concat([P, S], axis=1)
    backward(t, t.sum(t.mul(out, out)))
    assert np.allclose(store["A"].grad, finite_diff(lambda A: val(A.reshape(4, 6)), A0.reshape(-1)).reshape(4, 6), atol=1e-6)


def test_layer_norm_matches_ops_and_grad():
    from spark import ops
    rng = np.random.default_rng(17)
    v0 = rng.normal(size=6)
    gain = rng.normal(size=6)
    bias = rng.normal(size=6)

    t = Tape()
    store = ParameterStore()
    vn = t.leaf(store.add("v", v0))
    out = t.layer_norm(vn, t.constant(gain), t.constant(bias), 1e-5)
    assert np.allclose(out.value, ops.layer_norm(v0, gain, bias, 1e-5), atol=1e-12)

    backward(t, t.sum(t.mul(out, out)))

    def val(v):
        return float(np.sum(ops.layer_norm(v, gain, bias, 1e-5) ** 2))

    assert np.allclose(store["v"].grad, finite_diff(val, v0), atol=1e-6)


class TestParameterStore:
    def test_snapshot_isolated(self):
        store = ParameterStore()
        store.add("w", np.array([1.0, 2.0]))
        snap = store.snapshot()
        before = snap["w"].value.copy()
        store["w"].value[...] = 99.0
        assert np.array_equal(snap["w"].value, before)

    def test_duplicate_name_rejected(self):
        store = ParameterStore()
        store.add("w", np.zeros(2))
        with pytest.raises(InvalidInputError):
            store.add("w", np.zeros(2))


class TestAdam:
    def test_zero_grad_no_change(self):
        store = ParameterStore()
        store.add("w", np.array([1.0, -2.0]))
        adam_step(store, t=1)
        assert np.array_equal(store["w"].value, [1.0, -2.0])

    def test_single_step_hand_value(self):
        store = ParameterStore()
        store.add("w", np.array([0.0]))
        store["w"].grad[...] = 1.0
        adam_step(store, lr=0.1, t=1)
        # m_hat = 1, v_hat = 1 -> step = -0.1 / (1 + 1e-8)
        assert abs(store["w"].value[0] + 0.1 / (1 + 1e-8)) < 1e-15

    def test_frozen_untouched(self):
        store = ParameterStore()
        store.add("w", np.array([5.0]), trainable=False)
        store["w"].grad[...] = 10.0
        adam_step(store, t=1)
        assert store["w"].value[0] == 5.0

    def test_bad_step_index(self):
        store = ParameterStore()
        store.add("w", np.zeros(1))
        with pytest.raises(InvalidInputError):
            adam_step(store, t=0)
