"""Adam optimizer behavior against a plain-python reference update."""

import numpy as np
import pytest

from tcgpn import tensorcore as tc
from tcgpn.tensorcore import Adam, ParamStore, Tensor, forward_backward


def reference_adam(p, g_fn, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook update, written independently of the implementation."""
    m = 0.0
    v = 0.0
    for t in range(1, steps + 1):
        g = g_fn(p)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


def test_zero_gradient_leaves_params_unchanged():
    store = ParamStore(seed=1)
    p = store.add("w", (3, 3), "fan_in")
    before = p.data.copy()
    Adam(lr=0.1).step(store, {"w": np.zeros((3, 3))})
    assert np.array_equal(p.data, before)


def test_missing_gradient_leaves_param_untouched():
    store = ParamStore(seed=1)
    store.add("w", (2,), "fan_in")
    q = store.add("q", (2,), "fan_in")
    before = q.data.copy()
    Adam(lr=0.1).step(store, {"w": np.ones(2)})
    assert np.array_equal(q.data, before)


def test_first_step_moves_by_minus_lr_times_sign():
    store = ParamStore(seed=0)
    p = store.add("p", (1,), "zeros")
    Adam(lr=0.1).step(store, {"p": np.array([1.0])})
    assert p.data[0] == pytest.approx(-0.1, rel=1e-6)


def test_hundred_steps_reach_quadratic_minimum():
    store = ParamStore(seed=0, dtype=np.float64)
    p = store.add("p", (1,), "zeros")
    opt = Adam(lr=0.05)
    for _ in range(100):
        _, grads = forward_backward(
            lambda s: tc.sum((s["p"] - 3.0) * (s["p"] - 3.0)), store)
        opt.step(store, grads)
    assert abs(p.data[0] - 3.0) < 0.1
    # trajectory agrees with the reference rule run independently
    ref = reference_adam(0.0, lambda x: 2 * (x - 3.0), lr=0.05, steps=100)
    assert p.data[0] == pytest.approx(ref, abs=1e-9)


def test_non_finite_gradients_rejected_and_counted():
    store = ParamStore(seed=0)
    p = store.add("p", (2,), "zeros")
    q = store.add("q", (2,), "zeros")
    opt = Adam(lr=0.1)
    rejected = opt.step(store, {"p": np.array([np.nan, 1.0]), "q": np.ones(2)})
    assert rejected == 1
    assert opt.rejected_total == 1
    assert np.array_equal(p.data, np.zeros(2))  # rejected update
    assert not np.array_equal(q.data, np.zeros(2))


def test_unknown_path_rejected():
    store = ParamStore(seed=0)
    store.add("p", (1,), "zeros")
    with pytest.raises(KeyError):
        Adam().step(store, {"nope": np.ones(1)})


def test_step_count_increments_by_one():
    store = ParamStore(seed=0)
    store.add("p", (1,), "zeros")
    opt = Adam()
    for k in range(1, 4):
        opt.step(store, {"p": np.ones(1)})
        assert opt.step_count == k


def test_determinism_same_seed_bit_identical():
    def run():
        store = ParamStore(seed=42, dtype=np.float32)
        store.add("w", (4, 4), "fan_in")
        opt = Adam(lr=1e-3)
        for _ in range(5):
            _, grads = forward_backward(lambda s: tc.sum(s["w"] * s["w"] * s["w"]), store)
            opt.step(store, grads)
        return store["w"].data.copy()

    a, b = run(), run()
    assert np.array_equal(a, b)
