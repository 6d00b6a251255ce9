import numpy as np

from layoutcap import autodiff as ad
from layoutcap.autodiff import Tensor, finite_difference_check
from layoutcap.lstm import init_lstm, lstm_step, zero_state
from layoutcap.rng import Rng


def test_zero_weights_zero_state_stays_zero():
    params = init_lstm(4, Rng(0), "t")
    params.w.value[...] = 0.0
    params.b.value[...] = 0.0
    state = lstm_step(params, Tensor(np.ones((1, 4))), zero_state(4))
    # gates i=f=o=0.5, g=tanh(0)=0 -> c=0, h=0
    np.testing.assert_array_equal(state.h.value, 0.0)
    np.testing.assert_array_equal(state.c.value, 0.0)


def test_saturated_forget_gate_carries_cell_state():
    k = 3
    params = init_lstm(k, Rng(0), "t")
    params.w.value[...] = 0.0
    params.b.value[...] = 0.0
    params.b.value[0, k:2 * k] = 20.0  # forget block
    prev = zero_state(k)
    prev.c.value[...] = 0.7
    state = lstm_step(params, Tensor(np.zeros((1, k))), prev)
    # c' = f*c with f = sigmoid(20); |f - 1| < 1e-8
    np.testing.assert_allclose(state.c.value / 0.7, 1.0, atol=1e-8)


def test_forget_bias_initialized_to_one():
    k = 5
    params = init_lstm(k, Rng(1), "t")
    np.testing.assert_array_equal(params.b.value[0, k:2 * k], 1.0)
    np.testing.assert_array_equal(params.b.value[0, :k], 0.0)
    np.testing.assert_array_equal(params.b.value[0, 2 * k:], 0.0)


def test_three_step_gradients_pass_fd_check():
    rng = Rng(2)
    params = init_lstm(4, rng, "t", init_scale=0.4)
    xs = [Tensor(rng.uniform_array((1, 4), -1, 1)) for _ in range(3)]

    def f():
        state = zero_state(4)
        for x in xs:
            state = lstm_step(params, x, state)
        return ad.sum_all(ad.mul(state.h, state.h))

    assert finite_difference_check(f, params.w, eps=1e-5) < 1e-4
    assert finite_difference_check(f, params.b, eps=1e-5) < 1e-4


def test_batched_rows_independent():
    rng = Rng(3)
    params = init_lstm(4, rng, "t")
    x2 = Tensor(rng.uniform_array((2, 4), -1, 1))
    both = lstm_step(params, x2, zero_state(4, batch=2))
    one = lstm_step(params, Tensor(x2.value[1:2]), zero_state(4))
    # matmul kernels may round differently per operand shape
    np.testing.assert_allclose(both.h.value[1:2], one.h.value, atol=1e-14, rtol=0)
