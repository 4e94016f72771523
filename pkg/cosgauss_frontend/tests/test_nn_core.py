import numpy as np
import pytest

from cosgauss_frontend.errors import EmptySequenceError, GradientCheckError, ShapeMismatchError
from cosgauss_frontend.nn_core import (
    AdamState,
    BiLstm,
    Dense,
    LstmCell,
    adam_update,
    bce_loss,
    bilstm_backward,
    bilstm_forward,
    dense_backward,
    dense_forward,
    grad_check,
    info_nce_loss,
    lstm_backward,
    lstm_forward,
    lstm_step,
)


# DENSE

def test_zero_layer_outputs_zero(rng):
    y, _ = dense_forward(rng.standard_normal((4, 3)), Dense.zeros(3, 2))
    np.testing.assert_array_equal(y, 0.0)


def test_identity_layer(rng):
    x = rng.standard_normal((5, 3))
    y, _ = dense_forward(x, Dense(W=np.eye(3), b=np.zeros(3)))
    np.testing.assert_array_equal(y, x)


def test_dense_gradients(rng):
    layer = Dense.init(4, 3, rng)
    x = rng.standard_normal((6, 4))
    weights = rng.standard_normal((6, 3))

    y, cache = dense_forward(x, layer)
    dx, grads = dense_backward(weights, cache, layer)
    error = grad_check(lambda: float(np.sum(weights * dense_forward(x, layer)[0])),
                       dict(layer.params(), x=x), dict(grads, x=dx), abs_floor=1e-6)

    assert error < 1e-6


def test_dense_input_mismatch():
    with pytest.raises(ShapeMismatchError):
        dense_forward(np.zeros((2, 5)), Dense.zeros(3, 1))


# LSTM

def test_zero_cell_step_algebra(rng):
    c_prev = rng.standard_normal(4)
    h, c = lstm_step(rng.standard_normal(3), rng.standard_normal(4), c_prev, LstmCell.zeros(3, 4))
    # all gates sit at 0.5 and the candidate at 0
    np.testing.assert_allclose(c, 0.5 * c_prev)
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * c_prev))


def test_forward_matches_repeated_steps(rng):
    cell = LstmCell.init(3, 4, rng)
    X = rng.standard_normal((6, 3))

    H, _ = lstm_forward(X, cell)

    h, c = np.zeros(4), np.zeros(4)
    for t in range(6):
        h, c = lstm_step(X[t], h, c, cell)
        np.testing.assert_allclose(H[t], h, rtol=1e-12, atol=1e-15)


def test_forget_gate_bias_starts_at_one(rng):
    cell = LstmCell.init(3, 4, rng)
    np.testing.assert_array_equal(cell.b[4:8], 1.0)
    np.testing.assert_array_equal(np.delete(cell.b, np.arange(4, 8)), 0.0)


@pytest.mark.parametrize("reverse", [False, True])
def test_bptt_matches_finite_differences(rng, reverse):
    cell = LstmCell.init(3, 4, rng)
    X = rng.standard_normal((5, 3))
    weights = rng.standard_normal((5, 4))

    _, cache = lstm_forward(X, cell, reverse=reverse)
    dX, grads = lstm_backward(weights, cache, cell)
    error = grad_check(lambda: float(np.sum(weights * lstm_forward(X, cell, reverse=reverse)[0])),
                       dict(cell.params(), X=X), dict(grads, X=dX), abs_floor=1e-6)

    assert error < 1e-5


def test_bilstm_single_step_concatenates(rng):
    net = BiLstm.init(3, 4, rng)
    x = rng.standard_normal((1, 3))

    out, _ = bilstm_forward(x, net.fwd, net.bwd)

    h_f, _ = lstm_step(x[0], np.zeros(4), np.zeros(4), net.fwd)
    h_b, _ = lstm_step(x[0], np.zeros(4), np.zeros(4), net.bwd)
    np.testing.assert_allclose(out[0], np.concatenate([h_f, h_b]), rtol=1e-12)


def test_bilstm_time_reversal(rng):
    net = BiLstm.init(3, 4, rng)
    X = rng.standard_normal((7, 3))

    out, _ = bilstm_forward(X, net.fwd, net.bwd)
    swapped, _ = bilstm_forward(X[::-1], net.bwd, net.fwd)

    expected = np.concatenate([out[::-1, 4:], out[::-1, :4]], axis=1)
    np.testing.assert_allclose(swapped, expected, rtol=1e-12, atol=1e-15)


def test_bilstm_zero_cells_output_zero(rng):
    net = BiLstm.zeros(3, 4)
    out, _ = bilstm_forward(rng.standard_normal((5, 3)), net.fwd, net.bwd)
    assert out.shape == (5, 8)
    np.testing.assert_array_equal(out, 0.0)


def test_bilstm_gradients(rng):
    net = BiLstm.init(3, 4, rng)
    X = rng.standard_normal((5, 3))
    weights = rng.standard_normal((5, 8))

    _, cache = bilstm_forward(X, net.fwd, net.bwd)
    dX, grads = bilstm_backward(weights, cache, net.fwd, net.bwd)
    error = grad_check(lambda: float(np.sum(weights * bilstm_forward(X, net.fwd, net.bwd)[0])),
                       dict(net.params(), X=X), dict(grads, X=dX), abs_floor=1e-6)

    assert error < 1e-5


def test_empty_sequence_is_rejected():
    net = BiLstm.zeros(3, 4)
    with pytest.raises(EmptySequenceError):
        bilstm_forward(np.zeros((0, 3)), net.fwd, net.bwd)


# LOSSES

def test_bce_values():
    loss, grad = bce_loss(0.0, 1)
    assert loss == pytest.approx(np.log(2))
    assert grad == pytest.approx(-0.5)

    loss, grad = bce_loss(2.0, 0)
    assert loss == pytest.approx(2.12693, abs=1e-5)
    assert grad == pytest.approx(0.88080, abs=1e-5)


def test_bce_is_finite_for_huge_logits():
    loss, grad = bce_loss(800.0, 0)
    assert loss == pytest.approx(800.0)
    assert grad == 1.0
    loss, _ = bce_loss(-800.0, 0)
    assert loss == 0.0


def test_info_nce_values():
    loss, d_pos, d_negs = info_nce_loss(0.0, np.zeros(10))
    assert loss == pytest.approx(np.log(11))
    assert d_pos == pytest.approx(1 / 11 - 1)
    np.testing.assert_allclose(d_negs, 1 / 11)

    loss, _, _ = info_nce_loss(5.0, np.zeros(10))
    assert loss == pytest.approx(0.0652, abs=1e-4)


def test_info_nce_gradients(rng):
    scores = rng.standard_normal(6)
    _, d_pos, d_negs = info_nce_loss(scores[0], scores[1:])
    error = grad_check(lambda: info_nce_loss(scores[0], scores[1:])[0], {"s": scores},
                       {"s": np.concatenate([[d_pos], d_negs])})
    assert error < 1e-7


def test_info_nce_needs_a_negative():
    with pytest.raises(ShapeMismatchError):
        info_nce_loss(1.0, np.array([]))


# ADAM

def test_zero_gradients_leave_parameters_alone(rng):
    p = rng.standard_normal(5)
    before = p.copy()
    adam_update({"p": p}, {"p": np.zeros(5)}, AdamState(lr=0.1))
    np.testing.assert_array_equal(p, before)


def test_first_step_moves_by_learning_rate(rng):
    p = rng.standard_normal(5)
    g = rng.standard_normal(5)
    before = p.copy()

    state = adam_update({"p": p}, {"p": g}, AdamState(lr=0.01))

    assert state.step == 1
    np.testing.assert_allclose(before - p, 0.01 * np.sign(g), rtol=1e-3)


def test_missing_gradient_is_frozen(rng):
    params = {"a": rng.standard_normal(3), "b": rng.standard_normal(3)}
    frozen = params["b"].copy()
    adam_update(params, {"a": np.ones(3)}, AdamState())
    np.testing.assert_array_equal(params["b"], frozen)


def test_adam_is_deterministic(rng):
    grads = [rng.standard_normal(4) for _ in range(5)]
    results = []
    for _ in range(2):
        p = np.ones(4)
        state = AdamState(lr=0.05)
        for g in grads:
            adam_update({"p": p}, {"p": g}, state)
        results.append(p)
    np.testing.assert_array_equal(results[0], results[1])


# GRADIENT CHECKER

def test_exact_quadratic_gradient(rng):
    x = rng.standard_normal(6)
    error = grad_check(lambda: float(np.sum(x ** 2)), {"x": x}, {"x": 2 * x}, h=1e-4)
    assert error < 1e-7


def test_linear_gradient(rng):
    x = rng.standard_normal(4)
    a = rng.standard_normal(4)
    assert grad_check(lambda: float(a @ x), {"x": x}, {"x": a.copy()}) < 1e-7


def test_corrupted_gradient_is_detected(rng):
    x = rng.uniform(0.5, 2.0, 6)
    error = grad_check(lambda: float(np.sum(x ** 2)), {"x": x}, {"x": 2 * x * 1.01}, h=1e-4)
    assert error >= 0.009


def test_perturbed_entries_are_restored(rng):
    x = rng.standard_normal(5)
    before = x.copy()
    grad_check(lambda: float(np.sum(np.sin(x))), {"x": x}, {"x": np.cos(x)})
    np.testing.assert_array_equal(x, before)


def test_non_finite_objective():
    x = np.array([1.0, 2.0])
    with pytest.raises(GradientCheckError):
        grad_check(lambda: float("nan"), {"x": x}, {"x": np.zeros(2)})
