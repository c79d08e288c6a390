import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fbparse.nn import (
    NonFiniteGradient, ParamStore, ShapeError, Tape, clip_and_step, clip_gradients, dumps_params,
    global_norm, grad_check, load_params, loads_params, save_params,
)
from fbparse.nn import tensor as T

finite = st.floats(-30, 30, allow_nan=False, allow_infinity=False)


def test_softmax_uniform():
    np.testing.assert_allclose(T.softmax(np.zeros(3)), [1 / 3] * 3, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=finite))
def test_softmax_normalized_and_positive(x):
    p = T.softmax(x)
    assert abs(p.sum() - 1) < 1e-6 and np.all(p > 0)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=finite), st.floats(-500, 500))
def test_logsumexp_shift_invariant(x, c):
    assert abs((T.logsumexp(x + c) - c) - T.logsumexp(x)) < 1e-9


def test_logsumexp_no_overflow():
    assert np.isfinite(T.logsumexp(np.array([1000.0, 1000.0])))
    assert abs(T.logsumexp(np.array([1000.0, 1000.0])) - (1000 + math.log(2))) < 1e-9


def test_bilinear_identity_is_dot():
    rng = np.random.default_rng(0)
    s, h = rng.normal(size=4), rng.normal(size=4)
    assert abs(T.bilinear(s, np.eye(4), h) - s @ h) < 1e-12
    H = rng.normal(size=(3, 4))
    np.testing.assert_allclose(T.bilinear(s, np.eye(4), H), H @ s, atol=1e-12)


def test_lstm_zero_weights_hand_computed():
    H = 2
    b = np.array([0.5, 0.5, -1.0, -1.0, 2.0, 2.0, 1.0, 1.0])  # input, forget, candidate, output gates
    out = T.lstm_step(np.zeros(3), np.zeros(2 * H), np.zeros((3, 4 * H)), np.zeros((H, 4 * H)), b)
    sig = lambda z: 1 / (1 + math.exp(-z))
    c = sig(0.5) * math.tanh(2.0)  # forget gate multiplies a zero cell
    h = sig(1.0) * math.tanh(c)
    np.testing.assert_allclose(out, [h, h, c, c], atol=1e-15)


def test_shape_errors_name_the_op():
    with pytest.raises(ShapeError, match="matmul"):
        T.matmul(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ShapeError, match="lstm_step"):
        T.lstm_step(np.zeros(3), np.zeros(4), np.zeros((3, 7)), np.zeros((2, 8)), np.zeros(8))


def test_backward_of_sum_is_ones():
    tape = Tape()
    P = tape.bind({"w": np.arange(6.0).reshape(2, 3)})
    g = tape.backward(T.total(P["w"]))
    np.testing.assert_array_equal(g["w"], np.ones((2, 3)))


def test_backward_rejects_foreign_loss():
    a, b = Tape(), Tape()
    loss = T.total(a.bind({"w": np.ones(2)})["w"])
    with pytest.raises(ValueError):
        b.backward(loss)


def test_cross_entropy_gradient_zero_at_certainty():
    tape = Tape()
    P = tape.bind({"z": np.array([0.0, 800.0, 0.0])})
    g = tape.backward(T.scale(T.log_marginal(P["z"], [1]), -1.0))
    assert np.all(np.abs(g["z"]) < 1e-12)


def test_each_leaf_visited_once():
    tape = Tape()
    P = tape.bind({"w": np.array([1.0, 2.0])})
    x = P["w"]
    y = T.add(T.mul(x, x), x)  # w reused: grad 2w + 1
    g = tape.backward(T.total(y))
    np.testing.assert_allclose(g["w"], [3.0, 5.0])


def test_grad_check_linear_exact():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5)
    err = grad_check(lambda P: T.total(T.affine(x, P["W"], P["b"])),
                     {"W": rng.normal(size=(5, 3)), "b": rng.normal(size=3)})
    assert err < 1e-9


def test_grad_check_lstm_step():
    rng = np.random.default_rng(1)
    x = rng.normal(size=3)
    params = {"Wx": rng.normal(size=(3, 8)) * 0.5, "Wh": rng.normal(size=(2, 8)) * 0.5, "b": rng.normal(size=8),
              "hc": rng.normal(size=4)}
    w = rng.normal(size=4)
    err = grad_check(lambda P: T.total(T.mul(T.lstm_step(x, P["hc"], P["Wx"], P["Wh"], P["b"]), w)), params)
    assert err < 1e-6


def test_grad_check_composite_layers():
    rng = np.random.default_rng(2)
    ids = np.array([0, 2, 1, 2])
    params = {"E": rng.normal(size=(3, 4)), "Wx": rng.normal(size=(4, 12)) * 0.4,
              "Wh": rng.normal(size=(3, 12)) * 0.4, "b": rng.normal(size=12) * 0.1,
              "Wa": rng.normal(size=(3, 3)), "s": rng.normal(size=3)}

    def loss(P):
        X = T.embed(P["E"], ids)
        H = T.lstm_sequence(X, P["Wx"], P["Wh"], P["b"], reverse=True)
        a = T.bilinear(P["s"], P["Wa"], H)
        logits = T.concat([a, T.tanh(P["s"])])
        return T.scale(T.log_marginal(logits, [1, 4]), -1.0)

    assert grad_check(loss, params) < 1e-6


def test_clip_below_threshold_untouched():
    g = {"a": np.array([3.0, 4.0])}
    clipped, norm = clip_gradients(g, 10.0)
    assert norm == 5.0
    np.testing.assert_array_equal(clipped["a"], g["a"])


def test_clip_above_threshold_rescaled():
    g = {"a": np.array([12.0, 16.0])}
    clipped, norm = clip_gradients(g, 10.0)
    assert norm == 20.0
    assert abs(global_norm(clipped) - 10.0) < 1e-9


def test_non_finite_gradient_names_parameter():
    ps = ParamStore({"w": np.zeros(2), "v": np.zeros(1)})
    with pytest.raises(NonFiniteGradient, match="v"):
        clip_and_step(ps, {"w": np.zeros(2), "v": np.array([np.nan])})


def test_zero_gradient_step_leaves_parameters():
    ps = ParamStore({"w": np.array([1.0, -2.0])})
    clip_and_step(ps, {"w": np.zeros(2)})
    np.testing.assert_array_equal(ps["w"], [1.0, -2.0])


def test_adam_matches_hand_rolled_reference():
    rng = np.random.default_rng(3)
    w0 = rng.normal(size=4)
    grads = [rng.normal(size=4) * 7 for _ in range(5)]
    ps = ParamStore({"w": w0})
    for g in grads:
        clip_and_step(ps, {"w": g}, lr=0.01, clip_threshold=10.0)
    # reference: clip, then bias-corrected Adam with beta1=.9, beta2=.999, eps=1e-8
    w, m, v = w0.copy(), np.zeros(4), np.zeros(4)
    for t, g in enumerate(grads, start=1):
        n = np.linalg.norm(g)
        g = g * (10.0 / n) if n > 10.0 else g
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(ps["w"], w, rtol=1e-13, atol=1e-15)


def test_unknown_gradient_name_rejected():
    with pytest.raises(KeyError):
        clip_and_step(ParamStore({"w": np.zeros(1)}), {"x": np.zeros(1)})


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 3)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_checkpoint_round_trip_bit_exact(a):
    back, meta = loads_params(dumps_params({"p": a, "q": a.T}, {"k": 1}))
    assert meta == {"k": 1}
    assert back["p"].tobytes() == a.tobytes() and back["q"].shape == a.T.shape


def test_checkpoint_file(tmp_path):
    a = np.random.default_rng(0).normal(size=(3, 2))
    save_params(tmp_path / "c.json", {"w": a})
    back, _ = load_params(tmp_path / "c.json")
    assert back["w"].tobytes() == a.tobytes()


def test_param_store_rejects_shape_change_and_copies_state():
    ps = ParamStore({"w": np.zeros(2)})
    with pytest.raises(ValueError):
        ps["w"] = np.zeros(3)
    clip_and_step(ps, {"w": np.ones(2)})
    cp = ps.copy()
    clip_and_step(ps, {"w": np.ones(2)})
    assert cp.step_count == 1 and ps.step_count == 2
    assert not np.array_equal(cp["w"], ps["w"])
