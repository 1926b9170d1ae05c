import numpy as np
import pytest

from model.optim import BETA1, BETA2, EPS, AdamState, adam_step


def test_first_step_moves_by_learning_rate():
    state = AdamState.initial({"w": np.array([1.0, -2.0, 0.5])})
    nxt = adam_step(state, {"w": np.array([3.0, -0.1, 0.0])}, lr=0.01)
    # bias-corrected first step is lr * g / (|g| + eps)
    assert np.allclose(nxt.params["w"], [0.99, -1.99, 0.5], atol=1e-8)
    assert nxt.t == 1


def test_step_matches_closed_form():
    rng = np.random.default_rng(0)
    p = rng.normal(size=5)
    grads = [rng.normal(size=5) for _ in range(3)]
    state = AdamState.initial({"p": p})
    m = np.zeros(5)
    v = np.zeros(5)
    theta = p.copy()
    for t, g in enumerate(grads, start=1):
        state = adam_step(state, {"p": g}, lr=1e-3)
        m = BETA1 * m + (1 - BETA1) * g
        v = BETA2 * v + (1 - BETA2) * g * g
        theta = theta - 1e-3 * (m / (1 - BETA1 ** t)) / (np.sqrt(v / (1 - BETA2 ** t)) + EPS)
    assert np.allclose(state.params["p"], theta, atol=1e-15)


def test_step_is_pure():
    state = AdamState.initial({"w": np.ones(3)})
    adam_step(state, {"w": np.ones(3)}, lr=0.1)
    assert np.array_equal(state.params["w"], np.ones(3))
    assert state.t == 0


def test_minimises_a_quadratic():
    state = AdamState.initial({"x": np.array([5.0, -3.0])})
    for _ in range(2000):
        state = adam_step(state, {"x": 2.0 * state.params["x"]}, lr=0.05)
    assert np.abs(state.params["x"]).max() < 1e-2


def test_rejects_mismatched_gradients():
    state = AdamState.initial({"w": np.ones(3)})
    with pytest.raises(ValueError, match="do not match"):
        adam_step(state, {"u": np.ones(3)}, lr=0.1)
    with pytest.raises(ValueError, match="shape mismatch"):
        adam_step(state, {"w": np.ones(4)}, lr=0.1)


def test_constant_gradient_steps_by_learning_rate():
    state = AdamState.initial({"w": np.zeros(4)})
    g = {"w": np.array([0.3, -2.0, 1e-3, 50.0])}
    for _ in range(500):
        before = state.params["w"]
        state = adam_step(state, g, lr=0.01)
        step = np.abs(state.params["w"] - before)
        assert np.allclose(step, 0.01, rtol=0.1)
    assert np.allclose(state.params["w"], -np.sign(g["w"]) * 5.0, rtol=0.1)
