import itertools
import math

import numpy as np
import pytest

from model.network import (
    ModelConfig,
    dropout_mask,
    forward,
    frontend_embedding,
    hidden_states,
    init_bounds,
    init_params,
    loss_and_grad,
    param_shapes,
    zeros_like_params,
)


def _tiny(mode):
    return ModelConfig(n_dyn=2, n_static=3, frontend_mode=mode, frontend_width=3, hidden_size=4,
                       dropout=0.25, seq_length=5, batch_size=4, epochs=1)


def _inputs(config, batch, seed):
    rng = np.random.default_rng(seed)
    dyn = rng.normal(size=(batch, config.seq_length, config.n_dyn))
    static = rng.normal(size=(batch, config.n_static))
    target = rng.normal(size=batch)
    return dyn, static, target


def _random_config(draw, rng):
    return ModelConfig(n_dyn=2, n_static=(17, 64)[(draw // 2) % 2],
                       frontend_mode=("joint-mlp", "attr-fc")[draw % 2], frontend_width=4,
                       hidden_size=int(rng.integers(4, 9)), dropout=0.25,
                       seq_length=int(rng.integers(8, 13)), batch_size=4, epochs=1)


def _stencil(loss, value, idx, eps):
    saved = value[idx]
    out = 0.0
    for step, weight in ((2, -1.0), (1, 8.0), (-1, -8.0), (-2, 1.0)):
        value[idx] = saved + step * eps
        out += weight * loss()
    value[idx] = saved
    return out / (12 * eps)


@pytest.mark.parametrize("draw", range(5))
def test_gradient_matches_finite_differences(draw):
    rng = np.random.default_rng(100 + draw)
    config = _random_config(draw, rng)
    params = init_params(config, seed=draw)
    dyn, static, _ = _inputs(config, 3, seed=draw + 1)
    mask = dropout_mask(rng, 3, config.hidden_size, config.dropout)
    target = forward(params, config, dyn, static, dropout_mask=mask) + 0.01 * rng.normal(size=3)
    _, grads = loss_and_grad(params, config, dyn, static, target, dropout_mask=mask)

    def loss():
        return loss_and_grad(params, config, dyn, static, target, dropout_mask=mask)[0]

    for name, value in params.items():
        numeric = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            numeric[idx] = _stencil(loss, value, idx, 1e-5)
        scale = max(np.abs(grads[name]).max(), np.abs(numeric).max(), 1e-8)
        assert np.abs(grads[name] - numeric).max() / scale < 1e-4, (name, config)


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def _reference_forward(params, config, dyn, static):
    """Unvectorized single-window LSTM."""
    H = config.hidden_size
    h = [0.0] * H
    c = [0.0] * H
    W_fe, b_fe = params["W_fe"], params["b_fe"]
    if config.frontend_mode == "attr-fc":
        e = [math.tanh(sum(W_fe[r, j] * static[j] for j in range(len(static))) + b_fe[r]) for r in range(len(b_fe))]
    for t in range(dyn.shape[0]):
        if config.frontend_mode == "joint-mlp":
            z = list(dyn[t]) + list(static)
            x = [math.tanh(sum(W_fe[r, j] * z[j] for j in range(len(z))) + b_fe[r]) for r in range(len(b_fe))]
        else:
            x = list(dyn[t]) + e
        a = [sum(params["W"][r, j] * x[j] for j in range(len(x)))
             + sum(params["U"][r, j] * h[j] for j in range(H)) + params["b"][r] for r in range(4 * H)]
        i = [_sigmoid(v) for v in a[:H]]
        f = [_sigmoid(v) for v in a[H:2 * H]]
        g = [math.tanh(v) for v in a[2 * H:3 * H]]
        o = [_sigmoid(v) for v in a[3 * H:]]
        c = [f[k] * c[k] + i[k] * g[k] for k in range(H)]
        h = [o[k] * math.tanh(c[k]) for k in range(H)]
    return sum(params["w_head"][k] * h[k] for k in range(H)) + params["b_head"][0]


@pytest.mark.parametrize("mode", ["joint-mlp", "attr-fc"])
def test_forward_matches_reference(mode):
    config = _tiny(mode)
    params = init_params(config, seed=8)
    dyn, static, _ = _inputs(config, 4, seed=9)
    batch = forward(params, config, dyn, static)
    for b in range(4):
        expected = _reference_forward(params, config, dyn[b], static[b])
        assert batch[b] == pytest.approx(expected, abs=1e-12)
        assert forward(params, config, dyn[b], static[b]) == pytest.approx(expected, abs=1e-12)


def test_zero_parameters_predict_the_head_bias():
    config = _tiny("joint-mlp")
    params = zeros_like_params(init_params(config, seed=0))
    dyn, static, _ = _inputs(config, 3, seed=1)
    assert np.array_equal(forward(params, config, dyn, static), np.zeros(3))
    params["b_head"][0] = 0.7
    assert np.allclose(forward(params, config, dyn, static), 0.7)


def test_init_params():
    config = _tiny("attr-fc")
    params = init_params(config, seed=2)
    shapes = param_shapes(config)
    bounds = init_bounds(config)
    H = config.hidden_size
    assert {k: v.shape for k, v in params.items()} == shapes
    assert np.array_equal(params["b"][H:2 * H], np.ones(H))
    assert np.abs(params["W"]).max() <= bounds["W"]
    assert np.array_equal(params["U"], init_params(config, seed=2)["U"])
    assert shapes["W"] == (4 * H, config.n_dyn + config.frontend_width)


def test_dropout_mask():
    assert dropout_mask(np.random.default_rng(0), 4, 8, 0.0) is None
    mask = dropout_mask(np.random.default_rng(0), 200, 50, 0.4)
    assert set(np.unique(mask).tolist()) <= {0.0, 1.0 / 0.6}
    assert mask.mean() == pytest.approx(1.0, abs=0.05)


def test_hidden_states_shape():
    config = _tiny("joint-mlp")
    dyn, static, _ = _inputs(config, 2, seed=3)
    hs = hidden_states(init_params(config, 1), config, dyn, static)
    assert hs.shape == (config.seq_length, 2, config.hidden_size)
    assert np.allclose(hs[-1] @ init_params(config, 1)["w_head"] + init_params(config, 1)["b_head"][0],
                       forward(init_params(config, 1), config, dyn, static))


def test_missing_targets_are_skipped():
    config = _tiny("joint-mlp")
    params = init_params(config, seed=5)
    dyn, static, target = _inputs(config, 4, seed=6)
    target[1] = np.nan
    loss, grads = loss_and_grad(params, config, dyn, static, target)
    keep = [0, 2, 3]
    loss_ref, grads_ref = loss_and_grad(params, config, dyn[keep], static[keep], target[keep])
    assert loss == pytest.approx(loss_ref, abs=1e-12)
    assert np.allclose(grads["W"], grads_ref["W"], atol=1e-12)
    with pytest.raises(ValueError, match="empty effective batch"):
        loss_and_grad(params, config, dyn, static, np.full(4, np.nan))


def test_chunking_does_not_change_the_gradient():
    config = _tiny("attr-fc")
    params = init_params(config, seed=7)
    dyn, static, target = _inputs(config, 9, seed=8)
    loss_a, grads_a = loss_and_grad(params, config, dyn, static, target, chunk=2)
    loss_b, grads_b = loss_and_grad(params, config, dyn, static, target, chunk=64)
    assert loss_a == pytest.approx(loss_b, abs=1e-12)
    for name in grads_a:
        assert np.allclose(grads_a[name], grads_b[name], atol=1e-12)


def test_missing_forcing_is_rejected():
    config = _tiny("joint-mlp")
    dyn, static, _ = _inputs(config, 2, seed=0)
    dyn[1, 2, 0] = np.nan
    with pytest.raises(ValueError, match="missing forcing value inside window"):
        forward(init_params(config, 0), config, dyn, static)


def test_frontend_embedding_needs_attr_fc():
    config = _tiny("joint-mlp")
    with pytest.raises(ValueError):
        frontend_embedding(init_params(config, 0), config, np.zeros(3))
    config = _tiny("attr-fc")
    emb = frontend_embedding(init_params(config, 0), config, np.zeros((5, 3)))
    assert emb.shape == (5, config.frontend_width)
    assert (np.abs(emb) < 1).all()


def test_config_validation():
    with pytest.raises(ValueError, match="frontend mode"):
        ModelConfig(frontend_mode="conv")
    with pytest.raises(ValueError, match="dropout"):
        ModelConfig(dropout=1.0)
    assert ModelConfig().replace(hidden_size=8).hidden_size == 8


def test_duplicated_batch_leaves_loss_and_gradient_unchanged():
    config = _tiny("joint-mlp")
    params = init_params(config, seed=11)
    dyn, static, target = _inputs(config, 3, seed=12)
    loss, grads = loss_and_grad(params, config, dyn, static, target)
    loss2, grads2 = loss_and_grad(params, config, np.concatenate([dyn, dyn]), np.concatenate([static, static]),
                                  np.concatenate([target, target]))
    assert loss2 == pytest.approx(loss, abs=1e-12)
    for name in grads:
        assert np.allclose(grads2[name], grads[name], atol=1e-12), name


@pytest.mark.parametrize("mode", ["joint-mlp", "attr-fc"])
def test_init_stays_inside_bounds_for_many_seeds(mode):
    config = _tiny(mode)
    bounds = init_bounds(config)
    H = config.hidden_size
    for seed in range(1000):
        params = init_params(config, seed)
        for name, value in params.items():
            if name == "b":
                value = np.concatenate([value[:H], value[2 * H:]])
            assert np.abs(value).max() <= bounds[name], (seed, name)


def test_input_weights_use_the_input_fan_in():
    config = _tiny("joint-mlp")
    bounds = init_bounds(config)
    assert bounds["W"] == pytest.approx(1.0 / math.sqrt(config.lstm_input_width))
    assert bounds["U"] == pytest.approx(1.0 / math.sqrt(config.hidden_size))


@pytest.mark.parametrize("mode", ["joint-mlp", "attr-fc"])
def test_hidden_states_stay_bounded_on_large_inputs(mode):
    config = _tiny(mode)
    dyn, static, _ = _inputs(config, 4, seed=13)
    hs = hidden_states(init_params(config, 4), config, 50.0 * dyn, 50.0 * static)
    assert np.isfinite(hs).all()
    assert (np.abs(hs) <= 1.0).all()


def test_dropout_is_unbiased_over_all_masks():
    config = _tiny("attr-fc")
    params = init_params(config, seed=14)
    dyn, static, _ = _inputs(config, 3, seed=15)
    p = config.dropout
    H = config.hidden_size
    expected = np.zeros(3)
    for bits in itertools.product([0, 1], repeat=H):
        kept = np.array(bits, dtype=np.float64)
        weight = (1.0 - p) ** kept.sum() * p ** (H - kept.sum())
        mask = np.tile(kept / (1.0 - p), (3, 1))
        expected += weight * forward(params, config, dyn, static, dropout_mask=mask)
    assert np.allclose(expected, forward(params, config, dyn, static), atol=1e-12)
