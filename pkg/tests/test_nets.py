import numpy as np
import pytest

from flowpinn.errors import ContractViolation
from flowpinn.nets import (
    SurrogateNet,
    eval_batch,
    eval_net,
    init_net,
    load_net,
    mlp_forward,
    save_net,
)

SIZES = [2] + [32] * 6 + [1]


def test_parameter_count_matches_independent_formula():
    net = init_net(SIZES, seed=0)
    expected = sum(SIZES[i] * SIZES[i + 1] + SIZES[i + 1] for i in range(len(SIZES) - 1))
    assert net.n_params == expected
    assert net.params.shape == (expected,)


def test_seeds_give_different_parameters():
    a = init_net(SIZES, seed=0)
    b = init_net(SIZES, seed=1)
    assert not np.array_equal(a.params, b.params)


def test_same_seed_is_deterministic():
    a = init_net(SIZES, seed=42)
    b = init_net(SIZES, seed=42)
    assert np.array_equal(a.params, b.params)


def test_init_scale_follows_fan_in():
    net = init_net([2, 256, 256, 1], seed=9)
    W1, b1 = net.layer_arrays()[1]
    assert np.all(b1 == 0.0)
    assert abs(W1.std() * np.sqrt(256) - 1.0) < 0.15


def test_zero_params_evaluate_to_zero(rng):
    net = init_net(SIZES, seed=0)
    net.params[:] = 0.0
    X = rng.uniform(-1, 1, (7, 2))
    assert np.all(eval_batch(net, X) == 0.0)


def test_zero_hidden_weights_output_bias():
    net = init_net([2, 8, 1], seed=0)
    net.params[:] = 0.0
    net.params[-1] = 3.25  # output bias is the last flat parameter
    assert eval_net(net, np.array([0.4, -0.9])) == pytest.approx(3.25, abs=0)


def test_forward_matches_straightline_reimplementation(rng):
    net = init_net([2, 16, 16, 1], seed=0)
    X = rng.uniform(-1, 1, (4, 2))
    # independent evaluation, written without the package's forward helper
    h = X
    layers = net.layer_arrays()
    for W, b in layers[:-1]:
        h = np.tanh(h @ W + b)
    W, b = layers[-1]
    want = (h @ W + b).ravel()
    assert np.allclose(eval_batch(net, X), want, rtol=0, atol=1e-14)
    assert np.allclose(mlp_forward(layers, X), want, rtol=0, atol=1e-14)


def test_layer_sizes_validation():
    from flowpinn.errors import ConfigError

    with pytest.raises(ConfigError):
        SurrogateNet([2, 8, 2], np.zeros(2 * 8 + 8 + 8 * 2 + 2))
    with pytest.raises(ConfigError):
        SurrogateNet([2, 8, 1], np.zeros(5))


def test_eval_dimension_mismatch():
    net = init_net([3, 8, 1], seed=0)
    with pytest.raises(ContractViolation):
        eval_batch(net, np.zeros((4, 2)))


def test_checkpoint_roundtrip(tmp_path, rng):
    net = init_net(SIZES, seed=17)
    path = tmp_path / "net.json"
    save_net(net, path)
    back = load_net(path)
    assert back.layer_sizes == net.layer_sizes
    assert np.array_equal(back.params, net.params)
    X = rng.uniform(-1, 1, (5, 2))
    assert np.array_equal(eval_batch(net, X), eval_batch(back, X))


def test_modest_lipschitz_on_unit_box(rng):
    """tanh nets at this init stay smooth; a crude slope bound guards
    against pathological initialization scales."""
    net = init_net(SIZES, seed=2)
    X = rng.uniform(-1, 1, (200, 2))
    Y = X + rng.normal(0, 1e-3, X.shape)
    du = np.abs(eval_batch(net, X) - eval_batch(net, Y))
    dx = np.linalg.norm(X - Y, axis=1)
    assert np.max(du / dx) < 100.0
