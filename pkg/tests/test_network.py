import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fosnet.bspline import (
    coeff_diff_penalty,
    curvature_penalty,
    deriv_matrix,
    eval_matrix,
    make_basis,
    quadrature_points,
)
from fosnet.errors import ConfigError, DataError, TrainingError
from fosnet.network import LOSS_KINDS, LossSpec, Network, forward, init_network, loss_and_grad, train

from oracles import central_difference, naive_forward

N, P, K, M = 8, 5, 6, 15


def problem(kind, masked, lam=0.1, seed=0, acts=("tanh", "sigmoid", "identity")):
    rng = np.random.default_rng(seed)
    bs = make_basis((0, 1), K, 4)
    net = init_network((P, 7, 9, K), acts, seed=seed)
    net.params[:] += 0.1 * rng.standard_normal(net.n_params)  # nonzero biases too
    X = rng.normal(size=(N, P))
    mask = (rng.random((N, M)) > 0.3).astype(float) if masked else None
    if kind == "coef":
        targets = rng.normal(size=(N, K))
        spec = LossSpec("coef", mask=None if mask is None else mask[:, :K])
    else:
        targets = rng.normal(size=(N, M))
        spec = LossSpec(kind, basis_matrix=eval_matrix(bs, np.linspace(0, 1, M)), mask=mask,
                        mean_curve=rng.normal(size=M), lam=lam if "+" in kind else 0.0,
                        Q=51, deriv_matrix=deriv_matrix(bs, quadrature_points(bs, 51), 2))
    return net, X, targets, spec, bs


def max_rel_error(net, X, targets, spec):
    _, grad = loss_and_grad(net, X, targets, spec)

    def f(p):
        return loss_and_grad(Network(net.sizes, net.activations, p), X, targets, spec)[0]

    fd = central_difference(f, net.params.copy(), 1e-6)
    g = grad.params
    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-7)
    return float(np.max(np.abs(g - fd) / denom))


@pytest.mark.parametrize("kind", LOSS_KINDS)
@pytest.mark.parametrize("masked", [False, True])
def test_gradient_matches_finite_differences(kind, masked):
    net, X, T, spec, _ = problem(kind, masked)
    assert max_rel_error(net, X, T, spec) < 1e-4


def test_gradient_relu_away_from_kinks():
    net, X, T, spec, _ = problem("response+curvature", True, acts=("relu", "relu", "identity"), seed=3)
    assert max_rel_error(net, X, T, spec) < 1e-4


def test_ones_mask_equals_no_mask_exactly():
    net, X, T, spec, bs = problem("response", False)
    loss_a, g_a = loss_and_grad(net, X, T, spec)
    spec.mask = np.ones_like(T)
    loss_b, g_b = loss_and_grad(net, X, T, spec)
    assert loss_a == loss_b
    np.testing.assert_array_equal(g_a.params, g_b.params)


@pytest.mark.parametrize("kind", ["response+curvature", "response+coeffdiff"])
def test_lambda_zero_is_plain_response(kind):
    net, X, T, spec, _ = problem(kind, True, lam=0.0)
    plain = LossSpec("response", basis_matrix=spec.basis_matrix, mask=spec.mask, mean_curve=spec.mean_curve)
    assert abs(loss_and_grad(net, X, T, spec)[0] - loss_and_grad(net, X, T, plain)[0]) < 1e-12


def test_loss_decomposition_matches_bspline_penalties():
    for kind in ("response+curvature", "response+coeffdiff"):
        net, X, T, spec, bs = problem(kind, True, lam=0.3)
        fit, pen = spec.terms(net, X, T)
        loss, _ = loss_and_grad(net, X, T, spec)
        assert abs(loss - (fit + pen)) < 1e-10
        C = forward(net, X)
        if kind == "response+curvature":
            ref = 0.3 * 1.0 / (spec.Q - 1) * np.mean([curvature_penalty(bs, c, spec.Q) for c in C])
        else:
            ref = 0.3 * np.mean([coeff_diff_penalty(c) for c in C])
        assert abs(pen - ref) < 1e-10


def test_coef_loss_scales_quadratically():
    net, X, T, spec, _ = problem("coef", False)
    net.params[:] = 0.0
    a = loss_and_grad(net, X, T, spec)[0]
    b = loss_and_grad(net, X, 2 * T, spec)[0]
    np.testing.assert_allclose(b, 4 * a, rtol=1e-12)


def test_init_shapes_and_determinism():
    a = init_network((20, 50, 30, 6), ("relu", "relu", "identity"), seed=4)
    b = init_network((20, 50, 30, 6), ("relu", "relu", "identity"), seed=4)
    np.testing.assert_array_equal(a.params, b.params)
    assert [W.shape for W, _, _ in a.layers] == [(50, 20), (30, 50), (6, 30)]
    assert all(np.all(bias == 0) for _, bias, _ in a.layers)
    for W, _, _ in a.layers:
        limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        assert np.max(np.abs(W)) <= limit
    with pytest.raises(ConfigError):
        init_network((3, 4), ("relu",))
    with pytest.raises(ConfigError):
        init_network((3, 4, 2), ("relu",))


def test_forward_oracles():
    net = init_network((4, 6, 5, 3), ("sigmoid", "tanh", "identity"), seed=2)
    net.params[:] += 0.05
    X = np.random.default_rng(0).normal(size=(7, 4))
    out = forward(net, X)
    for i in range(7):
        np.testing.assert_allclose(out[i], naive_forward(net.layers, X[i]), atol=1e-12, rtol=0)
    net.params[:] = 0.0
    assert np.all(forward(net, X) == 0)
    ident = Network((3, 3), ("identity",), np.concatenate([np.eye(3).ravel(), np.zeros(3)]))
    np.testing.assert_array_equal(forward(ident, X[:, :3]), X[:, :3])
    with pytest.raises(DataError):
        forward(net, np.zeros((2, 5)))


def test_single_sgd_step_exact():
    net, X, T, spec, _ = problem("response+curvature", True)
    _, g = loss_and_grad(net, X, T, spec)
    trained, trace = train(net, X, T, spec, opt="sgd", lr=0.05, epochs=1, batch=N, seed=1)
    np.testing.assert_array_equal(trained.params, net.params - 0.05 * g.params)
    assert trace.shape == (1,)


def test_quadratic_toy_monotone():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 3))
    A = rng.normal(size=(3, 3))
    net = init_network((3, 3, 3), ("identity", "identity"), seed=0)
    _, trace = train(net, X, X @ A.T, LossSpec("coef"), opt="sgd", lr=0.01, epochs=200, batch=50)
    assert np.all(np.diff(trace) <= 1e-12)
    assert trace[-1] < 0.1 * trace[0]


def test_training_deterministic_and_input_untouched():
    net, X, T, spec, _ = problem("response", True)
    before = net.params.copy()
    a, ta = train(net, X, T, spec, epochs=5, batch=3, seed=9)
    b, tb = train(net, X, T, spec, epochs=5, batch=3, seed=9)
    np.testing.assert_array_equal(a.params, b.params)
    np.testing.assert_array_equal(ta, tb)
    np.testing.assert_array_equal(net.params, before)


def test_non_finite_loss_aborts():
    net, X, T, spec, _ = problem("coef", False)
    with pytest.raises(TrainingError) as err:
        train(net, X, T * 1e200, spec, opt="sgd", lr=1e10, epochs=5, batch=N)
    assert err.value.epoch >= 1


def test_bad_train_args():
    net, X, T, spec, _ = problem("coef", False)
    for kw in ({"epochs": 0}, {"batch": 0}, {"lr": 0.0}, {"opt": "rmsprop"}):
        with pytest.raises(ConfigError):
            train(net, X, T, spec, **kw)


def test_json_round_trip():
    net = init_network((3, 4, 2), ("relu", "identity"), seed=1)
    back = Network.from_json(net.to_json())
    np.testing.assert_array_equal(back.params, net.params)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), frac=st.floats(0.1, 0.9))
def test_masked_values_ignored(seed, frac):
    rng = np.random.default_rng(seed)
    net, X, T, spec, _ = problem("response+coeffdiff", False, seed=seed % 100)
    spec.mask = (rng.random(T.shape) > frac).astype(float)
    base = loss_and_grad(net, X, T, spec)
    T2 = np.where(spec.mask > 0, T, rng.normal(scale=1e6, size=T.shape))
    pert = loss_and_grad(net, X, T2, spec)
    assert base[0] == pert[0]
    np.testing.assert_array_equal(base[1].params, pert[1].params)
