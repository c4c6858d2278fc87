import numpy as np
import pytest

from fosnet.bspline import BasisSystem, deriv_matrix, eval_matrix
from fosnet.dataset import FunctionalDataset, split
from fosnet.errors import ConfigError, DataError, DomainError
from fosnet.evaluate import msep
from fosnet.network import LossSpec, loss_and_grad
from fosnet.regressors import (
    FitConfig,
    TrainedRegressor,
    curves_from_outputs,
    fit,
    predict,
    response_loss,
)
from fosnet.simgen import SimConfig, generate
from fosnet.smoothing import fit_coefficients

from oracles import gd_least_squares

FAST = FitConfig(hidden=(16, 8), epochs=30, batch=32)


@pytest.fixture(scope="module")
def design2():
    ds, truth = generate(SimConfig(design=2, N=200, seed=3))
    return ds, truth


def test_fos_exact_on_noiseless_linear_design():
    ds, truth = generate(SimConfig(design=4, N=500, noise_var=0.0, seed=1))
    model = fit("fos", ds, FitConfig(kb=13))
    pred = predict(model, ds.predictors, ds.grid)
    assert msep(pred, ds.with_values(truth["noiseless"])) < 1e-6


def test_fos_matches_iterative_oracle():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(20, 3))
    t = np.linspace(0, 1, 25)
    ds = FunctionalDataset(X, t, rng.normal(size=(20, 25)), np.ones((20, 25)))
    model = fit("fos", ds, FitConfig(kb=7))
    C = fit_coefficients(ds, model.basis).coeffs
    D = np.column_stack([np.ones(20), X])
    np.testing.assert_allclose(model.fos_coeffs, gd_least_squares(D, C), atol=1e-6)
    # fitted values are reproduced by predict on the training predictors
    np.testing.assert_allclose(predict(model, X, t), D @ model.fos_coeffs @ eval_matrix(model.basis, t),
                               atol=1e-12)


def test_shared_architecture(design2):
    ds, _ = design2
    a = fit("nnbb", ds, FAST)
    b = fit("nnbr", ds, FAST)
    assert a.net.sizes == b.net.sizes and a.net.activations == b.net.activations
    assert a.n_params == b.n_params


@pytest.mark.parametrize("variant", ["fos", "nnbb", "nnss", "nnbr", "nnsr"])
def test_every_variant_fits_and_round_trips(design2, variant):
    ds, _ = design2
    model = fit(variant, ds, FAST)
    times = np.array([0.0, 0.012, 0.517, 1.0])
    pred = predict(model, ds.predictors[:5], times)
    assert pred.shape == (5, 4) and np.all(np.isfinite(pred))
    back = TrainedRegressor.from_json(model.to_json())
    np.testing.assert_array_equal(predict(back, ds.predictors[:5], times), pred)
    assert predict(model, ds.predictors, ds.grid).shape == ds.values.shape
    with pytest.raises(DomainError):
        predict(model, ds.predictors[:1], [1.01])
    with pytest.raises(DataError):
        predict(model, ds.predictors[:1, :3], [0.5])


@pytest.mark.parametrize("variant", ["nnbr", "nnsr"])
def test_prediction_continuity(design2, variant):
    ds, truth = design2
    model = fit(variant, ds, FAST)
    # steepest slope of the generating curves bounds how far a faithful fit moves per 1e-3
    basis = BasisSystem.from_json(truth["curve_basis"])
    fine = np.linspace(0, 1, 2001)
    slope = np.max(np.abs(np.asarray(truth["zeta"]) @ np.asarray(truth["beta"]) @ deriv_matrix(basis, fine, 1)))
    for t0 in (0.012, 0.517):
        t = t0 + 1e-3 * np.arange(-3, 4)
        y = predict(model, ds.predictors[:20], t)
        assert np.all(np.isfinite(y))
        assert np.max(np.abs(np.diff(y, axis=1))) < 1e-3 * slope + 0.1


@pytest.mark.parametrize("variant", ["nnbr", "nnsr", "fos"])
def test_predict_is_affine_in_outputs(design2, variant):
    ds, _ = design2
    model = fit(variant, ds, FAST)
    out = model.outputs(ds.predictors[:4])
    t = np.linspace(0, 1, 9)
    base, scaled = curves_from_outputs(model, out, t), curves_from_outputs(model, 2.5 * out, t)
    offset = curves_from_outputs(model, np.zeros_like(out), t)
    np.testing.assert_allclose(scaled, 2.5 * base - 1.5 * offset, atol=1e-9)


def test_penalty_rules():
    ds, _ = generate(SimConfig(design=4, N=30, seed=0))
    for v in ("nnbb", "nnss", "fos"):
        with pytest.raises(ConfigError, match="penalty"):
            fit(v, ds, FAST.replace(penalty="curvature", lam=0.1))
    with pytest.raises(ConfigError):
        fit("nnsr", ds, FAST.replace(penalty="coeffdiff", lam=0.1))
    with pytest.raises(ConfigError):
        fit("nnbr", ds, FAST.replace(lam=0.1))
    with pytest.raises(ConfigError):
        fit("lasso", ds, FAST)
    with pytest.raises(ConfigError):
        FitConfig(penalty="ridge")


def test_nnbr_masked_training_ignores_unobserved(design2):
    ds, _ = design2
    rng = np.random.default_rng(0)
    mask = (rng.random(ds.values.shape) > 0.3).astype(float)
    irr = ds.with_values(ds.values, mask)
    noisy = irr.with_values(np.where(mask > 0, ds.values, rng.normal(scale=1e3, size=mask.shape)), mask)
    a = fit("nnbr", irr, FAST)
    b = fit("nnbr", noisy, FAST)
    np.testing.assert_array_equal(a.net.params, b.net.params)


def test_insufficient_observations_propagate():
    ds, _ = generate(SimConfig(design=4, N=20, m=12, seed=0))
    with pytest.raises(DataError, match="fewer"):
        fit("nnbb", ds, FAST.replace(kb=13))


def test_nnbr_response_loss_not_worse_than_nnbb():
    # linear hidden layer: both variants fit the same model class; NNBR optimises
    # the response loss directly, NNBB only its coefficient surrogate
    ds, _ = generate(SimConfig(design=1, N=400, seed=5))
    cfg = FitConfig(kb=20, hidden=(20,), activation="identity", epochs=600, batch=400, lr=1e-2)
    bb = response_loss(fit("nnbb", ds, cfg), ds)
    br = response_loss(fit("nnbr", ds, cfg), ds)
    assert br <= bb + 1e-3


def test_penalised_loss_uses_same_objective(design2):
    ds, _ = design2
    cfg = FAST.replace(penalty="curvature", lam=0.0)
    model = fit("nnbr", ds, cfg)
    Xs = (ds.predictors - model.x_center) / model.x_scale
    spec = LossSpec("response", basis_matrix=eval_matrix(model.basis, ds.grid))
    loss, _ = loss_and_grad(model.net, Xs, ds.values / model.y_scale, spec)
    assert abs(loss * model.y_scale**2 - response_loss(model, ds)) < 1e-8 * response_loss(model, ds)


def test_seed_determinism(design2):
    ds, _ = design2
    a = fit("nnsr", ds, FAST.replace(seed=4))
    b = fit("nnsr", ds, FAST.replace(seed=4))
    np.testing.assert_array_equal(a.net.params, b.net.params)
    tr, te = split(ds, 0.8, 1)
    assert msep(predict(a, te.predictors, te.grid), te) > 0
