import numpy as np
import pytest

from fosnet.bspline import eval_matrix, make_basis
from fosnet.dataset import FunctionalDataset
from fosnet.errors import DataError
from fosnet.smoothing import fit_coefficients, smoothed_values

from oracles import gd_least_squares


def _ds(values, mask=None, grid=None):
    n, m = values.shape
    grid = np.linspace(0, 1, m) if grid is None else grid
    return FunctionalDataset(np.zeros((n, 1)), grid, values, np.ones((n, m)) if mask is None else mask)


def test_exact_representation():
    bs = make_basis((0, 1), 8, 4)
    C = np.random.default_rng(0).normal(size=(6, 8))
    grid = np.linspace(0, 1, 30)
    fit = fit_coefficients(_ds(C @ eval_matrix(bs, grid)), bs)
    np.testing.assert_allclose(fit.coeffs, C, atol=1e-8)
    assert fit.sse < 1e-12


def test_square_system_interpolates():
    bs = make_basis((0, 1), 7, 4)
    Z = np.random.default_rng(1).normal(size=(3, 7))
    assert fit_coefficients(_ds(Z), bs).sse < 1e-12


def test_matches_gradient_descent_oracle():
    rng = np.random.default_rng(4)
    bs = make_basis((0, 1), 10, 4)
    Z = rng.normal(size=(20, 40))
    theta = eval_matrix(bs, np.linspace(0, 1, 40))
    ref = gd_least_squares(theta.T, Z.T).T
    np.testing.assert_allclose(fit_coefficients(_ds(Z), bs).coeffs, ref, atol=1e-6)


def test_masked_matches_per_subject_oracle():
    rng = np.random.default_rng(5)
    bs = make_basis((0, 1), 8, 4)
    Z = rng.normal(size=(20, 40))
    mask = (rng.random((20, 40)) > 0.3).astype(float)
    mask[:, 0] = 1
    theta = eval_matrix(bs, np.linspace(0, 1, 40))
    fit = fit_coefficients(_ds(Z, mask), bs)
    for i in range(20):
        obs = mask[i] > 0
        ref = gd_least_squares(theta[:, obs].T, Z[i, obs])
        np.testing.assert_allclose(fit.coeffs[i], ref, atol=1e-6)


def test_residual_orthogonality():
    rng = np.random.default_rng(6)
    bs = make_basis((0, 1), 12, 4)
    Z = rng.normal(size=(15, 50))
    mask = (rng.random((15, 50)) > 0.2).astype(float)
    ds = _ds(Z, mask)
    fit = fit_coefficients(ds, bs)
    theta = eval_matrix(bs, ds.grid)
    R = mask * (ds.values - fit.coeffs @ theta)
    assert np.max(np.linalg.norm(R @ theta.T, axis=1)) < 1e-8 * np.linalg.norm(Z)


def test_noise_variance_recovered():
    rng = np.random.default_rng(7)
    bs = make_basis((0, 1), 10, 4)
    grid = np.linspace(0, 1, 200)
    C = rng.normal(size=(100, 10))
    sigma2 = 0.5
    Z = C @ eval_matrix(bs, grid) + np.sqrt(sigma2) * rng.normal(size=(100, 200))
    fit = fit_coefficients(_ds(Z), bs)
    assert abs(fit.sse / Z.size - sigma2) < 0.2 * sigma2


def test_too_few_observations_named():
    bs = make_basis((0, 1), 6, 4)
    mask = np.ones((2, 10))
    mask[1, :6] = 0
    ds = FunctionalDataset(np.zeros((2, 1)), np.linspace(0, 1, 10), np.ones((2, 10)), mask,
                           subject_ids=("a", "b"))
    with pytest.raises(DataError, match="'b'.*fewer basis functions"):
        fit_coefficients(ds, bs)


def test_smoothed_values_shape():
    bs = make_basis((0, 1), 6, 4)
    Z = np.random.default_rng(0).normal(size=(4, 20))
    assert smoothed_values(_ds(Z), bs, np.linspace(0, 1, 7)).shape == (4, 7)
