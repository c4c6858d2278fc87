"""Functional principal component analysis on a discrete grid.

Integrals are trapezoid sums with weights ``w``. The discretised covariance
operator is symmetrised as ``W^½ C W^½`` so that its eigenvectors, mapped back
through ``W^-½``, are exactly orthonormal under the same quadrature. On an
equally spaced grid this is the usual Δt scaling, with half weights at the
two endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .bspline import BasisSystem, make_basis
from .dataset import FunctionalDataset
from .errors import ConfigError, DataError, DomainError
from .smoothing import smoothed_values

__all__ = [
    "FpcaModel",
    "fit_fpca",
    "scores",
    "reconstruct",
    "trapezoid_weights",
    "dense_values",
]


def trapezoid_weights(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        return np.ones_like(grid)
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


@dataclass(frozen=True, eq=False)
class FpcaModel:
    mean: np.ndarray
    eigenfunctions: np.ndarray  # K_tau x m
    eigenvalues: np.ndarray
    tau: float
    grid: np.ndarray
    total_variance: float

    @property
    def n_components(self) -> int:
        return self.eigenvalues.shape[0]

    def at(self, times):
        """Mean and eigenfunctions at ``times`` (cubic interpolation off-grid)."""
        times = np.asarray(times, dtype=float)
        if times.shape == self.grid.shape and np.array_equal(times, self.grid):
            return self.mean, self.eigenfunctions
        lo, hi = self.grid[0], self.grid[-1]
        tol = 1e-12 * max(1.0, hi - lo)
        bad = (times < lo - tol) | (times > hi + tol)
        if np.any(bad):
            raise DomainError(f"time {float(times[bad][0])!r} outside model domain [{lo}, {hi}]")
        times = np.clip(times, lo, hi)
        k = min(3, self.grid.size - 1)
        mean = make_interp_spline(self.grid, self.mean, k=k)(times)
        phi = make_interp_spline(self.grid, self.eigenfunctions.T, k=k)(times).T
        return mean, phi

    def to_json(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "tau": self.tau,
            "grid": self.grid.tolist(),
            "total_variance": self.total_variance,
        }

    @classmethod
    def from_json(cls, obj) -> "FpcaModel":
        return cls(
            np.asarray(obj["mean"], dtype=float),
            np.atleast_2d(np.asarray(obj["eigenfunctions"], dtype=float)),
            np.asarray(obj["eigenvalues"], dtype=float),
            float(obj["tau"]),
            np.asarray(obj["grid"], dtype=float),
            float(obj["total_variance"]),
        )


def dense_values(ds: FunctionalDataset, smoothing_basis: BasisSystem | None = None) -> np.ndarray:
    """Values on the full grid; irregular subjects are smoothed first."""
    if ds.regular:
        return ds.values
    if smoothing_basis is None:
        n_min = int(ds.mask.sum(axis=1).min())
        n_basis = min(10, n_min)
        if n_basis < 4:
            raise DataError(
                f"a subject has only {n_min} observations; supply a smoothing basis for FPCA"
            )
        smoothing_basis = make_basis((ds.grid[0], ds.grid[-1]), n_basis, 4)
    return smoothed_values(ds, smoothing_basis)


def fit_fpca(ds: FunctionalDataset, tau: float = 0.99,
             smoothing_basis: BasisSystem | None = None) -> FpcaModel:
    """Mean, leading eigenfunctions and eigenvalues explaining at least ``tau`` of the variance."""
    if not 0.0 < tau <= 1.0:
        raise ConfigError(f"tau must lie in (0, 1], got {tau}")
    if ds.n_subjects < 2:
        raise DataError("FPCA needs at least two subjects")
    Y = dense_values(ds, smoothing_basis)
    mean = Y.mean(axis=0)
    centered = Y - mean
    cov = centered.T @ centered / (Y.shape[0] - 1)
    w = trapezoid_weights(ds.grid)
    sw = np.sqrt(w)
    op = sw[:, None] * cov * sw[None, :]
    op = (op + op.T) / 2
    evals, evecs = np.linalg.eigh(op)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    total = float(np.trace(op))
    scale = float(np.sum(w * np.mean(Y * Y, axis=0))) + np.finfo(float).tiny
    tol = max(max(evals[0], 0.0) * 1e-12 * evals.size, 1e-13 * scale)
    positive = evals > tol
    if not np.any(positive) or total <= tol:
        raise DataError("degenerate covariance: no positive eigenvalue")
    evals, evecs = evals[positive], evecs[:, positive]
    ratio = np.cumsum(evals) / total
    k_tau = int(np.searchsorted(ratio, tau * (1 - 1e-12), side="left")) + 1
    k_tau = min(k_tau, evals.size)
    phi = (evecs[:, :k_tau] / sw[:, None]).T
    # sign: largest-magnitude entry positive
    peak = phi[np.arange(k_tau), np.argmax(np.abs(phi), axis=1)]
    phi = phi * np.where(peak < 0, -1.0, 1.0)[:, None]
    return FpcaModel(mean, np.ascontiguousarray(phi), evals[:k_tau].copy(), float(tau),
                     np.array(ds.grid), total)


def scores(model: FpcaModel, ds: FunctionalDataset, smoothing_basis=None) -> np.ndarray:
    """Trapezoid projections of the centred curves on each eigenfunction."""
    if ds.grid.shape != model.grid.shape or not np.allclose(ds.grid, model.grid, rtol=0, atol=1e-12):
        raise DataError("dataset grid does not match the FPCA model grid")
    Y = dense_values(ds, smoothing_basis)
    w = trapezoid_weights(model.grid)
    return ((Y - model.mean) * w) @ model.eigenfunctions.T


def reconstruct(model: FpcaModel, score_matrix) -> np.ndarray:
    xi = np.atleast_2d(np.asarray(score_matrix, dtype=float))
    if xi.shape[1] != model.n_components:
        raise DataError(f"score matrix has {xi.shape[1]} columns, model has {model.n_components} components")
    return model.mean + xi @ model.eigenfunctions
