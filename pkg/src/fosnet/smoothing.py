"""Per-subject least-squares basis coefficients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .bspline import BasisSystem, eval_matrix
from .dataset import FunctionalDataset
from .errors import DataError

__all__ = ["CoefficientFit", "fit_coefficients", "smoothed_values"]

RIDGE_JITTER = 1e-10


@dataclass(frozen=True, eq=False)
class CoefficientFit:
    coeffs: np.ndarray  # N x K_b
    basis: BasisSystem
    sse: float


def fit_coefficients(ds: FunctionalDataset, bs: BasisSystem) -> CoefficientFit:
    """Least-squares coefficients of each subject's observed values.

    Solves the masked normal equations ``(Θ M_i Θᵀ + εI) c_i = Θ M_i z_i`` with
    ε = 1e-10, so regular and irregular subjects go through the same code.
    """
    theta = eval_matrix(bs, ds.grid)
    counts = ds.mask.sum(axis=1)
    short = np.flatnonzero(counts < bs.n_basis)
    if short.size:
        i = int(short[0])
        raise DataError(
            f"subject {ds.subject_ids[i]!r} has {int(counts[i])} observations, fewer than "
            f"{bs.n_basis} basis functions; use fewer basis functions or a penalized fit"
        )
    values = np.ascontiguousarray(ds.values)
    mask = np.ascontiguousarray(ds.mask)
    jitter = RIDGE_JITTER * np.eye(bs.n_basis)
    if ds.regular:
        gram = theta @ theta.T + jitter
        coeffs = np.linalg.solve(gram, theta @ values.T).T
    else:
        gram, rhs = _kernels.masked_normal_eq(theta, values, mask)
        coeffs = np.linalg.solve(gram + jitter, rhs[..., None])[..., 0]
    resid = mask * (values - coeffs @ theta)
    return CoefficientFit(coeffs, bs, float(np.sum(resid * resid)))


def smoothed_values(ds: FunctionalDataset, bs: BasisSystem, times=None) -> np.ndarray:
    """Fitted curves of every subject evaluated at ``times`` (default: the grid)."""
    fit = fit_coefficients(ds, bs)
    return fit.coeffs @ eval_matrix(bs, ds.grid if times is None else times)
