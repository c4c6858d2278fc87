"""B-spline bases on a closed interval, their derivatives and roughness penalties."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError

__all__ = [
    "BasisSystem",
    "make_basis",
    "eval_matrix",
    "deriv_matrix",
    "curvature_penalty",
    "curvature_penalty_matrix",
    "coeff_diff_penalty",
    "coeff_diff_penalty_matrix",
    "greville",
]

_DOMAIN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BasisSystem:
    order: int
    knots: np.ndarray
    domain: tuple

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.order

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[self.order:-self.order]

    @cached_property
    def _deriv_maps(self):
        # d-th derivative of every order-k basis function as a fixed linear
        # combination of order-(k-d) basis functions (de Boor's recurrence)
        k, t = self.order, self.knots
        nk = len(t)
        maps = {0: np.eye(self.n_basis, nk - 1)}
        A = maps[0]
        for d in range(1, k):
            o = k - d + 1  # order being differentiated at this step
            step = np.zeros((nk - 1, nk - 1))
            for j in range(nk - o):
                left = t[j + o - 1] - t[j]
                right = t[j + o] - t[j + 1]
                if left > 0:
                    step[j, j] += (o - 1) / left
                if right > 0:
                    step[j, j + 1] -= (o - 1) / right
            A = A @ step
            maps[d] = A
        return maps

    def to_json(self) -> dict:
        return {"order": self.order, "knots": self.knots.tolist(), "domain": list(self.domain),
                "n_basis": self.n_basis}

    @classmethod
    def from_json(cls, obj) -> "BasisSystem":
        knots = np.asarray(obj["knots"], dtype=float)
        knots.setflags(write=False)
        return cls(int(obj["order"]), knots, tuple(obj["domain"]))


def make_basis(domain=(0.0, 1.0), n_basis: int = 13, order: int = 4) -> BasisSystem:
    """Basis of ``n_basis`` order-``order`` B-splines with equally spaced interior knots."""
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise ConfigError(f"degenerate domain [{lo}, {hi}]")
    if order < 1:
        raise ConfigError(f"order must be positive, got {order}")
    if n_basis < order:
        raise ConfigError(f"number of basis functions ({n_basis}) must be at least the order ({order})")
    n_interior = n_basis - order
    interior = np.linspace(lo, hi, n_interior + 2)[1:-1]
    knots = np.concatenate([np.full(order, lo), interior, np.full(order, hi)])
    knots.setflags(write=False)
    return BasisSystem(order, knots, (lo, hi))


def _check_times(bs: BasisSystem, times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lo, hi = bs.domain
    tol = _DOMAIN_TOL * max(1.0, hi - lo)
    bad = (times < lo - tol) | (times > hi + tol) | ~np.isfinite(times)
    if np.any(bad):
        raise DomainError(f"time {float(times[bad][0])!r} outside basis domain [{lo}, {hi}]")
    return np.clip(times, lo, hi)


def _table(bs: BasisSystem, times, order):
    return _kernels.spline_table(np.ascontiguousarray(bs.knots), bs.order, times)[order - 1]


def eval_matrix(bs: BasisSystem, times) -> np.ndarray:
    """``K_b × m`` matrix of basis values θ_k(t_j)."""
    times = _check_times(bs, times)
    return np.ascontiguousarray(_table(bs, times, bs.order)[: bs.n_basis])


def deriv_matrix(bs: BasisSystem, times, d: int = 2) -> np.ndarray:
    """``K_b × m`` matrix of d-th derivatives of the basis functions."""
    if d < 0:
        raise ConfigError("derivative order must be nonnegative")
    if d == 0:
        return eval_matrix(bs, times)
    if bs.order <= d:
        raise ConfigError(f"order {bs.order} basis has no usable derivative of order {d}")
    times = _check_times(bs, times)
    lower = _table(bs, times, bs.order - d)
    return np.ascontiguousarray(bs._deriv_maps[d] @ lower)


def greville(bs: BasisSystem) -> np.ndarray:
    """Greville abscissae; coefficients equal to an affine function of these give that line."""
    k, t = bs.order, bs.knots
    return np.array([t[i + 1: i + k].mean() for i in range(bs.n_basis)])


def quadrature_points(bs: BasisSystem, Q: int) -> np.ndarray:
    if Q < 2:
        raise ConfigError(f"quadrature needs at least 2 points, got {Q}")
    return np.linspace(bs.domain[0], bs.domain[1], Q)


def curvature_penalty(bs: BasisSystem, coeffs, Q: int = 101) -> float:
    """Σ_{q=2..Q} (Y''(t_q))² for Y = Σ c_k θ_k at Q equally spaced points.

    The λ·T/(Q−1) weight is left to the caller.
    """
    D2 = deriv_matrix(bs, quadrature_points(bs, Q), 2)
    y2 = np.asarray(coeffs, dtype=float) @ D2[:, 1:]
    return float(np.sum(y2 * y2))


def curvature_penalty_matrix(bs: BasisSystem, Q: int = 101) -> np.ndarray:
    """Matrix ``R`` with ``cᵀ R c == curvature_penalty(bs, c, Q)``."""
    D2 = deriv_matrix(bs, quadrature_points(bs, Q), 2)[:, 1:]
    return D2 @ D2.T


def coeff_diff_penalty(coeffs) -> float:
    """Σ_{k≥3} (c_k − 2c_{k−1} + c_{k−2})²."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1] < 3:
        raise ConfigError("second differences need at least 3 coefficients")
    d2 = np.diff(c, n=2, axis=-1)
    return float(np.sum(d2 * d2))


def coeff_diff_penalty_matrix(n_basis: int) -> np.ndarray:
    if n_basis < 3:
        raise ConfigError("second differences need at least 3 coefficients")
    D = np.diff(np.eye(n_basis), n=2, axis=0)
    return D.T @ D
