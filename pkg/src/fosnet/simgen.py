"""Simulated function-on-scalar data, Designs 1 to 4.

Each response is ``Y(t) = Σ_k ζ_k(X) ψ_k(t)`` observed at ``m`` equally spaced
points on [0, 1] with iid Gaussian noise.

* Design 1: uniform predictors, polynomial ζ on selected coordinates,
  ψ_k = B_k from a K-function cubic B-spline basis.
* Design 2: mixed binary / eight-level / uniform predictors, polynomial ζ,
  ψ_k = Σ_l β_kl B_l over a 13-function cubic basis with β ~ N(0, 4).
* Design 3: as Design 2 but ζ is a fixed random sigmoid network.
* Design 4: as Design 2 but ζ_k(X) = X_k.

Randomness is split into independent substreams (structure, generator
network, predictors, noise). Predictors and noise are drawn row by row, so a
smaller N with the same seed reproduces a prefix of the subjects.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .bspline import eval_matrix, make_basis
from .dataset import FunctionalDataset
from .errors import ConfigError

__all__ = ["SimConfig", "generate", "DESIGN_POLY", "GENERATOR_HIDDEN"]

# 1-based predictor indices receiving (quadratic, cubic) transforms
DESIGN_POLY = {
    1: ((8, 10, 12, 13, 14), (1, 3, 4, 7, 9)),
    2: ((14, 16, 17, 18), (8, 10, 19, 20)),
}
BINARY_COLS = (1, 3, 5, 7)
CATEGORICAL_COLS = (2, 4, 6)
N_CURVE_BASIS = 13
GENERATOR_HIDDEN = (16, 16, 16)
LOWER_BOUNDS = (-4, -3, -2, -1, 0)
UPPER_BOUNDS = (3, 4, 5, 6, 7)


@dataclass(frozen=True)
class SimConfig:
    design: int = 1
    N: int = 2000
    K: int = 20
    m: int = 40
    noise_var: float = 2.0
    seed: int = 0

    def validate(self):
        if self.design not in (1, 2, 3, 4):
            raise ConfigError(f"design must be 1, 2, 3 or 4, got {self.design}")
        if self.N < 1 or self.m < 2:
            raise ConfigError("need N >= 1 subjects and m >= 2 time points")
        if self.noise_var < 0:
            raise ConfigError("noise variance must be nonnegative")
        if self.design == 1 and self.K < 5:
            raise ConfigError("design 1 needs K >= 5 predictors to build its basis")
        if self.K < 1:
            raise ConfigError("need at least one predictor")


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def generate(cfg: SimConfig):
    """Return ``(dataset, truth)`` where ``truth`` holds noiseless curves and generator internals."""
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    s_struct, s_net, s_x, s_noise = (np.random.default_rng(s) for s in root.spawn(4))
    K, N = cfg.K, cfg.N
    idx1 = np.arange(1, K + 1)

    # predictor kinds and ranges
    if cfg.design == 1:
        kinds = ["uniform"] * K
    else:
        kinds = ["binary" if k in BINARY_COLS else "categorical" if k in CATEGORICAL_COLS else "uniform"
                 for k in idx1]
    lower = s_struct.choice(LOWER_BOUNDS, size=K).astype(float)
    upper = s_struct.choice(UPPER_BOUNDS, size=K).astype(float)

    # coefficient functions
    quad, cubic = DESIGN_POLY.get(cfg.design, ((), ()))
    poly = {}
    for k in idx1:
        if k in quad:
            poly[int(k)] = s_struct.standard_normal(3)
        elif k in cubic:
            poly[int(k)] = s_struct.standard_normal(4)

    # random curves
    if cfg.design == 1:
        curve_basis = make_basis((0.0, 1.0), K, 4)
        beta = np.eye(K)
    else:
        curve_basis = make_basis((0.0, 1.0), N_CURVE_BASIS, 4)
        beta = 2.0 * s_struct.standard_normal((K, N_CURVE_BASIS))

    gen_sizes = (K,) + GENERATOR_HIDDEN + (K,)
    gen_weights = []
    if cfg.design == 3:
        for fi, fo in zip(gen_sizes[:-1], gen_sizes[1:]):
            gen_weights.append(s_net.standard_normal((fo, fi)))

    U = s_x.random((N, K))
    X = np.empty_like(U)
    for j, kind in enumerate(kinds):
        if kind == "binary":
            X[:, j] = (U[:, j] < 0.5).astype(float)
        elif kind == "categorical":
            X[:, j] = np.floor(8.0 * U[:, j]) + 1.0
        else:
            X[:, j] = lower[j] + (upper[j] - lower[j]) * U[:, j]

    if cfg.design == 3:
        h = X
        for W in gen_weights:
            h = _sigmoid(h @ W.T)
        zeta = h
    else:
        zeta = X.copy()
        for k, c in poly.items():
            x = X[:, k - 1]
            zeta[:, k - 1] = np.polynomial.polynomial.polyval(x, c)

    grid = np.linspace(0.0, 1.0, cfg.m)
    psi = beta @ eval_matrix(curve_basis, grid)  # K x m
    Y = zeta @ psi
    noise = np.sqrt(cfg.noise_var) * s_noise.standard_normal((N, cfg.m))
    ds = FunctionalDataset(X, grid, Y + noise, np.ones_like(Y))

    truth = {
        "config": asdict(cfg),
        "predictor_kinds": kinds,
        "uniform_bounds": [[float(a), float(b)] for a, b in zip(lower, upper)],
        "polynomial_coefficients": {str(k): c.tolist() for k, c in poly.items()},
        "curve_basis": curve_basis.to_json(),
        "beta": beta.tolist(),
        "psi": psi,
        "zeta": zeta,
        "noiseless": Y,
        "generator_network": {"sizes": list(gen_sizes), "activation": "sigmoid",
                              "weights": [W.tolist() for W in gen_weights]} if gen_weights else None,
    }
    return ds, truth


def truth_to_json(truth) -> dict:
    out = {}
    for key, val in truth.items():
        out[key] = val.tolist() if isinstance(val, np.ndarray) else val
    return out
