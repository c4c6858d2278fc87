"""Function-on-scalar regressors.

``nnbb``  network → B-spline coefficients, trained on pre-smoothed coefficients
``nnss``  network → FPC scores, trained on estimated scores
``nnbr``  network → B-spline coefficients, trained on the observed curves
``nnsr``  network → FPC scores, trained on the observed curves
``fos``   linear least squares of smoothed coefficients on ``[1, X]``
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.interpolate import make_interp_spline

from .bspline import BasisSystem, deriv_matrix, eval_matrix, make_basis
from .dataset import FunctionalDataset
from .errors import ConfigError, DataError
from .fpca import FpcaModel, fit_fpca, scores
from .network import LossSpec, Network, forward, init_network, train
from .smoothing import fit_coefficients

__all__ = [
    "VARIANTS",
    "FitConfig",
    "TrainedRegressor",
    "fit",
    "predict",
    "curves_from_outputs",
    "response_loss",
]

VARIANTS = ("fos", "nnbb", "nnss", "nnbr", "nnsr")
COEF_VARIANTS = ("fos", "nnbb", "nnbr")
SCORE_VARIANTS = ("nnss", "nnsr")
PENALTIES = (None, "curvature", "coeffdiff")


@dataclass(frozen=True)
class FitConfig:
    kb: int = 13
    order: int = 4
    tau: float = 0.99
    hidden: tuple = (50, 30)
    activation: str = "relu"
    output_activation: str = "identity"
    optimizer: str = "adam"
    lr: float = 1e-3
    epochs: int = 500
    batch: int = 32
    penalty: str | None = None
    lam: float = 0.0
    Q: int = 101
    scale_inputs: bool = True
    scale_targets: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.penalty not in PENALTIES:
            raise ConfigError(f"unknown penalty {self.penalty!r}; expected curvature or coeffdiff")

    def replace(self, **changes) -> "FitConfig":
        return replace(self, **changes)

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_json(cls, obj) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass(eq=False)
class TrainedRegressor:
    variant: str
    config: FitConfig
    net: Network | None = None
    fos_coeffs: np.ndarray | None = None
    basis: BasisSystem | None = None
    fpca: FpcaModel | None = None
    x_center: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    y_scale: float = 1.0
    time_range: tuple = (0.0, 1.0)
    trace: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if (self.net is None) == (self.fos_coeffs is None):
            raise ConfigError("exactly one of a network or FoS coefficients must be present")
        if (self.variant == "fos") != (self.fos_coeffs is not None):
            raise ConfigError("FoS models carry coefficients, network variants carry a network")
        if self.variant in COEF_VARIANTS and self.basis is None:
            raise ConfigError(f"{self.variant} needs a basis system")
        if self.variant in SCORE_VARIANTS and self.fpca is None:
            raise ConfigError(f"{self.variant} needs an FPCA model")

    @property
    def n_params(self) -> int:
        return self.net.n_params if self.net is not None else int(self.fos_coeffs.size)

    @property
    def n_predictors(self) -> int:
        if self.net is not None:
            return self.net.sizes[0]
        return self.fos_coeffs.shape[0] - 1

    def outputs(self, X) -> np.ndarray:
        """Coefficient or score matrix predicted for ``X`` (in data units)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_predictors:
            raise DataError(f"got {X.shape[1]} predictors, model was trained on {self.n_predictors}")
        if self.variant == "fos":
            return np.column_stack([np.ones(len(X)), X]) @ self.fos_coeffs
        Xs = X if self.x_center is None else (X - self.x_center) / self.x_scale
        return forward(self.net, Xs) * self.y_scale

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "config": self.config.to_json(),
            "network": self.net.to_json() if self.net is not None else None,
            "fos_coeffs": self.fos_coeffs.tolist() if self.fos_coeffs is not None else None,
            "basis": self.basis.to_json() if self.basis is not None else None,
            "fpca": self.fpca.to_json() if self.fpca is not None else None,
            "x_center": None if self.x_center is None else self.x_center.tolist(),
            "x_scale": None if self.x_scale is None else self.x_scale.tolist(),
            "y_scale": self.y_scale,
            "time_range": list(self.time_range),
        }

    @classmethod
    def from_json(cls, obj) -> "TrainedRegressor":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)  # noqa: E731
        return cls(
            variant=obj["variant"],
            config=FitConfig.from_json(obj["config"]),
            net=Network.from_json(obj["network"]) if obj.get("network") else None,
            fos_coeffs=arr(obj.get("fos_coeffs")),
            basis=BasisSystem.from_json(obj["basis"]) if obj.get("basis") else None,
            fpca=FpcaModel.from_json(obj["fpca"]) if obj.get("fpca") else None,
            x_center=arr(obj.get("x_center")),
            x_scale=arr(obj.get("x_scale")),
            y_scale=float(obj.get("y_scale", 1.0)),
            time_range=tuple(obj.get("time_range", (0.0, 1.0))),
        )


def _check_config(variant: str, config: FitConfig):
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    if config.penalty is not None or config.lam != 0:
        if variant in ("nnbb", "nnss", "fos"):
            raise ConfigError(
                f"roughness penalty is not available for {variant}: smoothing is done when the "
                "curves are fitted beforehand (use nnbr or nnsr)"
            )
        if config.penalty is None:
            raise ConfigError("lambda given without a penalty kind")
        if variant == "nnsr" and config.penalty == "coeffdiff":
            raise ConfigError("coefficient-difference penalty needs B-spline outputs (use nnbr)")


def _rms(a, mask=None):
    a = np.asarray(a, dtype=float)
    if mask is not None:
        a = a[mask == 1]
    r = float(np.sqrt(np.mean(a * a))) if a.size else 1.0
    return r if r > 0 and np.isfinite(r) else 1.0


def _eigen_second_derivative(model: FpcaModel, times) -> np.ndarray:
    k = min(3, model.grid.size - 1)
    spline = make_interp_spline(model.grid, model.eigenfunctions.T, k=k)
    return spline.derivative(2)(times).T if k >= 3 else np.zeros((model.n_components, len(times)))


def fit(variant: str, train_ds: FunctionalDataset, config: FitConfig | None = None) -> TrainedRegressor:
    """Train one variant on ``train_ds``."""
    config = config or FitConfig()
    variant = variant.lower()
    _check_config(variant, config)
    domain = (float(train_ds.grid[0]), float(train_ds.grid[-1]))
    X = train_ds.predictors

    if variant in COEF_VARIANTS:
        basis = make_basis(domain if domain[1] > domain[0] else (0.0, 1.0), config.kb, config.order)
    else:
        basis = None

    if variant == "fos":
        C = fit_coefficients(train_ds, basis).coeffs
        D = np.column_stack([np.ones(len(X)), X])
        B = np.linalg.solve(D.T @ D, D.T @ C)
        return TrainedRegressor("fos", config, fos_coeffs=B, basis=basis,
                                time_range=train_ds.time_range)

    fpca = None
    smoothing_basis = None
    if variant in SCORE_VARIANTS:
        if not train_ds.regular:
            smoothing_basis = make_basis(domain, config.kb, config.order)
        fpca = fit_fpca(train_ds, config.tau, smoothing_basis)

    if config.scale_inputs:
        x_center = X.mean(axis=0)
        x_scale = X.std(axis=0)
        x_scale = np.where(x_scale > 0, x_scale, 1.0)
        Xs = (X - x_center) / x_scale
    else:
        x_center = x_scale = None
        Xs = X

    mask = None if train_ds.regular else train_ds.mask
    if variant == "nnbb":
        targets = fit_coefficients(train_ds, basis).coeffs
        spec = LossSpec("coef")
    elif variant == "nnss":
        targets = scores(fpca, train_ds, smoothing_basis)
        spec = LossSpec("coef")
    elif variant == "nnbr":
        targets = train_ds.values
        spec = _response_spec(config, eval_matrix(basis, train_ds.grid), mask,
                              lambda q: deriv_matrix(basis, q, 2), domain, basis.n_basis)
    else:  # nnsr: train on centred curves
        targets = train_ds.values - fpca.mean
        spec = _response_spec(config, fpca.eigenfunctions, mask,
                              lambda q: _eigen_second_derivative(fpca, q), domain, fpca.n_components)

    y_scale = _rms(targets, mask if spec.response_space else None) if config.scale_targets else 1.0
    n_out = basis.n_basis if variant in ("nnbb", "nnbr") else fpca.n_components
    sizes = (X.shape[1],) + config.hidden + (n_out,)
    acts = (config.activation,) * len(config.hidden) + (config.output_activation,)
    net = init_network(sizes, acts, seed=config.seed)
    _init_output_bias(net, variant, targets / y_scale, spec, mask)
    net, trace = train(net, Xs, targets / y_scale, spec, opt=config.optimizer, lr=config.lr,
                       epochs=config.epochs, batch=config.batch, seed=config.seed + 1)
    return TrainedRegressor(variant, config, net=net, basis=basis, fpca=fpca,
                            x_center=x_center, x_scale=x_scale, y_scale=y_scale,
                            time_range=train_ds.time_range, trace=trace)


def _response_spec(config, out_map, mask, second_deriv, domain, k):
    kind = {None: "response", "curvature": "response+curvature", "coeffdiff": "response+coeffdiff"}[config.penalty]
    D2 = None
    if config.penalty == "curvature":
        q = np.linspace(domain[0], domain[1], config.Q)
        D2 = second_deriv(q)
    return LossSpec(kind, basis_matrix=out_map, mask=mask, lam=config.lam, Q=config.Q,
                    deriv_matrix=D2, domain_length=domain[1] - domain[0])


def _init_output_bias(net: Network, variant, targets, spec: LossSpec, mask):
    """Start the output layer at the least-squares constant fit of the targets."""
    if net.activations[-1] != "identity":
        return
    _, b, _ = net.layers[-1]
    if not spec.response_space:
        b[:] = targets.mean(axis=0)
        return
    B = spec.basis_matrix
    M = np.ones_like(targets) if mask is None else mask
    w = M.sum(axis=0)
    mean_curve = np.where(w > 0, (M * targets).sum(axis=0) / np.maximum(w, 1), 0.0)
    G = (B * w) @ B.T + 1e-10 * np.eye(B.shape[0])
    b[:] = np.linalg.solve(G, (B * w) @ mean_curve)


def curves_from_outputs(model: TrainedRegressor, outputs, times) -> np.ndarray:
    """Curves at ``times`` from a coefficient/score matrix (affine in ``outputs``)."""
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if model.variant in COEF_VARIANTS:
        return outputs @ eval_matrix(model.basis, times)
    mean, phi = model.fpca.at(times)
    return mean + outputs @ phi


def predict(model: TrainedRegressor, X_new, times) -> np.ndarray:
    """Predicted curves, one row per subject, evaluated at ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if model.variant in COEF_VARIANTS:
        eval_matrix(model.basis, times)  # domain check before the forward pass
    else:
        model.fpca.at(times)
    return curves_from_outputs(model, model.outputs(X_new), times)


def response_loss(model: TrainedRegressor, ds: FunctionalDataset) -> float:
    """(1/n) Σ_i Σ_j mask_ij (Z_ij − Ŷ_ij)² on ``ds``'s grid."""
    pred = predict(model, ds.predictors, ds.grid)
    R = ds.mask * (ds.values - pred)
    return float(np.sum(R * R) / ds.n_subjects)
