"""Dense feed-forward network with exact backpropagation.

Parameters live in one flat float64 vector; per-layer weights (``fan_out ×
fan_in``) and biases are views into it. Every supported objective reduces to

    L(η) = (1/n) Σ_i Σ_j mask_ij (T_ij − (Ĉ B)_ij − μ_j)²  +  (1/n) Σ_i ĉ_iᵀ P ĉ_i

where Ĉ is the network output, ``B`` a fixed linear map (identity for
coefficient targets), ``μ`` an optional mean curve and ``P`` a fixed penalty
matrix. The curvature penalty uses ``P = λT/(Q−1) · D₂D₂ᵀ`` and the
coefficient-difference penalty uses ``P = λ ΔᵀΔ``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError, TrainingError

__all__ = [
    "Network",
    "LossSpec",
    "LOSS_KINDS",
    "init_network",
    "forward",
    "loss_and_grad",
    "train",
]

LOSS_KINDS = ("coef", "response", "response+curvature", "response+coeffdiff")
ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(eq=False)
class Network:
    sizes: tuple
    activations: tuple
    params: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.activations = tuple(self.activations)
        if len(self.sizes) < 2:
            raise ConfigError("a network needs at least an input and an output size")
        if len(self.activations) != len(self.sizes) - 1:
            raise ConfigError(
                f"{len(self.activations)} activations given for {len(self.sizes) - 1} layers"
            )
        unknown = [a for a in self.activations if a not in _kernels.ACTIVATION_CODES]
        if unknown:
            raise ConfigError(f"unknown activation {unknown[0]!r}")
        if any(s <= 0 for s in self.sizes):
            raise ConfigError("layer sizes must be positive")
        fan_in = np.array(self.sizes[:-1], dtype=np.int64)
        fan_out = np.array(self.sizes[1:], dtype=np.int64)
        w_off = np.zeros(len(fan_in), dtype=np.int64)
        b_off = np.zeros(len(fan_in), dtype=np.int64)
        offset = 0
        for i, (fi, fo) in enumerate(zip(fan_in, fan_out)):
            w_off[i] = offset
            offset += fi * fo
            b_off[i] = offset
            offset += fo
        self.params = np.ascontiguousarray(self.params, dtype=float).ravel()
        if self.params.size != offset:
            raise ConfigError(f"parameter vector has {self.params.size} entries, expected {offset}")
        self._meta = (fan_in, fan_out, w_off, b_off,
                      np.array([_kernels.ACTIVATION_CODES[a] for a in self.activations], dtype=np.int64))

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def layers(self):
        """List of ``(W, b, activation)`` with W and b as views into ``params``."""
        fan_in, fan_out, w_off, b_off, _ = self._meta
        out = []
        for i, act in enumerate(self.activations):
            fi, fo = fan_in[i], fan_out[i]
            W = self.params[w_off[i]: w_off[i] + fi * fo].reshape(fo, fi)
            b = self.params[b_off[i]: b_off[i] + fo]
            out.append((W, b, act))
        return out

    def copy(self) -> "Network":
        return Network(self.sizes, self.activations, self.params.copy())

    def to_json(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "activations": list(self.activations),
            "weights": [W.tolist() for W, _, _ in self.layers],
            "biases": [b.tolist() for _, b, _ in self.layers],
        }

    @classmethod
    def from_json(cls, obj) -> "Network":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        parts = []
        for W, b in zip(obj["weights"], obj["biases"]):
            parts.append(np.asarray(W, dtype=float).ravel())
            parts.append(np.asarray(b, dtype=float).ravel())
        return cls(tuple(obj["sizes"]), tuple(obj["activations"]), np.concatenate(parts))


@dataclass(eq=False)
class LossSpec:
    """Objective definition; see the module docstring for the algebra."""

    kind: str = "coef"
    basis_matrix: np.ndarray | None = None
    mean_curve: np.ndarray | None = None
    mask: np.ndarray | None = None
    lam: float = 0.0
    Q: int = 101
    deriv_matrix: np.ndarray | None = None
    domain_length: float = 1.0
    _penalty: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.lam < 0 or not np.isfinite(self.lam):
            raise ConfigError(f"lambda must be a finite nonnegative number, got {self.lam}")
        if self.kind != "coef" and self.basis_matrix is None:
            raise ConfigError(f"loss kind {self.kind!r} needs a basis matrix")
        if self.kind == "response+curvature":
            if self.deriv_matrix is None:
                raise ConfigError("curvature penalty needs a second-derivative matrix")
            if self.deriv_matrix.shape[1] != self.Q:
                raise ConfigError("derivative matrix must have Q columns")
            if self.Q < 2:
                raise ConfigError("Q must be at least 2")
        if self.basis_matrix is not None:
            self.basis_matrix = np.ascontiguousarray(self.basis_matrix, dtype=float)

    @property
    def response_space(self) -> bool:
        return self.kind != "coef"

    def output_dim(self, n_targets: int) -> int:
        return self.basis_matrix.shape[0] if self.response_space else n_targets

    def penalty_weight(self) -> float:
        if self.kind == "response+curvature":
            return self.lam * self.domain_length / (self.Q - 1)
        if self.kind == "response+coeffdiff":
            return self.lam
        return 0.0

    def raw_penalty_matrix(self, k: int) -> np.ndarray:
        """Unweighted quadratic form of the penalty (zero for unpenalised kinds)."""
        if self.kind == "response+curvature":
            D = self.deriv_matrix[:, 1:]
            return D @ D.T
        if self.kind == "response+coeffdiff":
            if k < 3:
                raise ConfigError("coefficient-difference penalty needs at least 3 outputs")
            D = np.diff(np.eye(k), n=2, axis=0)
            return D.T @ D
        return np.zeros((k, k))

    def penalty_matrix(self, k: int) -> np.ndarray:
        if self._penalty is None or self._penalty.shape[0] != k:
            self._penalty = np.ascontiguousarray(self.penalty_weight() * self.raw_penalty_matrix(k))
        return self._penalty

    def kernel_args(self, targets: np.ndarray, mask=None):
        """(targets, mask, out_map, offset, penalty) arrays for the loss kernel."""
        targets = np.ascontiguousarray(targets, dtype=float)
        if targets.ndim != 2:
            raise DataError("targets must be a 2-D array")
        n, m = targets.shape
        if self.response_space:
            out_map = self.basis_matrix
            if out_map.shape[1] != m:
                raise DataError(
                    f"targets have {m} columns but the basis matrix maps to {out_map.shape[1]} points"
                )
            offset = np.zeros(m) if self.mean_curve is None else np.ascontiguousarray(self.mean_curve, dtype=float)
        else:
            out_map = np.eye(m)
            offset = np.zeros(m)
        mask = self.mask if mask is None else mask
        if mask is None:
            mask = np.ones((n, m))
        mask = np.ascontiguousarray(mask, dtype=float)
        if mask.shape != targets.shape:
            raise DataError(f"mask shape {mask.shape} does not match targets {targets.shape}")
        return targets, mask, out_map, offset, self.penalty_matrix(out_map.shape[0])

    def terms(self, net: Network, X, targets):
        """``(fit term, penalty term)``; their sum is the loss."""
        T, M, B, mu, P = self.kernel_args(targets)
        C = forward(net, X)
        R = M * (T - (C @ B + mu))
        n = T.shape[0]
        return float(np.sum(R * R) / n), float(np.sum((C @ P) * C) / n)


def init_network(layer_sizes, activations, seed=0) -> Network:
    """Weights uniform on ±√(6/(fan_in+fan_out)), zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 3:
        raise ConfigError("a network needs at least one hidden layer")
    if len(activations) != len(sizes) - 1:
        raise ConfigError(f"{len(activations)} activations given for {len(sizes) - 1} layers")
    rng = np.random.default_rng(seed)
    parts = []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fi + fo))
        parts.append(rng.uniform(-limit, limit, size=(fo, fi)).ravel())
        parts.append(np.zeros(fo))
    return Network(sizes, tuple(activations), np.concatenate(parts))


def _check_inputs(net: Network, X) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    if X.shape[1] != net.sizes[0]:
        raise DataError(f"input has {X.shape[1]} columns, network expects {net.sizes[0]}")
    return X


def forward(net: Network, X) -> np.ndarray:
    X = _check_inputs(net, X)
    return _kernels.forward(net.params, *net._meta, X)


def loss_and_grad(net: Network, X, targets, spec: LossSpec):
    """Loss value and its gradient, returned as a Network-shaped parameter set."""
    X = _check_inputs(net, X)
    T, M, B, mu, P = spec.kernel_args(targets)
    if X.shape[0] != T.shape[0]:
        raise DataError("inputs and targets have different numbers of rows")
    if net.sizes[-1] != B.shape[0]:
        raise DataError(f"network outputs {net.sizes[-1]} values, loss expects {B.shape[0]}")
    with np.errstate(over="ignore", invalid="ignore"):
        loss, grad = _kernels.loss_grad(net.params, *net._meta, X, T, M, B, mu, P)
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss at the given parameters")
    return float(loss), Network(net.sizes, net.activations, grad)


def train(net: Network, X, targets, spec: LossSpec, opt: str = "adam", lr: float = 1e-3,
          epochs: int = 500, batch: int = 32, seed=0):
    """Minibatch training. Returns ``(trained network, per-epoch full-data loss)``.

    The input network is left untouched. Each epoch visits a fresh seeded
    permutation of the rows; the last batch may be short.
    """
    if epochs < 1 or batch < 1 or not lr > 0:
        raise ConfigError("epochs and batch must be >= 1 and lr > 0")
    if opt not in ("sgd", "adam"):
        raise ConfigError(f"unknown optimizer {opt!r}")
    X = _check_inputs(net, X)
    T, M, B, mu, P = spec.kernel_args(targets)
    n = X.shape[0]
    if T.shape[0] != n:
        raise DataError("inputs and targets have different numbers of rows")
    if net.sizes[-1] != B.shape[0]:
        raise DataError(f"network outputs {net.sizes[-1]} values, loss expects {B.shape[0]}")
    rng = np.random.default_rng(seed)
    perms = np.empty((epochs, n), dtype=np.int64)
    for e in range(epochs):
        perms[e] = rng.permutation(n)
    out = net.copy()
    code = _kernels.OPT_ADAM if opt == "adam" else _kernels.OPT_SGD
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
        trace, status = _kernels.train_epochs(
            out.params, *out._meta, X, T, M, B, mu, P, perms, int(batch), code, float(lr),
            ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
        )
    if status >= 0:
        finite = trace[np.isfinite(trace)]
        last = float(finite[-1]) if finite.size else None
        raise TrainingError(
            f"loss became non-finite in epoch {status + 1} (last finite loss: {last})",
            epoch=int(status) + 1, last_finite_loss=last,
        )
    return out, trace
