"""Hot numeric kernels.

Every kernel exists twice: a loop-oriented version compiled with numba and a
vectorised numpy version. ``USE_NUMBA`` (see :mod:`fosnet._jit`) picks the one
bound to the public names at import time (the masked normal equations always
use numpy, which is faster there); both remain importable so the benchmark can
time them side by side.

The network kernels are written in the numpy subset numba understands, so the
same source serves both paths: the compiled copy is ``njit(f)`` and the
fallback is ``f`` itself.
"""

import numpy as np

from ._jit import _HAS_NUMBA, USE_NUMBA, njit

ACT_IDENTITY, ACT_RELU, ACT_SIGMOID, ACT_TANH = 0, 1, 2, 3
ACTIVATION_CODES = {
    "identity": ACT_IDENTITY,
    "relu": ACT_RELU,
    "sigmoid": ACT_SIGMOID,
    "tanh": ACT_TANH,
}

OPT_SGD, OPT_ADAM = 0, 1


# ---------------------------------------------------------------------------
# B-spline table: values of all order-``o`` B-splines, o = 1..order
# ---------------------------------------------------------------------------

def _spline_table_np(knots, order, times):
    """Return ``table[o-1, i, j] = B_{i,o}(times[j])`` for o = 1..order.

    Right-continuous, except that the last nonempty interval is closed on the
    right so the final basis function equals one at the upper endpoint.
    """
    nk = knots.shape[0]
    n_basis = nk - order
    m = times.shape[0]
    table = np.zeros((order, nk - 1, m))
    mu = np.searchsorted(knots, times, side="right") - 1
    mu = np.minimum(mu, n_basis - 1)
    table[0, mu, np.arange(m)] = 1.0
    for o in range(2, order + 1):
        prev = table[o - 2]
        idx = np.arange(nk - o)
        left_den = knots[idx + o - 1] - knots[idx]
        right_den = knots[idx + o] - knots[idx + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den[:, None] > 0,
                            (times[None, :] - knots[idx, None]) / left_den[:, None], 0.0)
            right = np.where(right_den[:, None] > 0,
                             (knots[idx + o, None] - times[None, :]) / right_den[:, None], 0.0)
        table[o - 1, : nk - o] = left * prev[idx] + right * prev[idx + 1]
    return table


@njit
def _spline_table_nb(knots, order, times):
    nk = knots.shape[0]
    n_basis = nk - order
    m = times.shape[0]
    table = np.zeros((order, nk - 1, m))
    for j in range(m):
        t = times[j]
        # last index with knots[mu] <= t, clipped to the final nonempty interval
        lo = 0
        hi = nk
        while lo < hi:
            mid = (lo + hi) // 2
            if knots[mid] <= t:
                lo = mid + 1
            else:
                hi = mid
        mu = lo - 1
        if mu > n_basis - 1:
            mu = n_basis - 1
        table[0, mu, j] = 1.0
        for o in range(2, order + 1):
            start = mu - o + 1
            if start < 0:
                start = 0
            for i in range(start, mu + 1):
                if i + o >= nk:
                    continue
                val = 0.0
                den = knots[i + o - 1] - knots[i]
                if den > 0.0:
                    val += (t - knots[i]) / den * table[o - 2, i, j]
                den = knots[i + o] - knots[i + 1]
                if den > 0.0:
                    val += (knots[i + o] - t) / den * table[o - 2, i + 1, j]
                table[o - 1, i, j] = val
    return table


# ---------------------------------------------------------------------------
# Masked normal equations for per-subject least squares
# ---------------------------------------------------------------------------

def _masked_normal_eq_np(theta, values, mask):
    """Per-subject Gram matrices ``Θ diag(mask_i) Θᵀ`` and right-hand sides."""
    gram = np.einsum("kj,ij,lj->ikl", theta, mask, theta, optimize=True)
    rhs = (mask * values) @ theta.T
    return gram, rhs


@njit
def _masked_normal_eq_nb(theta, values, mask):
    n_basis, m = theta.shape
    n = values.shape[0]
    # nonzero band of each column (B-splines have local support)
    lo = np.zeros(m, dtype=np.int64)
    hi = np.zeros(m, dtype=np.int64)
    for j in range(m):
        first, last = n_basis, -1
        for k in range(n_basis):
            if theta[k, j] != 0.0:
                if first == n_basis:
                    first = k
                last = k
        lo[j], hi[j] = first, last + 1
    gram = np.zeros((n, n_basis, n_basis))
    rhs = np.zeros((n, n_basis))
    for i in range(n):
        for j in range(m):
            w = mask[i, j]
            if w == 0.0:
                continue
            z = values[i, j] * w
            for k in range(lo[j], hi[j]):
                tk = theta[k, j]
                rhs[i, k] += z * tk
                wt = w * tk
                for l in range(lo[j], hi[j]):
                    gram[i, k, l] += wt * theta[l, j]
    return gram, rhs


# ---------------------------------------------------------------------------
# Dense network: forward, loss + gradient, minibatch training
# ---------------------------------------------------------------------------

def _activate(z, code):
    if code == ACT_RELU:
        return np.maximum(z, 0.0)
    if code == ACT_SIGMOID:
        return 1.0 / (1.0 + np.exp(-z))
    if code == ACT_TANH:
        return np.tanh(z)
    return z


def _activation_slope(a, code):
    # derivative expressed through the activation output
    if code == ACT_RELU:
        return (a > 0.0) * 1.0
    if code == ACT_SIGMOID:
        return a * (1.0 - a)
    if code == ACT_TANH:
        return 1.0 - a * a
    return np.ones_like(a)


def _forward_all(params, fan_in, fan_out, w_off, b_off, acts, x):
    hs = [x]
    h = x
    for layer in range(fan_in.shape[0]):
        fi = fan_in[layer]
        fo = fan_out[layer]
        w = params[w_off[layer]: w_off[layer] + fo * fi].reshape((fo, fi))
        b = params[b_off[layer]: b_off[layer] + fo]
        h = _activate(np.dot(h, w.T) + b, acts[layer])
        hs.append(h)
    return hs


def _loss_grad(params, fan_in, fan_out, w_off, b_off, acts,
               x, targets, mask, out_map, offset, penalty):
    """Loss and flat gradient of

        L = (1/n) Σ_ij mask_ij (T_ij − (Ĉ·out_map)_ij − offset_j)² + (1/n) Σ_i ĉ_iᵀ P ĉ_i

    with Ĉ the network output. ``out_map`` is the identity for coefficient-space
    targets and the basis / eigenfunction matrix for response-space targets.
    """
    n = x.shape[0]
    hs = _forward_all(params, fan_in, fan_out, w_off, b_off, acts, x)
    c_hat = hs[-1]
    resid = mask * (targets - (np.dot(c_hat, out_map) + offset))
    pc = np.dot(c_hat, penalty)
    loss = (np.sum(resid * resid) + np.sum(pc * c_hat)) / n

    grad = np.zeros_like(params)
    delta = (2.0 / n) * (pc - np.dot(resid, out_map.T))
    for layer in range(fan_in.shape[0] - 1, -1, -1):
        fi = fan_in[layer]
        fo = fan_out[layer]
        delta = delta * _activation_slope(hs[layer + 1], acts[layer])
        gw = np.dot(delta.T, hs[layer])
        grad[w_off[layer]: w_off[layer] + fo * fi] = gw.ravel()
        grad[b_off[layer]: b_off[layer] + fo] = delta.sum(axis=0)
        if layer > 0:
            w = params[w_off[layer]: w_off[layer] + fo * fi].reshape((fo, fi))
            delta = np.dot(delta, w)
    return loss, grad


def _train_epochs(params, fan_in, fan_out, w_off, b_off, acts,
                  x, targets, mask, out_map, offset, penalty,
                  perms, batch, optimizer, lr, beta1, beta2, eps):
    """Run ``perms.shape[0]`` epochs in place on ``params``.

    Returns ``(trace, status)``; ``status`` is -1 on success, otherwise the
    zero-based epoch at which the loss stopped being finite.
    """
    n_epochs, n = perms.shape
    trace = np.full(n_epochs, np.nan)
    m1 = np.zeros_like(params)
    m2 = np.zeros_like(params)
    step = 0
    for epoch in range(n_epochs):
        perm = perms[epoch]
        for start in range(0, n, batch):
            stop = min(start + batch, n)
            idx = np.sort(perm[start:stop])
            loss, grad = _loss_grad(params, fan_in, fan_out, w_off, b_off, acts,
                                    x[idx], targets[idx], mask[idx],
                                    out_map, offset, penalty)
            if not np.isfinite(loss):
                return trace, epoch
            if optimizer == OPT_ADAM:
                step += 1
                m1[:] = beta1 * m1 + (1.0 - beta1) * grad
                m2[:] = beta2 * m2 + (1.0 - beta2) * grad * grad
                m_hat = m1 / (1.0 - beta1 ** step)
                v_hat = m2 / (1.0 - beta2 ** step)
                params[:] = params - lr * m_hat / (np.sqrt(v_hat) + eps)
            else:
                params[:] = params - lr * grad
        full, _ = _loss_grad(params, fan_in, fan_out, w_off, b_off, acts,
                             x, targets, mask, out_map, offset, penalty)
        trace[epoch] = full
        if not np.isfinite(full):
            return trace, epoch
    return trace, -1


def _forward_out(params, fan_in, fan_out, w_off, b_off, acts, x):
    return _forward_all(params, fan_in, fan_out, w_off, b_off, acts, x)[-1]


spline_table_np = _spline_table_np
spline_table_nb = _spline_table_nb
masked_normal_eq_np = _masked_normal_eq_np
masked_normal_eq_nb = _masked_normal_eq_nb

loss_grad_np = _loss_grad
train_epochs_np = _train_epochs
forward_np = _forward_out

_activate_nb = njit(_activate)
_activation_slope_nb = njit(_activation_slope)


def _compiled_network_kernels():
    """Compile the network kernels against the numba-compiled helpers."""
    g = dict(globals())
    g["_activate"] = _activate_nb
    g["_activation_slope"] = _activation_slope_nb
    out = {}
    for name in ("_forward_all", "_loss_grad", "_train_epochs", "_forward_out"):
        src_fn = globals()[name]
        fn = type(src_fn)(src_fn.__code__, g, name)
        g[name] = njit(fn)
        out[name] = g[name]
    return out


if _HAS_NUMBA:
    _nb = _compiled_network_kernels()
    loss_grad_nb = _nb["_loss_grad"]
    train_epochs_nb = _nb["_train_epochs"]
    forward_nb = _nb["_forward_out"]
else:  # pragma: no cover - numba missing
    loss_grad_nb = loss_grad_np
    train_epochs_nb = train_epochs_np
    forward_nb = forward_np

# the einsum path is BLAS-backed and beats the loop kernel at every size we
# benchmarked, so both modes use it
masked_normal_eq = masked_normal_eq_np

if USE_NUMBA:
    spline_table = spline_table_nb
    loss_grad = loss_grad_nb
    train_epochs = train_epochs_nb
    forward = forward_nb
else:
    spline_table = spline_table_np
    loss_grad = loss_grad_np
    train_epochs = train_epochs_np
    forward = forward_np
