"""Compare the numba and pure-numpy paths of the hot kernels.

Each kernel is run once to warm up (compilation for numba), then timed over
``--repeats`` calls; the table reports the best wall time per path and the
max abs difference between the two outputs.

    python benchmarks/bench_kernels.py --n 2000 --repeats 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fosnet import _kernels as K
from fosnet.bspline import eval_matrix, make_basis
from fosnet.network import LossSpec, init_network


def _best(fn, repeats):
    out = fn()
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _diff(a, b):
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def main() -> None:
    parser = argparse.ArgumentParser(description="numba vs numpy kernel timings")
    parser.add_argument("--n", type=int, default=2000, help="subjects")
    parser.add_argument("--m", type=int, default=40, help="time points")
    parser.add_argument("--kb", type=int, default=13)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(42)
    basis = make_basis((0.0, 1.0), args.kb, 4)
    times = rng.random(args.n * args.m)
    grid = np.linspace(0, 1, args.m)
    theta = eval_matrix(basis, grid)
    values = rng.normal(size=(args.n, args.m))
    mask = (rng.random((args.n, args.m)) > 0.3).astype(float)

    X = rng.normal(size=(args.n, 20))
    net = init_network((20, 50, 30, args.kb), ("relu", "relu", "identity"), seed=0)
    spec = LossSpec("response+curvature", basis_matrix=theta, mask=mask, lam=1e-2,
                    deriv_matrix=np.ones((args.kb, 101)), domain_length=1.0)
    T, M, B, mu, P = spec.kernel_args(values)
    perms = np.stack([rng.permutation(args.n) for _ in range(args.epochs)])

    def train(fn):
        return lambda: fn(net.params.copy(), *net._meta, X, T, M, B, mu, P, perms, 32,
                          K.OPT_ADAM, 1e-3, 0.9, 0.999, 1e-8)[0]

    cases = [
        ("spline_table", lambda: K.spline_table_np(basis.knots, 4, times),
         lambda: K.spline_table_nb(basis.knots, 4, times)),
        ("masked_normal_eq", lambda: K.masked_normal_eq_np(theta, values, mask),
         lambda: K.masked_normal_eq_nb(theta, values, mask)),
        ("loss_grad", lambda: K.loss_grad_np(net.params, *net._meta, X, T, M, B, mu, P),
         lambda: K.loss_grad_nb(net.params, *net._meta, X, T, M, B, mu, P)),
        ("train_epochs", train(K.train_epochs_np), train(K.train_epochs_nb)),
    ]

    print(f"n={args.n} m={args.m} kb={args.kb} epochs={args.epochs} repeats={args.repeats}")
    print(f"{'kernel':<18}{'numpy_s':>12}{'numba_s':>12}{'speedup':>10}{'max_abs_diff':>15}")
    for name, f_np, f_nb in cases:
        t_np, out_np = _best(f_np, args.repeats)
        t_nb, out_nb = _best(f_nb, args.repeats)
        print(f"{name:<18}{t_np:12.5f}{t_nb:12.5f}{t_np / t_nb:10.1f}{_diff(out_np, out_nb):15.2e}")


if __name__ == "__main__":
    main()
