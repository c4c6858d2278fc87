"""``fosnet`` command-line interface.

Exit status: 0 on success, 2 for configuration errors, 1 for runtime failures.
Hyperparameters resolve as flags > ``--config`` JSON file > defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._jit import USE_NUMBA
from .bspline import make_basis
from .dataset import FunctionalDataset, load_dataset, save_dataset
from .errors import ConfigError, FosnetError
from .evaluate import (
    derive_seed,
    format_table,
    grid_search_cv,
    repeated_holdout,
    reports_to_csv,
    reports_to_summary,
    resolve_jobs,
)
from .fpca import fit_fpca, scores
from .regressors import VARIANTS, FitConfig, TrainedRegressor, fit, predict
from .simgen import SimConfig, generate, truth_to_json
from .smoothing import fit_coefficients

log = logging.getLogger("fosnet")

# Training presets used by ``reproduce``; the basis size matches each design's generator.
DESIGN_PRESETS = {
    1: {"kb": 20},
    2: {"kb": 13},
    3: {"kb": 13},
    4: {"kb": 13},
}
REPRODUCE_TRAINING = {"epochs": 1000, "batch": 128, "lr": 1e-3, "hidden": (50, 30), "tau": 0.99}

HYPER_FLAGS = ("kb", "order", "tau", "layers", "activation", "lr", "epochs", "batch",
               "optimizer", "penalty", "lam", "Q")


@dataclass
class RunConfig:
    """Fully resolved settings of one CLI invocation (written to manifests)."""

    subcommand: str
    seed: int = 0
    variant: str | None = None
    data: str | None = None
    out: str | None = None
    fit: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _csv_ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_hyper(p):
    g = p.add_argument_group("model hyperparameters")
    g.add_argument("--kb", type=int, help="number of B-spline basis functions")
    g.add_argument("--order", type=int, help="B-spline order (4 = cubic)")
    g.add_argument("--tau", type=float, help="FPCA explained-variance threshold")
    g.add_argument("--layers", type=_csv_ints, help="hidden layer widths, e.g. 50,30")
    g.add_argument("--activation", choices=("relu", "sigmoid", "tanh", "identity"))
    g.add_argument("--lr", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch", type=int)
    g.add_argument("--optimizer", choices=("adam", "sgd"))
    g.add_argument("--penalty", choices=("curvature", "coeffdiff"))
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--Q", type=int, help="quadrature points for the curvature penalty")
    g.add_argument("--config", help="JSON file with default hyperparameters")


def _add_data(p, required=True):
    p.add_argument("--data", required=required, help="wide CSV file, or directory (data.csv / long format)")
    p.add_argument("--format", choices=("wide-csv", "long-csv"), help="input format (auto-detected)")
    p.add_argument("--standardize", action="store_true", help="standardize predictor columns on load")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fosnet", description="Neural-network function-on-scalar regression")
    parser.add_argument("--version", action="version", version=f"fosnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a simulated dataset (Designs 1-4)")
    p.add_argument("--design", type=int, required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--k", type=int, default=20, help="number of predictors")
    p.add_argument("--m", type=int, default=40, help="number of time points")
    p.add_argument("--noise-var", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--long", action="store_true", help="also write the long-format files")

    p = sub.add_parser("smooth", help="least-squares B-spline coefficients per subject")
    _add_data(p)
    p.add_argument("--kb", type=int, default=13)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-basis", help="write basis knots and matrices as JSON")

    p = sub.add_parser("fpca", help="functional principal components")
    _add_data(p)
    p.add_argument("--tau", type=float, default=0.99)
    p.add_argument("--kb", type=int, default=10, help="smoothing basis size for irregular data")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="fit one model and save it as a JSON bundle")
    _add_data(p)
    p.add_argument("--variant", required=True, choices=VARIANTS)
    _add_hyper(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="write the per-epoch loss trace as CSV")
    p.add_argument("--dump-basis", help="write basis knots and matrices as JSON")

    p = sub.add_parser("predict", help="predict curves from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--x", required=True, help="CSV of predictors (header row, one subject per row)")
    p.add_argument("--times", required=True, help="CSV with one column of times (original units)")
    p.add_argument("--out", required=True)
    p.add_argument("--coef-out", help="also write predictors with predicted coefficients/scores")

    p = sub.add_parser("evaluate", help="repeated random-subsampling comparison of variants")
    _add_data(p)
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int)
    p.add_argument("--tune-kb", type=_csv_ints, help="candidate basis sizes tuned by 5-fold CV")
    p.add_argument("--share-basis", action="store_true",
                   help="use the basis size selected for FoS in every variant")
    _add_hyper(p)
    p.add_argument("--out", help="output directory for report.csv / summary.json")

    p = sub.add_parser("cv", help="k-fold grid search for one variant")
    _add_data(p)
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--grid", required=True,
                   help="semicolon-separated name=v1,v2 lists, e.g. 'lam=1e-1,1e-2;kb=10,13'")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--cv-axis", choices=("subject", "time"), default="subject")
    p.add_argument("--seed", type=int, default=0)
    _add_hyper(p)
    p.add_argument("--out", help="CSV file for the CV table")

    p = sub.add_parser("reproduce", help="simulate a design and run the full comparison")
    p.add_argument("--design", type=int, required=True)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--jobs", type=int)
    _add_hyper(p)
    p.add_argument("--out", default="reproduce-out")

    p = sub.add_parser("bench", help="wall-clock scaling of FoS vs network fits in P")
    p.add_argument("--p-list", type=_csv_ints, default=(10, 20, 40, 80))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output (stdout if omitted)")
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _load(args) -> FunctionalDataset:
    path = Path(args.data)
    fmt = args.format
    if fmt is None:
        fmt = "long-csv" if path.is_dir() and (path / "observations.csv").exists() else "wide-csv"
    ds = load_dataset(path, fmt)
    if getattr(args, "standardize", False):
        ds = ds.standardized()
    return ds


def _fit_config(args, presets=None) -> FitConfig:
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from None
    merged = dict(presets or {})
    for key in HYPER_FLAGS:
        if key in file_cfg:
            merged[key] = file_cfg[key]
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if "lambda" in file_cfg and getattr(args, "lam", None) is None:
        merged["lam"] = file_cfg["lambda"]
    if "layers" in merged:
        merged["hidden"] = tuple(merged.pop("layers"))
    if "activation" in merged:
        merged["activation"] = merged["activation"]
    if merged.get("lam") and merged.get("penalty") is None:
        raise ConfigError("--lambda needs --penalty curvature|coeffdiff")
    if merged.get("penalty") and "lam" not in merged:
        merged["lam"] = 0.0
    seed = getattr(args, "seed", 0) or 0
    return FitConfig(seed=seed, **merged)


def _check_penalty(variant, cfg: FitConfig):
    if (cfg.penalty is not None or cfg.lam) and variant in ("nnbb", "nnss", "fos"):
        raise ConfigError(
            f"penalty flags are incompatible with variant {variant}: the curves are smoothed "
            "before training (use nnbr or nnsr)"
        )


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _read_matrix(path, expect_header=True):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FosnetError(f"{path} is empty")
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1
    try:
        return np.array([[float(c) for c in r] for r in rows[start:]], dtype=float)
    except ValueError as exc:
        raise FosnetError(f"{path}: non-numeric cell ({exc})") from None


def _dump_basis(path, basis, grid):
    from .bspline import deriv_matrix, eval_matrix

    obj = basis.to_json()
    obj["grid"] = list(map(float, grid))
    obj["eval_matrix"] = eval_matrix(basis, grid).tolist()
    obj["second_derivative_matrix"] = deriv_matrix(basis, grid, 2).tolist() if basis.order > 2 else None
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def _versions():
    import scipy

    try:
        import numba
        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    return {"fosnet": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba_version, "numba_enabled": USE_NUMBA}


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = SimConfig(design=args.design, N=args.n, K=args.k, m=args.m, noise_var=args.noise_var, seed=args.seed)
    ds, truth = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out / "data.csv")
    if args.long:
        save_dataset(ds, out / "long", "long-csv")
    _dump_json(out / "truth.json", truth_to_json(truth))
    print(f"wrote {ds.n_subjects} subjects x {ds.n_times} times to {out}")


def cmd_smooth(args):
    ds = _load(args)
    basis = make_basis((0.0, 1.0), args.kb, args.order)
    cf = fit_coefficients(ds, basis)
    _write_rows(args.out, ["subject_id"] + [f"c_{k + 1}" for k in range(basis.n_basis)],
                ([sid] + list(row) for sid, row in zip(ds.subject_ids, cf.coeffs)))
    if args.dump_basis:
        _dump_basis(args.dump_basis, basis, ds.grid)
    print(f"sse={cf.sse!r}")


def cmd_fpca(args):
    ds = _load(args)
    smoothing = None if ds.regular else make_basis((0.0, 1.0), args.kb, 4)
    model = fit_fpca(ds, args.tau, smoothing)
    xi = scores(model, ds, smoothing)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "mean.csv", ["time", "mean"], zip(ds.raw_grid, model.mean))
    _write_rows(out / "eigenvalues.csv", ["component", "eigenvalue"],
                ((k + 1, v) for k, v in enumerate(model.eigenvalues)))
    _write_rows(out / "eigenfunctions.csv", ["time"] + [f"phi_{k + 1}" for k in range(model.n_components)],
                ([t] + list(col) for t, col in zip(ds.raw_grid, model.eigenfunctions.T)))
    _write_rows(out / "scores.csv", ["subject_id"] + [f"xi_{k + 1}" for k in range(model.n_components)],
                ([sid] + list(row) for sid, row in zip(ds.subject_ids, xi)))
    print(f"K_tau={model.n_components}")


def cmd_train(args):
    cfg = _fit_config(args)
    _check_penalty(args.variant, cfg)
    ds = _load(args)
    model = fit(args.variant, ds, cfg)
    _dump_json(args.out, model.to_json())
    if args.trace and model.trace is not None:
        _write_rows(args.trace, ["epoch", "loss"], ((e + 1, v) for e, v in enumerate(model.trace)))
    if args.dump_basis and model.basis is not None:
        _dump_basis(args.dump_basis, model.basis, ds.grid)
    print(f"trained {args.variant} ({model.n_params} parameters) -> {args.out}")


def cmd_predict(args):
    try:
        model = TrainedRegressor.from_json(Path(args.model).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise FosnetError(f"cannot load model {args.model}: {exc}") from None
    X = _read_matrix(args.x)
    times_raw = _read_matrix(args.times).ravel()
    lo, hi = model.time_range
    times = (times_raw - lo) / (hi - lo)
    Y = predict(model, X, times)
    _write_rows(args.out, [f"t={t!r}" for t in times_raw.tolist()], Y.tolist())
    if args.coef_out:
        outs = model.outputs(X)
        prefix = "xi" if model.variant in ("nnss", "nnsr") else "c"
        _write_rows(args.coef_out,
                    [f"x{p + 1}" for p in range(X.shape[1])] + [f"{prefix}_{k + 1}" for k in range(outs.shape[1])],
                    (list(x) + list(o) for x, o in zip(X, outs)))
    print(f"wrote {Y.shape[0]} x {Y.shape[1]} predictions to {args.out}")


def _variants(text):
    vs = [v.strip().lower() for v in text.split(",") if v.strip()]
    bad = [v for v in vs if v not in VARIANTS]
    if bad or not vs:
        raise ConfigError(f"unknown variant(s) {bad}; choose from {', '.join(VARIANTS)}")
    return vs


def _write_reports(out, reports, extra=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(reports_to_csv(reports))
    (out / "summary.json").write_text(reports_to_summary(reports))
    (out / "table.txt").write_text(format_table(reports))


def _variant_configs(variants, base: FitConfig):
    configs = {}
    for v in variants:
        if v in ("nnbb", "nnss", "fos"):
            configs[v] = base.replace(penalty=None, lam=0.0)
        else:
            configs[v] = base
    return configs


def cmd_evaluate(args):
    variants = _variants(args.variants)
    base = _fit_config(args)
    configs = _variant_configs(variants, base)
    ds = _load(args)
    if args.tune_kb:
        grid = {"kb": list(args.tune_kb)}
        if args.share_basis:
            best, _ = grid_search_cv(ds, "fos", grid, 5, derive_seed(args.seed, "tune"), configs.get("fos", base))
            configs = {v: c.replace(kb=best.kb) for v, c in configs.items()}
        else:
            for v in variants:
                if v in ("nnss", "nnsr"):
                    continue
                best, _ = grid_search_cv(ds, v, grid, 5, derive_seed(args.seed, "tune", v), configs[v])
                configs[v] = best
    reports = repeated_holdout(ds, variants, configs, R=args.reps, seed=args.seed,
                               train_fraction=args.train_fraction, jobs=resolve_jobs(args.jobs))
    sys.stdout.write(format_table(reports))
    if args.out:
        _write_reports(args.out, reports)
        _dump_json(Path(args.out) / "manifest.json", {
            "run": asdict(RunConfig("evaluate", args.seed, data=args.data, out=args.out,
                                    fit={v: c.to_json() for v, c in configs.items()},
                                    extra={"reps": args.reps, "train_fraction": args.train_fraction})),
            "versions": _versions(),
        })
    return 1 if any(r.completed == 0 for r in reports.values()) else 0


def _parse_grid(text):
    grid = {}
    casts = {"kb": int, "order": int, "epochs": int, "batch": int, "Q": int, "tau": float, "lr": float,
             "lam": float, "activation": str, "optimizer": str, "penalty": str}
    for part in text.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise ConfigError(f"grid entry {part!r} must look like name=v1,v2")
        name, values = part.split("=", 1)
        name = name.strip()
        if name == "lambda":
            name = "lam"
        if name == "layers":
            grid["hidden"] = [tuple(int(x) for x in v.split("x")) for v in values.split(",")]
            continue
        if name not in casts:
            raise ConfigError(f"unknown grid parameter {name!r}")
        try:
            grid[name] = [casts[name](v.strip()) for v in values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad value in grid entry {part!r}") from None
    if not grid or any(not v for v in grid.values()):
        raise ConfigError("grid is empty")
    return grid


def cmd_cv(args):
    grid = _parse_grid(args.grid)
    base = _fit_config(args)
    _check_penalty(args.variant, base)
    if "lam" in grid and base.penalty is None:
        raise ConfigError("a lambda grid needs --penalty curvature|coeffdiff")
    ds = _load(args)
    best, table = grid_search_cv(ds, args.variant, grid, args.folds, args.seed, base, args.cv_axis)
    keys = list(grid)
    rows = [[repr(row["config"][k]) if not isinstance(row["config"][k], float) else row["config"][k] for k in keys]
            + [row["mean_msep"], row["n_params"], int(row["best"])] for row in table]
    if args.out:
        _write_rows(args.out, keys + ["mean_msep", "n_params", "best"], rows)
    for row in table:
        mark = "*" if row["best"] else " "
        print(f"{mark} {row['config']}  mean_msep={row['mean_msep']:.6g}")
    print("best:", json.dumps({k: getattr(best, k) for k in keys}, default=_json_default))


def cmd_reproduce(args):
    if args.design not in DESIGN_PRESETS:
        raise ConfigError(f"design must be 1, 2, 3 or 4, got {args.design}")
    variants = _variants(args.variants)
    presets = dict(REPRODUCE_TRAINING, **DESIGN_PRESETS[args.design])
    base = _fit_config(args, presets)
    configs = _variant_configs(variants, base)
    data_seed = derive_seed(args.seed, "data")
    sim = SimConfig(design=args.design, N=args.n, seed=data_seed)
    ds, _ = generate(sim)
    reports = repeated_holdout(ds, variants, configs, R=args.reps, seed=derive_seed(args.seed, "eval"),
                               jobs=resolve_jobs(args.jobs))
    sys.stdout.write(format_table(reports))
    _write_reports(args.out, reports)
    run = RunConfig("reproduce", args.seed,
                    fit={v: c.to_json() for v, c in configs.items()},
                    extra={"design": args.design, "reps": args.reps, "n": args.n,
                           "simulation": asdict(sim), "eval_seed": derive_seed(args.seed, "eval"),
                           "train_fraction": 0.8})
    # the output path is left out so that two runs compare byte for byte
    _dump_json(Path(args.out) / "manifest.json", {"run": asdict(run), "versions": _versions()})
    return 1 if any(r.completed == 0 for r in reports.values()) else 0


def cmd_bench(args):
    rng = np.random.default_rng(args.seed)
    rows = []
    grid = np.linspace(0, 1, 40)
    for P in args.p_list:
        X = rng.normal(size=(args.n, P))
        Y = X @ rng.normal(size=(P, 40)) + rng.normal(size=(args.n, 40))
        ds = FunctionalDataset(X, grid, Y, np.ones_like(Y))
        fit("fos", ds, FitConfig(kb=13))  # warm-up
        t0 = time.perf_counter()
        fit("fos", ds, FitConfig(kb=13))
        t_fos = time.perf_counter() - t0
        cfg = FitConfig(kb=13, epochs=args.epochs, seed=args.seed)
        fit("nnbb", ds, cfg.replace(epochs=1))  # warm-up
        t0 = time.perf_counter()
        fit("nnbb", ds, cfg)
        t_nn = time.perf_counter() - t0
        rows.append((P, t_fos, t_nn))
    header = ["p", "fos_seconds", "nn_seconds"]
    if args.out:
        _write_rows(args.out, header, rows)
    print(",".join(header))
    for P, a, b in rows:
        print(f"{P},{a:.6f},{b:.6f}")


COMMANDS = {
    "simulate": cmd_simulate,
    "smooth": cmd_smooth,
    "fpca": cmd_fpca,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "cv": cmd_cv,
    "reproduce": cmd_reproduce,
    "bench": cmd_bench,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args) or 0
    except ConfigError as exc:
        print(f"fosnet: error: {str(exc).splitlines()[0]}", file=sys.stderr)
        return 2
    except (FosnetError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"fosnet: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
