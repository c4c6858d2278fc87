"""Prediction error, repeated random subsampling, k-fold grid search, paired t-tests."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._tdist import t_two_sided_p
from .dataset import FunctionalDataset, split_indices, subset
from .errors import ConfigError, DataError, FosnetError
from .regressors import FitConfig, fit, predict

__all__ = [
    "EvalReport",
    "msep",
    "paired_t_test",
    "repeated_holdout",
    "grid_search_cv",
    "derive_seed",
    "reports_to_csv",
    "reports_to_summary",
    "resolve_jobs",
]

log = logging.getLogger(__name__)


def derive_seed(root: int, *keys) -> int:
    """Stable 32-bit seed for the named substream ``keys`` of ``root``."""
    words = [int(root) & 0xFFFFFFFF] + [zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint32)[0])


def resolve_jobs(jobs: int | None = None) -> int:
    env = os.environ.get("FOSNET_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"FOSNET_JOBS must be an integer, got {env!r}") from None
    if jobs is None:
        return os.cpu_count() or 1
    return max(1, int(jobs))


def msep(pred, ds: FunctionalDataset, mask=None) -> float:
    """Σ mask (Z − pred)² / Σ mask."""
    pred = np.asarray(pred, dtype=float)
    if pred.shape != ds.values.shape:
        raise DataError(f"prediction shape {pred.shape} does not match data {ds.values.shape}")
    mask = ds.mask if mask is None else mask
    R = mask * (ds.values - pred)
    return float(np.sum(R * R) / np.sum(mask))


def paired_t_test(a, b):
    """Two-sided paired t-test of ``a`` against ``b``.

    Returns ``(t, p, flag)``. Zero-variance differences are handled explicitly:
    all-zero differences give ``(nan, 1.0, "zero-variance")``; constant nonzero
    differences give ``(±inf, 0.0, "infinite-t")``.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    r = d.size
    if r < 2:
        raise ConfigError("a paired t-test needs at least 2 replicates")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    scale = max(float(np.max(np.abs(d))), 1e-300)
    if sd <= 1e-14 * scale or sd == 0.0:
        if abs(mean) <= 1e-14 * scale or mean == 0.0:
            return float("nan"), 1.0, "zero-variance"
        return math.copysign(math.inf, mean), 0.0, "infinite-t"
    t = mean / (sd / math.sqrt(r))
    p = t_two_sided_p(t, r - 1)
    flag = None
    if p < 1e-12:
        p, flag = 0.0, "p<1e-12"
    return float(t), float(min(max(p, 0.0), 1.0)), flag


@dataclass
class EvalReport:
    variant: str
    per_rep_msep: list
    replicates: list = field(default_factory=list)
    t_stat: float | None = None
    p_value: float | None = None
    flag: str | None = None
    requested: int = 0
    errors: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_rep_msep)) if self.per_rep_msep else float("nan")

    @property
    def sd(self) -> float:
        return float(np.std(self.per_rep_msep, ddof=1)) if len(self.per_rep_msep) > 1 else 0.0

    @property
    def completed(self) -> int:
        return len(self.per_rep_msep)

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "mean": self.mean,
            "sd": self.sd,
            "t_stat": self.t_stat,
            "p_value": self.p_value,
            "flag": self.flag,
            "completed": self.completed,
            "requested": self.requested,
            "per_rep_msep": list(self.per_rep_msep),
            "errors": list(self.errors),
        }


def _config_for(config, variant) -> FitConfig:
    if isinstance(config, dict):
        return config.get(variant) or config.get("default") or FitConfig()
    return config or FitConfig()


def _run_replicate(args):
    ds, variants, config, rep, seed, train_fraction = args
    train_idx, test_idx = split_indices(ds.n_subjects, train_fraction, derive_seed(seed, "split", rep))
    train, test = subset(ds, train_idx), subset(ds, test_idx)
    out = {}
    for v in variants:
        cfg = _config_for(config, v).replace(seed=derive_seed(seed, "init", rep) % (2**31))
        try:
            model = fit(v, train, cfg)
            out[v] = msep(predict(model, test.predictors, test.grid), test)
        except (FosnetError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            return rep, None, f"replicate {rep}: {v} failed: {exc}"
    return rep, out, None


def repeated_holdout(ds: FunctionalDataset, variants, config=None, R: int = 20, seed: int = 0,
                     train_fraction: float = 0.8, baseline: str = "fos", jobs: int = 1):
    """Train every variant on ``R`` seeded random splits; returns ``{variant: EvalReport}``.

    ``config`` is a FitConfig or a ``{variant: FitConfig}`` mapping. A failing fit
    drops its whole replicate (pairing is preserved) and is recorded in ``errors``.
    """
    variants = [v.lower() for v in variants]
    if R < 1:
        raise ConfigError("need at least one replicate")
    tasks = [(ds, variants, config, r, seed, train_fraction) for r in range(R)]
    if jobs > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, R)) as pool:
            results = list(pool.map(_run_replicate, tasks))
    else:
        results = [_run_replicate(t) for t in tasks]
    results.sort(key=lambda item: item[0])

    reports = {v: EvalReport(v, [], requested=R) for v in variants}
    errors = []
    for rep, out, err in results:
        if err is not None:
            errors.append(err)
            log.warning(err)
            continue
        for v in variants:
            reports[v].per_rep_msep.append(out[v])
            reports[v].replicates.append(rep)
    for rpt in reports.values():
        rpt.errors = list(errors)
    if baseline in reports:
        base = reports[baseline].per_rep_msep
        for v, rpt in reports.items():
            if v == baseline or len(base) < 2:
                continue
            rpt.t_stat, rpt.p_value, rpt.flag = paired_t_test(rpt.per_rep_msep, base)
    return reports


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

def _lattice(grid):
    if isinstance(grid, dict):
        if not grid or any(len(v) == 0 for v in grid.values()):
            raise ConfigError("grid is empty")
        keys = list(grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    points = [dict(p) for p in grid]
    if not points:
        raise ConfigError("grid is empty")
    return points


def _sort_key(point):
    return tuple((k, repr(point[k])) for k in sorted(point))


def fold_assignment(n: int, folds: int, seed) -> list:
    """Seeded partition of ``range(n)`` into ``folds`` nearly equal index arrays."""
    if folds < 2:
        raise ConfigError("cross-validation needs at least 2 folds")
    if n < folds:
        raise ConfigError(f"cannot make {folds} folds from {n} items")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def grid_search_cv(train: FunctionalDataset, variant: str, grid, folds: int = 5, seed: int = 0,
                   base_config: FitConfig | None = None, cv_axis: str = "subject"):
    """K-fold grid search. Returns ``(best FitConfig, table)``.

    ``cv_axis="subject"`` holds out subjects; ``cv_axis="time"`` holds out a
    fifth (1/folds) of the grid columns per fold, all subjects kept, as used for
    tuning the roughness penalty. Ties on mean validation MSEP go to the model
    with fewer parameters, then to the lexicographically smaller config.
    """
    base_config = base_config or FitConfig()
    points = _lattice(grid)
    if cv_axis == "subject":
        parts = fold_assignment(train.n_subjects, folds, derive_seed(seed, "folds"))
    elif cv_axis == "time":
        parts = fold_assignment(train.n_times, folds, derive_seed(seed, "folds"))
    else:
        raise ConfigError(f"cv_axis must be 'subject' or 'time', got {cv_axis!r}")

    table = []
    for point in points:
        cfg = base_config.replace(**point)
        scores, n_params = [], None
        for k, held in enumerate(parts):
            cfg_k = cfg.replace(seed=derive_seed(seed, "fold-init", k) % (2**31))
            if cv_axis == "subject":
                keep = np.setdiff1d(np.arange(train.n_subjects), held)
                fold_train, fold_val = subset(train, keep), subset(train, held)
                model = fit(variant, fold_train, cfg_k)
                pred = predict(model, fold_val.predictors, fold_val.grid)
                scores.append(msep(pred, fold_val))
            else:
                col_mask = np.ones(train.n_times)
                col_mask[held] = 0.0
                train_mask = train.mask * col_mask
                model = fit(variant, train.with_values(train.values, train_mask), cfg_k)
                pred = predict(model, train.predictors, train.grid)
                val_mask = train.mask * (1.0 - col_mask)
                scores.append(msep(pred, train, mask=val_mask))
            n_params = model.n_params
        table.append({"config": dict(point), "mean_msep": float(np.mean(scores)),
                      "fold_msep": [float(s) for s in scores], "n_params": int(n_params)})

    best = min(table, key=lambda row: (row["mean_msep"], row["n_params"], _sort_key(row["config"])))
    for row in table:
        row["best"] = row is best
    return base_config.replace(**best["config"]), table


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------

def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "rep", "msep"])
    for v, rpt in reports.items():
        for rep, value in zip(rpt.replicates, rpt.per_rep_msep):
            w.writerow([v, rep, repr(float(value))])
    return buf.getvalue()


def reports_to_summary(reports) -> str:
    return json.dumps({v: rpt.to_json() for v, rpt in reports.items()}, indent=2, sort_keys=True) + "\n"


def format_table(reports) -> str:
    """Plain-text table: one column per variant with mean, sd and p-value rows."""
    names = list(reports)
    width = max(10, *(len(n) + 2 for n in names))
    head = "Methods".ljust(12) + "".join(n.upper().rjust(width) for n in names)
    rows = [head]
    rows.append("Mean".ljust(12) + "".join(f"{reports[n].mean:{width}.4g}" for n in names))
    rows.append("Std. Dev.".ljust(12) + "".join(f"{reports[n].sd:{width}.4g}" for n in names))
    cells = []
    for n in names:
        p = reports[n].p_value
        cells.append("-".rjust(width) if p is None else f"{p:{width}.3g}")
    rows.append("p-value".ljust(12) + "".join(cells))
    return "\n".join(rows) + "\n"
