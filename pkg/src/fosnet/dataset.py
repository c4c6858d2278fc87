"""Scalar predictors paired with discretely observed curves.

Curves live on a shared *union grid*; a 0/1 mask marks which subject/time
pairs were actually observed, so regular and irregular designs share one
representation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = [
    "FunctionalDataset",
    "load_dataset",
    "save_dataset",
    "split",
    "subset",
    "to_json",
    "from_json",
]


def _freeze(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """Immutable container for ``N`` subjects observed on a common time axis.

    ``grid`` is rescaled to ``[0, 1]``; ``time_range`` keeps the original
    endpoints so files are written back in the caller's units.
    """

    predictors: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    subject_ids: tuple = ()
    predictor_names: tuple = ()
    time_range: tuple = (0.0, 1.0)
    raw_grid: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.predictors, dtype=float))
        grid = np.asarray(self.grid, dtype=float).ravel()
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        mask = np.atleast_2d(np.asarray(self.mask, dtype=float))
        n, m = values.shape
        if X.shape[0] != n:
            raise DataError(f"{X.shape[0]} predictor rows but {n} value rows")
        if grid.shape[0] != m or mask.shape != values.shape:
            raise DataError("grid, values and mask shapes disagree")
        if m == 0 or n == 0:
            raise DataError("dataset must contain at least one subject and one time point")
        if np.any(np.diff(grid) <= 0):
            raise DataError("grid must be strictly increasing without duplicates")
        if not np.all((mask == 0) | (mask == 1)):
            raise DataError("mask entries must be 0 or 1")
        empty = np.flatnonzero(mask.sum(axis=1) == 0)
        if empty.size:
            raise DataError(f"subject row {int(empty[0])} has no observations")
        if not np.all(np.isfinite(X)):
            raise DataError("predictors contain non-finite entries")
        if not np.all(np.isfinite(values[mask == 1])):
            raise DataError("observed values contain non-finite entries")
        # unobserved cells carry no meaning; store them as zero
        values = np.where(mask == 1, values, 0.0)

        ids = tuple(self.subject_ids) or tuple(str(i + 1) for i in range(n))
        if len(ids) != n:
            raise DataError("subject_ids length does not match number of subjects")
        names = tuple(self.predictor_names) or tuple(f"x{p + 1}" for p in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("predictor_names length does not match number of predictors")
        raw = grid if self.raw_grid is None else np.asarray(self.raw_grid, dtype=float)

        object.__setattr__(self, "predictors", _freeze(X))
        object.__setattr__(self, "grid", _freeze(grid))
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "mask", _freeze(mask))
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "predictor_names", names)
        object.__setattr__(self, "time_range", (float(self.time_range[0]), float(self.time_range[1])))
        object.__setattr__(self, "raw_grid", _freeze(raw))

    @property
    def regular(self) -> bool:
        return bool(np.all(self.mask == 1))

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.predictors.shape[1]

    @property
    def n_times(self) -> int:
        return self.grid.shape[0]

    @classmethod
    def from_raw_times(cls, predictors, times, values, mask=None, **kwargs):
        """Build a dataset from times in original units, rescaling them to [0, 1]."""
        times = np.asarray(times, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if mask is None:
            mask = np.ones_like(values)
        lo, hi = float(times[0]), float(times[-1])
        if times.size > 1 and hi > lo:
            grid = (times - lo) / (hi - lo)
            grid[0], grid[-1] = 0.0, 1.0
        else:
            grid = np.zeros_like(times)
            hi = lo + 1.0 if times.size == 1 else hi
        return cls(predictors, grid, values, mask, time_range=(lo, hi), raw_grid=times, **kwargs)

    def with_values(self, values, mask=None):
        """Copy with replaced values (and optionally mask); everything else shared."""
        return FunctionalDataset(
            self.predictors, self.grid, values, self.mask if mask is None else mask,
            subject_ids=self.subject_ids, predictor_names=self.predictor_names,
            time_range=self.time_range, raw_grid=self.raw_grid,
        )

    def standardized(self, center=None, scale=None):
        """Predictor columns centred and scaled (sample statistics by default)."""
        X = self.predictors
        center = X.mean(axis=0) if center is None else np.asarray(center)
        if scale is None:
            scale = X.std(axis=0)
            scale = np.where(scale > 0, scale, 1.0)
        return FunctionalDataset(
            (X - center) / scale, self.grid, self.values, self.mask,
            subject_ids=self.subject_ids, predictor_names=self.predictor_names,
            time_range=self.time_range, raw_grid=self.raw_grid,
        )


def subset(ds: FunctionalDataset, rows) -> FunctionalDataset:
    """Rows ``rows`` of ``ds`` on the parent grid."""
    rows = np.asarray(rows, dtype=int)
    return FunctionalDataset(
        ds.predictors[rows], ds.grid, ds.values[rows], ds.mask[rows],
        subject_ids=tuple(ds.subject_ids[i] for i in rows),
        predictor_names=ds.predictor_names,
        time_range=ds.time_range, raw_grid=ds.raw_grid,
    )


def split_indices(n: int, train_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise DataError(f"cannot split a dataset with {n} subject(s)")
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(math.floor(n * train_fraction + 1e-9))
    n_train = min(max(n_train, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(ds: FunctionalDataset, train_fraction: float = 0.8, seed=0):
    """Seeded random partition of subjects into (train, test)."""
    train_idx, test_idx = split_indices(ds.n_subjects, train_fraction, seed)
    return subset(ds, train_idx), subset(ds, test_idx)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _parse_float(cell, where):
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} at {where}") from None


def _fmt(x):
    return repr(float(x))


def _read_wide(path: Path) -> FunctionalDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    time_cols = [i for i, h in enumerate(header) if h.startswith("t=")]
    if not time_cols:
        raise DataError(f"{path}: header has no 't=<value>' columns")
    first = time_cols[0]
    if time_cols != list(range(first, len(header))):
        raise DataError(f"{path}: time columns must follow all predictor columns")
    names = header[:first]
    times = np.array([_parse_float(h[2:], f"header column {i + 1}") for i, h in enumerate(header) if i >= first])
    X, Z, M = [], [], []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        X.append([_parse_float(c, f"row {r}, column {j + 1}") for j, c in enumerate(row[:first])])
        z, mk = [], []
        for j, c in enumerate(row[first:], start=first + 1):
            if c.strip() == "":
                z.append(0.0)
                mk.append(0.0)
            else:
                z.append(_parse_float(c, f"row {r}, column {j}"))
                mk.append(1.0)
        Z.append(z)
        M.append(mk)
    X = np.array(X, dtype=float).reshape(len(Z), len(names))
    return FunctionalDataset.from_raw_times(X, times, np.array(Z), np.array(M), predictor_names=tuple(names))


def _read_long(path: Path) -> FunctionalDataset:
    pred_file, obs_file = path / "predictors.csv", path / "observations.csv"
    for f in (pred_file, obs_file):
        if not f.exists():
            raise DataError(f"missing {f}")
    with open(pred_file, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = [h.strip() for h in rows[0][1:]]
    ids, X = [], []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        sid = row[0].strip()
        if sid in ids:
            raise DataError(f"{pred_file}: duplicate subject {sid!r} at row {r}")
        ids.append(sid)
        X.append([_parse_float(c, f"{pred_file.name} row {r}, column {j + 2}") for j, c in enumerate(row[1:])])
    index = {sid: i for i, sid in enumerate(ids)}

    obs = {}
    with open(obs_file, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{obs_file}: row {r} must be subject_id,time,value")
            sid = row[0].strip()
            if sid not in index:
                raise DataError(f"{obs_file}: row {r} subject {sid!r} has no predictor row")
            t = _parse_float(row[1], f"{obs_file.name} row {r}, column 2")
            v = _parse_float(row[2], f"{obs_file.name} row {r}, column 3")
            if (sid, t) in obs:
                raise DataError(f"{obs_file}: duplicate observation (subject {sid!r}, time {row[1]}) at row {r}")
            obs[(sid, t)] = v
    times = np.array(sorted({t for _, t in obs}))
    col = {t: j for j, t in enumerate(times)}
    Z = np.zeros((len(ids), times.size))
    M = np.zeros_like(Z)
    for (sid, t), v in obs.items():
        Z[index[sid], col[t]] = v
        M[index[sid], col[t]] = 1.0
    return FunctionalDataset.from_raw_times(
        np.array(X, dtype=float).reshape(len(ids), len(names)), times, Z, M,
        subject_ids=tuple(ids), predictor_names=tuple(names),
    )


def load_dataset(path, format: str = "wide-csv") -> FunctionalDataset:
    """Read a dataset.

    ``wide-csv``: one file, header ``x1,...,xP,t=<v1>,...,t=<vm>``, empty
    cells are unobserved. ``long-csv``: a directory holding ``predictors.csv``
    and ``observations.csv``.
    """
    path = Path(path)
    if format == "wide-csv":
        if path.is_dir():
            path = path / "data.csv"
        if not path.exists():
            raise DataError(f"no such file: {path}")
        return _read_wide(path)
    if format == "long-csv":
        return _read_long(path)
    raise DataError(f"unknown format {format!r}")


def save_dataset(ds: FunctionalDataset, path, format: str = "wide-csv") -> None:
    path = Path(path)
    if format == "wide-csv":
        if path.is_dir():
            path = path / "data.csv"
        header = list(ds.predictor_names) + [f"t={_fmt(t)}" for t in ds.raw_grid]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(ds.n_subjects):
                vals = [_fmt(v) if ds.mask[i, j] else "" for j, v in enumerate(ds.values[i])]
                w.writerow([_fmt(x) for x in ds.predictors[i]] + vals)
    elif format == "long-csv":
        path.mkdir(parents=True, exist_ok=True)
        with open(path / "predictors.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id"] + list(ds.predictor_names))
            for sid, row in zip(ds.subject_ids, ds.predictors):
                w.writerow([sid] + [_fmt(x) for x in row])
        with open(path / "observations.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", "time", "value"])
            for i, sid in enumerate(ds.subject_ids):
                for j in np.flatnonzero(ds.mask[i]):
                    w.writerow([sid, _fmt(ds.raw_grid[j]), _fmt(ds.values[i, j])])
    else:
        raise DataError(f"unknown format {format!r}")


def to_json(ds: FunctionalDataset) -> dict:
    return {
        "predictors": ds.predictors.tolist(),
        "grid": ds.grid.tolist(),
        "values": ds.values.tolist(),
        "mask": ds.mask.astype(int).tolist(),
        "regular": ds.regular,
        "subject_ids": list(ds.subject_ids),
        "predictor_names": list(ds.predictor_names),
        "time_range": list(ds.time_range),
        "raw_grid": ds.raw_grid.tolist(),
    }


def from_json(obj) -> FunctionalDataset:
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    return FunctionalDataset(
        obj["predictors"], obj["grid"], obj["values"], obj["mask"],
        subject_ids=tuple(obj.get("subject_ids", ())),
        predictor_names=tuple(obj.get("predictor_names", ())),
        time_range=tuple(obj.get("time_range", (0.0, 1.0))),
        raw_grid=obj.get("raw_grid"),
    )
