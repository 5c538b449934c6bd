"""Plain-text file formats used by the command line tools.

Matrices are CSV with rows = features and columns = samples: the header
row holds the sample ids, the first column the feature ids.  Floats are
written with ``repr`` so they round-trip exactly.
"""
import csv
import json
from pathlib import Path

import numpy as np

from .datamodel import DataMatrix
from .exceptions import DataError

__all__ = [
    "read_matrix_csv",
    "write_matrix_csv",
    "read_labels_csv",
    "write_labels_csv",
    "read_folds",
    "write_folds",
    "write_json",
    "read_json",
]


def _fmt(a):
    return repr(float(a))


def write_matrix_csv(path, values, feature_ids=None, sample_ids=None, prefix="f"):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[None, :]
    p, n = values.shape
    feature_ids = feature_ids or [f"{prefix}{i}" for i in range(p)]
    sample_ids = sample_ids or [f"s{j}" for j in range(n)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["feature_id", *sample_ids]) + "\n")
        for fid, row in zip(feature_ids, values):
            fh.write(",".join([str(fid), *map(_fmt, row)]) + "\n")


def read_matrix_csv(path):
    """Parse a features x samples CSV into a :class:`DataMatrix` (not centered)."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except FileNotFoundError as exc:
        raise DataError(f"matrix file not found: {path}") from exc
    if len(rows) < 2:
        raise DataError(f"{path}: need a header and at least one feature row")
    sample_ids = rows[0][1:]
    feature_ids, data = [], []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(sample_ids) + 1:
            raise DataError(f"{path}:{lineno}: expected {len(sample_ids) + 1} fields, got {len(row)}")
        try:
            data.append([float(t) for t in row[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        feature_ids.append(row[0])
    values = np.array(data, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite entries")
    try:
        return DataMatrix(values, feature_ids=tuple(feature_ids), sample_ids=tuple(sample_ids))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_labels_csv(path, sample_ids, event, time):
    with open(path, "w", newline="") as fh:
        fh.write("sample_id,event,time\n")
        for sid, e, t in zip(sample_ids, event, time):
            fh.write(f"{sid},{int(bool(e))},{_fmt(t)}\n")


def read_labels_csv(path):
    """Read ``sample_id,event,time`` rows; returns ``(ids, event, time)``."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise DataError(f"label file not found: {path}") from exc
    try:
        ids = [r["sample_id"] for r in rows]
        event = np.array([int(r["event"]) for r in rows], dtype=bool)
        time = np.array([float(r["time"]) for r in rows])
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed label row ({exc})") from exc
    if np.any(~np.isfinite(time)) or np.any(time <= 0):
        raise DataError(f"{path}: survival times must be positive")
    return ids, event, time


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def write_folds(path, folds):
    write_json(path, {"folds": [{"train": [int(i) for i in tr], "val": [int(i) for i in va],
                                 "test": [int(i) for i in te]} for tr, va, te in folds]})


def read_folds(path, n_samples=None):
    obj = read_json(path)
    try:
        folds = [(np.array(f["train"], dtype=int), np.array(f["val"], dtype=int),
                  np.array(f["test"], dtype=int)) for f in obj["folds"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed folds ({exc})") from exc
    if n_samples is not None:
        for tr, va, te in folds:
            idx = np.concatenate([tr, va, te])
            if idx.size and (idx.min() < 0 or idx.max() >= n_samples):
                raise DataError(f"{path}: fold index outside 0..{n_samples - 1}")
    return folds
