"""CSV emission and parsing for trajectory logs.

Floats are written with 17 significant digits so that reading a file back
reproduces every value bit for bit.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .simulation import TrajectoryLog

FLOAT_FMT = "%.17g"


def _write(path: Path, header: list[str], data: np.ndarray):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in data:
            writer.writerow([FLOAT_FMT % v for v in row])


def _read(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def write_trajectory(log: TrajectoryLog, path) -> Path:
    path = Path(path)
    _write(path, log.columns, log.data)
    return path


def read_trajectory(path, n: int, m: int, N: int) -> TrajectoryLog:
    header, data = _read(Path(path))
    expected = TrajectoryLog.column_names(n, m, N)
    if header != expected:
        raise ValueError(f"{path}: unexpected header {header[:4]}...")
    return TrajectoryLog.from_array(n, m, N, data)


def write_weights(log: TrajectoryLog, path) -> Path:
    path = Path(path)
    header = ["t"] + [f"W_{i}" for i in range(1, log.N + 1)]
    _write(path, header, np.column_stack((log.t, log.W)) if len(log) else np.zeros((0, log.N + 1)))
    return path


def comparison_table(logs: dict[str, TrajectoryLog], bounds_of) -> tuple[list[str], np.ndarray]:
    """Joint margins table for runs sharing one time grid.

    ``bounds_of(t)`` returns the envelope ``alpha_i rho_i(t)``. Runs that
    stopped early are padded with NaN.
    """
    longest = max(logs.values(), key=len)
    t = longest.t
    n = longest.n
    header = ["t"] + [f"bound_{i}" for i in range(1, n + 1)]
    cols = [t[:, None], np.array([bounds_of(tk) for tk in t]).reshape(len(t), n)]
    for label, log in logs.items():
        k = len(log)
        pad = np.full((len(t), 3 * n), np.nan)
        if k:
            if not np.array_equal(log.t, t[:k]):
                raise ValueError(f"run {label!r} is not on the common time grid")
            m = log.margins
            pad[:k, :n] = log.e
            pad[:k, n:2 * n] = m
            pad[:k, 2 * n:] = (m >= 1.0).astype(float)
        header += ([f"{label}_e_{i}" for i in range(1, n + 1)]
                   + [f"{label}_margin_{i}" for i in range(1, n + 1)]
                   + [f"{label}_violated_{i}" for i in range(1, n + 1)])
        cols.append(pad)
    return header, np.hstack(cols)


def write_comparison(logs: dict[str, TrajectoryLog], bounds_of, path) -> Path:
    path = Path(path)
    header, data = comparison_table(logs, bounds_of)
    _write(path, header, data)
    return path


def read_table(path) -> tuple[list[str], np.ndarray]:
    return _read(Path(path))
