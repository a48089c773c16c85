"""Run artifacts: field snapshots, index, CSV tables, JSON summary and plot columns.

Snapshots use the ``.npy`` format, which already is a self-describing
header (shape, dtype ``<f8``, C order) followed by the raw little-endian
row-major values.  ``index.txt`` lists them one per line as
``field step time path``.
"""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

from .errors import CHControlError

SNAPSHOT_DTYPE = np.dtype("<f8")


class ArtifactError(CHControlError, FileNotFoundError):
    """A run directory lacks the files an operation needs."""


def write_snapshot(path, values) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(values, dtype=SNAPSHOT_DTYPE)
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, arr, allow_pickle=False)
    return path


def read_snapshot(path) -> np.ndarray:
    with open(path, "rb") as fh:
        arr = np.lib.format.read_array(fh, allow_pickle=False)
    if arr.dtype != SNAPSHOT_DTYPE:
        raise ArtifactError(f"{path}: expected dtype {SNAPSHOT_DTYPE.str}, found {arr.dtype.str}")
    return arr


def write_series(run_dir, name: str, series, times, stride: int = 1, index: list | None = None) -> list:
    """Store every ``stride``-th slice (and always the last) of a space-time field."""
    run_dir = Path(run_dir)
    index = [] if index is None else index
    steps = len(series) - 1
    keep = sorted(set(range(0, steps + 1, stride)) | {steps})
    for k in keep:
        rel = Path("snapshots") / f"{name}_{k:06d}.npy"
        write_snapshot(run_dir / rel, series[k])
        index.append((name, k, float(times[k]), rel.as_posix()))
    return index


def write_index(run_dir, index) -> Path:
    path = Path(run_dir) / "index.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# field step time path\n")
        for name, k, t, rel in index:
            fh.write(f"{name} {k} {t!r} {rel}\n")
    return path


def read_index(run_dir) -> list[tuple[str, int, float, str]]:
    path = Path(run_dir) / "index.txt"
    if not path.is_file():
        raise ArtifactError(f"no snapshot index in {run_dir}")
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        name, k, t, rel = line.split()
        rows.append((name, int(k), float(t), rel))
    return rows


def read_series(run_dir, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Reload all stored slices of ``name``; returns ``(steps, stacked values)``."""
    rows = [r for r in read_index(run_dir) if r[0] == name]
    if not rows:
        raise ArtifactError(f"no snapshots of {name!r} in {run_dir}")
    steps = np.array([r[1] for r in rows])
    return steps, np.stack([read_snapshot(Path(run_dir) / r[3]) for r in rows])


def write_csv(path, rows: list[dict]) -> Path:
    path = Path(path)
    if not rows:
        raise ValueError("nothing to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def versions() -> dict:
    import scipy

    from . import __version__

    return {
        "chcontrol": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def write_summary(run_dir, summary: dict) -> Path:
    from .verification import _json_safe

    path = Path(run_dir) / "summary.json"
    payload = {"versions": versions(), **summary}
    path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


# -- plot data ---------------------------------------------------------------


def _write_columns(path: Path, header: str, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n")
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n" if row is not None else "\n")


def emit_plot_data(run_dir) -> list[Path]:
    """Write gnuplot-ready column files into ``run_dir/plot``.

    One file per stored snapshot (``x value`` in 1D, ``x y value`` blocks in
    2D), ``timeseries.dat`` from the time-series CSV and ``convergence.dat``
    from an optimization trace.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ArtifactError(f"{run_dir} is not a directory")
    meta_path = run_dir / "summary.json"
    out = run_dir / "plot"
    written: list[Path] = []
    index = read_index(run_dir) if (run_dir / "index.txt").is_file() else []
    has_trace = (run_dir / "trace.csv").is_file()
    has_series = (run_dir / "timeseries.csv").is_file()
    if not (index or has_trace or has_series):
        raise ArtifactError(f"no run artifacts found in {run_dir}")
    out.mkdir(exist_ok=True)

    grid_info = json.loads(meta_path.read_text())["grid"] if meta_path.is_file() else None
    for name, k, t, rel in index:
        values = read_snapshot(run_dir / rel)
        lengths = grid_info["lengths"] if grid_info else [1.0] * values.ndim
        centers = [(np.arange(m) + 0.5) * (L / m) for m, L in zip(values.shape, lengths)]
        path = out / f"{name}_{k:06d}.dat"
        if values.ndim == 1:
            _write_columns(path, f"{name} t={t!r}: x value", zip(centers[0], values))
        else:
            rows = []
            for i, xi in enumerate(centers[0]):
                rows.extend((xi, yj, values[i, j]) for j, yj in enumerate(centers[1]))
                rows.append(None)  # blank line between scan rows for splot
            _write_columns(path, f"{name} t={t!r}: x y value", rows)
        written.append(path)
    if has_series:
        table = read_csv(run_dir / "timeseries.csv")
        cols = list(table[0])
        path = out / "timeseries.dat"
        _write_columns(path, " ".join(cols), ([float(r[c]) for c in cols] for r in table))
        written.append(path)
    if has_trace:
        table = read_csv(run_dir / "trace.csv")
        cols = ["iter", "cost", "stationarity", "step"]
        path = out / "convergence.dat"
        _write_columns(path, " ".join(cols), ([float(r[c]) for c in cols] for r in table))
        written.append(path)
    return written
