"""Text output: time series, snapshots, gnuplot rasters and key = value reports.

Every float is written with 17 significant digits so files round-trip
double precision exactly.
"""
from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np

from .config import fmt_float
from .dynamics import Snapshot
from .errors import ConfigError, SimulationError
from .grid import SpectralGrid
from .tracking import TrajectoryRecord

SNAPSHOT_COLUMNS = ("x", "re_psi", "im_psi", "density", "ftrans_image_sq", "b_sq")
TIMESERIES_COLUMNS = ("t", "peak_position", "width", "center", "norm")


def _row(values) -> str:
    return ",".join(fmt_float(v) for v in values)


def write_timeseries(path: Path, record: TrajectoryRecord) -> None:
    centers = record.centers if record.centers is not None else np.full(len(record), np.nan)
    with open(path, "w") as fh:
        fh.write("# intensity_kind = " + record.intensity_kind + "\n")
        fh.write(",".join(TIMESERIES_COLUMNS) + "\n")
        for row in zip(record.times, record.peak_positions, record.widths, centers, record.norms):
            fh.write(_row(row) + "\n")


def read_timeseries(path: Path) -> TrajectoryRecord:
    kind = None
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("# intensity_kind"):
            kind = first.split("=", 1)[1].strip()
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
    t, pos, width, center, norm = data.T
    return TrajectoryRecord(t, pos, width, norm, kind or "backward_at_BEC", center)


def write_snapshot(path: Path, snap: Snapshot, grid: SpectralGrid) -> None:
    cols = np.column_stack([grid.x_values, snap.psi.real, snap.psi.imag, snap.density,
                            snap.image_intensity, snap.backward_intensity])
    with open(path, "w") as fh:
        fh.write(f"# step = {snap.step}\n# t = {fmt_float(snap.t)}\n")
        fh.write("# " + " ".join(SNAPSHOT_COLUMNS) + "\n")
        for row in cols:
            fh.write(" ".join(fmt_float(v) for v in row) + "\n")


def read_snapshot(path: str | Path, grid: SpectralGrid) -> np.ndarray:
    """Wavefunction stored in a snapshot file (columns 2 and 3)."""
    try:
        data = np.loadtxt(path, comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"seed.path: cannot read snapshot {path}: {exc}") from None
    if data.shape[0] != grid.n_points or data.shape[1] < 3:
        raise ConfigError(f"seed.path: snapshot has {data.shape[0]} rows, grid has {grid.n_points}")
    return data[:, 1] + 1j * data[:, 2]


class SnapshotWriter:
    """Sink that writes each snapshot as it is produced, plus an index file."""

    def __init__(self, directory: Path, grid: SpectralGrid):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.grid = grid
        self.count = 0
        self._index = open(self.directory / "index.csv", "w")
        self._index.write("index,step,t,file\n")

    def __call__(self, snap: Snapshot) -> None:
        name = f"snap_{self.count:05d}.dat"
        write_snapshot(self.directory / name, snap, self.grid)
        self._index.write(f"{self.count},{snap.step},{fmt_float(snap.t)},{name}\n")
        self._index.flush()
        self.count += 1

    def close(self) -> None:
        self._index.close()


def write_report(path: Path, items: dict, header: str | None = None) -> None:
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for key, value in items.items():
            if isinstance(value, tuple) and len(value) == 2 and isinstance(value[1], str):
                value, note = value
                fh.write(f"{key} = {_value(value)}  # {note}\n")
            else:
                fh.write(f"{key} = {_value(value)}\n")


def _value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return fmt_float(value) if math.isfinite(value) else str(float(value))
    if isinstance(value, (list, tuple)):
        return "; ".join(str(v) for v in value)
    return str(value)


def emit_plot_data(directory: Path, snapshots: list[Snapshot], grid: SpectralGrid,
                   record: TrajectoryRecord | None = None, estimate=None) -> list[Path]:
    """Write gnuplot-ready rasters and, with an estimate, the position-vs-t^2 file."""
    directory = Path(directory)
    if not snapshots and record is None:
        raise SimulationError("no run artifacts to plot")
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if snapshots:
        for name, getter in (("density_raster.dat", lambda s: s.density),
                             ("intensity_raster.dat", lambda s: s.image_intensity),
                             ("backward_raster.dat", lambda s: s.backward_intensity)):
            path = directory / name
            with open(path, "w") as fh:
                fh.write("# x t value  (blocks separated by blank lines; gnuplot pm3d)\n")
                for snap in snapshots:
                    values = getter(snap)
                    for xv, val in zip(grid.x_values, values):
                        fh.write(f"{fmt_float(xv)} {fmt_float(snap.t)} {fmt_float(val)}\n")
                    fh.write("\n")
            written.append(path)
    if record is not None and estimate is not None:
        path = directory / "trajectory_t2.dat"
        t = record.times
        fitted = estimate.offset + estimate.velocity_term * t + estimate.gradient * 2 * np.pi * t**2
        with open(path, "w") as fh:
            fh.write(f"# gradient = {fmt_float(estimate.gradient)}\n")
            fh.write(f"# a_bar_hat = {fmt_float(estimate.a_bar_hat)}\n")
            fh.write("# t^2 x_max/Lambda_c fitted/Lambda_c\n")
            for ti, xi, fi in zip(t, record.peak_positions, fitted):
                fh.write(f"{fmt_float(ti**2)} {fmt_float(xi / (2 * np.pi))} {fmt_float(fi / (2 * np.pi))}\n")
        written.append(path)
    return written


class OutputLock:
    """Exclusive claim on an output directory for the lifetime of one run."""

    def __init__(self, directory: Path):
        self.path = Path(directory) / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            if not self._stale():
                raise ConfigError(f"output_dir {self.path.parent} is in use by another run") from None
            self.path.unlink()
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip())
            os.kill(pid, 0)
        except (ValueError, ProcessLookupError):
            return True
        except PermissionError:
            return False
        return pid == os.getpid()
