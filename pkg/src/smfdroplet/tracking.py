"""Sub-grid location of the optical intensity extremum that marks the droplet."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrackingError
from .grid import SpectralGrid

BACKWARD_AT_BEC = "backward_at_BEC"
IMAGE_PLANE_FORWARD = "image_plane_forward"
INTENSITY_KINDS = (BACKWARD_AT_BEC, IMAGE_PLANE_FORWARD)

# Consecutive samples further apart than half a critical wavelength cannot be
# attributed to the same extremum.
MAX_JUMP = np.pi
AMBIGUITY = 0.1


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    peak_positions: np.ndarray
    widths: np.ndarray
    norms: np.ndarray
    intensity_kind: str = BACKWARD_AT_BEC
    centers: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.intensity_kind not in INTENSITY_KINDS:
            raise ValueError(f"unknown intensity_kind {self.intensity_kind!r}")
        self.times = np.asarray(self.times, dtype=float)
        self.peak_positions = np.asarray(self.peak_positions, dtype=float)
        self.widths = np.asarray(self.widths, dtype=float)
        self.norms = np.asarray(self.norms, dtype=float)
        if self.centers is not None:
            self.centers = np.asarray(self.centers, dtype=float)

    def __len__(self):
        return len(self.times)

    def truncated(self, n: int) -> "TrajectoryRecord":
        c = None if self.centers is None else self.centers[:n]
        return TrajectoryRecord(self.times[:n], self.peak_positions[:n], self.widths[:n],
                                self.norms[:n], self.intensity_kind, c, list(self.notes))

    def problems(self) -> list[str]:
        """Violations of the record invariants (empty when the record is usable)."""
        out = []
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            out.append("times are not strictly increasing")
        pos = self.peak_positions
        if np.any(~np.isfinite(pos)):
            out.append(f"{np.count_nonzero(~np.isfinite(pos))} snapshots without a tracked extremum")
        jumps = np.abs(np.diff(pos[np.isfinite(pos)]))
        if jumps.size and jumps.max() >= MAX_JUMP:
            out.append(f"tracked position jumped by {jumps.max():.3g} >= pi between snapshots")
        return out


def parabolic_offset(y_minus: float, y0: float, y_plus: float) -> float:
    """Vertex offset, in cells, of the parabola through three equally spaced samples."""
    denom = y_minus - 2.0 * y0 + y_plus
    if denom == 0:
        return 0.0
    return 0.5 * (y_minus - y_plus) / denom


def locate_extremum(intensity: np.ndarray, grid: SpectralGrid, detuning_sign: int,
                    prior_position: float | None = None) -> float:
    """Position of the intensity maximum (red detuning) or minimum (blue detuning).

    With ``prior_position`` the local extremum closest to it is followed;
    otherwise the global one is used and an error is raised if another
    extremum is nearly as deep.
    """
    y = np.asarray(intensity, dtype=float)
    if y.shape != (grid.n_points,):
        raise ValueError(f"intensity must have shape ({grid.n_points},)")
    if detuning_sign > 0:
        y = -y
    spread = float(np.ptp(y))
    if not np.isfinite(spread) or spread <= 1e-12 * max(float(np.max(np.abs(y))), 1e-300):
        raise TrackingError("no trackable extremum: intensity is uniform")

    left, right = np.roll(y, 1), np.roll(y, -1)
    peaks = np.flatnonzero((y > left) & (y >= right))
    if peaks.size == 0:
        raise TrackingError("no trackable extremum: no local extremum found")

    x = grid.x_values
    if prior_position is not None:
        i = int(peaks[np.argmin(np.abs(x[peaks] - prior_position))])
    else:
        depth = y[peaks] - np.median(y)
        order = np.argsort(depth)[::-1]
        i = int(peaks[order[0]])
        if peaks.size > 1 and depth[order[1]] >= (1.0 - AMBIGUITY) * depth[order[0]]:
            raise TrackingError(
                f"ambiguous extremum: candidates at x = {x[i]:.4g} and "
                f"{x[peaks[order[1]]]:.4g} have comparable depth; supply a prior position"
            )
    n = grid.n_points
    offset = parabolic_offset(y[(i - 1) % n], y[i], y[(i + 1) % n])
    return float(x[i] + offset * grid.dx)
