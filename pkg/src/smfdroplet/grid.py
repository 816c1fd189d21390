"""Periodic 1D grid and the spectral transform pair.

Lengths are in units of 1/q_c, so wavenumbers come out in units of the
critical wavenumber and the mirror round trip phase is a pure function of q.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_POINTS = 16


@dataclass(frozen=True)
class SpectralGrid:
    n_points: int
    length: float
    dx: float = field(init=False)
    x_values: np.ndarray = field(init=False, repr=False)
    q_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dx = self.length / self.n_points
        x = -0.5 * self.length + dx * np.arange(self.n_points)
        q = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=dx)
        x.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "x_values", x)
        object.__setattr__(self, "q_values", q)

    @property
    def q_max(self) -> float:
        return np.pi / self.dx

    def to_spectrum(self, field: np.ndarray) -> np.ndarray:
        return to_spectrum(field, self)

    def from_spectrum(self, spectrum: np.ndarray) -> np.ndarray:
        return from_spectrum(spectrum, self)


def make_grid(n_points: int, length: float) -> SpectralGrid:
    """Build a periodic grid of ``n_points`` cells spanning ``[-L/2, L/2)``."""
    if int(n_points) != n_points or n_points < MIN_POINTS:
        raise ValueError(
            f"n_points must be an integer >= {MIN_POINTS} to resolve one critical "
            f"wavelength, got {n_points}"
        )
    if not np.isfinite(length) or length <= 0:
        raise ValueError(f"length must be positive, got {length}")
    return SpectralGrid(int(n_points), float(length))


def _check(arr: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.shape != (grid.n_points,):
        raise ValueError(f"expected array of shape ({grid.n_points},), got {arr.shape}")
    return arr


# Unitary ("ortho") normalisation: Parseval holds without extra factors.
def to_spectrum(field: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    return np.fft.fft(_check(field, grid), norm="ortho")


def from_spectrum(spectrum: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    return np.fft.ifft(_check(spectrum, grid), norm="ortho")
