"""Thin-medium transmission, mirror feedback and the resulting dipole potential.

All optical quantities are saturation parameters (intensity scaled by
I_sat * Delta**2). The transmitted field is a pure phase mask on the pump,
and the backward field is the transmitted field after a free-space round
trip to the mirror, which in critical-wavenumber units is the fixed
spectral phase ``-(pi/2) q**2``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import SpectralGrid, from_spectrum, to_spectrum

FAR_DETUNED_MIN = 100.0
SATURATION_MAX = 0.1


class ValidityWarning(UserWarning):
    """Parameters outside the far-detuned, weakly saturated regime."""


@dataclass(frozen=True)
class SystemParams:
    omega_r_bar: float
    b0: float
    delta: float
    mirror_R: float
    p0: float
    a_bar: float = 0.0
    chi0: float = field(init=False)

    def __post_init__(self):
        if not self.omega_r_bar > 0:
            raise ValueError(f"omega_r_bar must be > 0, got {self.omega_r_bar}")
        if not self.b0 > 0:
            raise ValueError(f"b0 must be > 0, got {self.b0}")
        if self.delta == 0 or not np.isfinite(self.delta):
            raise ValueError(f"delta must be finite and non-zero, got {self.delta}")
        if not 0.0 <= self.mirror_R <= 1.0:
            raise ValueError(f"mirror_R must lie in [0, 1], got {self.mirror_R}")
        if not self.p0 >= 0:
            raise ValueError(f"p0 must be >= 0, got {self.p0}")
        if not np.isfinite(self.a_bar):
            raise ValueError(f"a_bar must be finite, got {self.a_bar}")
        object.__setattr__(self, "chi0", self.b0 / (2.0 * self.delta))

    def validity_warnings(self) -> list[str]:
        issues = []
        if abs(self.delta) < FAR_DETUNED_MIN:
            issues.append(
                f"|delta| = {abs(self.delta):g} < {FAR_DETUNED_MIN:g}: not far-detuned"
            )
        if self.p0 * (1.0 + self.mirror_R) >= SATURATION_MAX:
            issues.append(
                f"p0*(1+R) = {self.p0 * (1 + self.mirror_R):g} >= {SATURATION_MAX}: "
                "saturation no longer negligible"
            )
        return issues

    def check_validity(self) -> None:
        for msg in self.validity_warnings():
            warnings.warn(msg, ValidityWarning, stacklevel=2)

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class OpticalFields:
    f_trans: np.ndarray
    b_field: np.ndarray
    potential: np.ndarray


def mirror_kernel(grid: SpectralGrid, mirror_R: float) -> np.ndarray:
    """Spectral multiplier for the BEC -> mirror -> BEC round trip."""
    # Round trip 2d of paraxial propagation: exp(-i q^2 d / k0) = exp(-i pi/2 qbar^2).
    return np.sqrt(mirror_R) * np.exp(-0.5j * np.pi * grid.q_values**2)


def transmitted_field(density: np.ndarray, params: SystemParams) -> np.ndarray:
    density = np.asarray(density, dtype=float)
    if np.any(density < 0):
        raise ValueError("density has negative entries; check the wavefunction normalisation")
    return np.sqrt(params.p0) * np.exp(-1j * params.chi0 * density)


def backward_field(f_trans: np.ndarray, params: SystemParams, grid: SpectralGrid) -> np.ndarray:
    if params.mirror_R == 0:
        return np.zeros(grid.n_points, dtype=complex)
    return from_spectrum(mirror_kernel(grid, params.mirror_R) * to_spectrum(f_trans, grid), grid)


def image_plane_field(f_trans: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Transmitted field imaged after the same 2d of free space, without the R factor."""
    return from_spectrum(mirror_kernel(grid, 1.0) * to_spectrum(f_trans, grid), grid)


def dipole_potential(density: np.ndarray, params: SystemParams, grid: SpectralGrid) -> OpticalFields:
    f_tr = transmitted_field(density, params)
    b = backward_field(f_tr, params, grid)
    # |F|^2 = p0 exactly for a phase mask; no need to recompute it.
    potential = 0.25 * params.delta * (params.p0 + np.abs(b) ** 2)
    return OpticalFields(f_tr, b, potential)
