"""Closed-form predictors, Gaussian width fits and physical-unit conversion."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.optimize import OptimizeWarning, curve_fit

from .errors import FitError, NoDropletSolution
from .grid import SpectralGrid
from .optics import SystemParams, ValidityWarning

ASYMPTOTIC_RATIO = 5.0
FIT_HALF_WINDOW = 5.0
MIN_CONTRAST = 1e-3


@dataclass(frozen=True)
class PhysicalAnchors:
    lambda0: float  # m
    d_mirror: float  # m
    gamma: float  # s^-1, atomic linewidth
    mass: float  # kg

    def __post_init__(self):
        for name in ("lambda0", "d_mirror", "gamma", "mass"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"anchors.{name} must be positive, got {value}")

    @property
    def k0(self) -> float:
        return 2.0 * math.pi / self.lambda0

    @property
    def q_c(self) -> float:
        return critical_wavenumber(self)[0]

    @property
    def omega_r_bar(self) -> float:
        return constants.hbar * self.q_c**2 / (2.0 * self.mass * self.gamma)


@dataclass(frozen=True)
class DropletFit:
    center: float
    width: float
    amplitude: float
    residual: float


def critical_wavenumber(anchors: PhysicalAnchors) -> tuple[float, float]:
    """Return ``(q_c, Lambda_c)`` in SI units."""
    q_c = math.sqrt(0.5 * math.pi * anchors.k0 / anchors.d_mirror)
    return q_c, 2.0 * math.pi / q_c


def pump_threshold(params: SystemParams) -> float:
    """Scaled pump intensity above which the homogeneous cloud self-structures.

    Returns ``inf`` when there is no feedback (R = 0).
    """
    if params.mirror_R == 0:
        return math.inf
    return 2.0 * params.omega_r_bar / (params.b0 * params.mirror_R)


def predicted_width(params: SystemParams) -> float:
    p_th = pump_threshold(params)
    if not params.p0 > p_th:
        raise NoDropletSolution(
            f"p0 = {params.p0:g} does not exceed p_th = {p_th:g}: no droplet"
        )
    ratio = params.p0 / p_th
    if ratio < ASYMPTOTIC_RATIO:
        warnings.warn(
            f"p0/p_th = {ratio:.3g} is not >> 1; width formula is asymptotic",
            ValidityWarning,
            stacklevel=2,
        )
    return ratio**-0.25


def heating_budget(params: SystemParams, t_final: float) -> tuple[float, float, bool]:
    """Incoherent scattering rate ``r_s/Gamma`` and the usable interaction time.

    Returns ``(r_s/Gamma, t_limit, t_final < t_limit)``; ``t_limit`` is in
    units of 1/Gamma.
    """
    rate = 0.5 * (1.0 + params.mirror_R) * params.p0
    t_limit = math.inf if rate == 0 else 1.0 / rate
    return rate, t_limit, bool(t_final < t_limit)


def _gauss(x, amplitude, center, width):
    return amplitude * np.exp(-((x - center) ** 2) / width**2)


def density_contrast(density: np.ndarray) -> float:
    lo, hi = float(np.min(density)), float(np.max(density))
    return 0.0 if hi + lo == 0 else (hi - lo) / (hi + lo)


def fit_gaussian(density: np.ndarray, grid: SpectralGrid) -> DropletFit:
    """Least-squares fit of ``A exp(-(x - c)**2 / sigma**2)`` around the global maximum.

    ``sigma`` follows the no-factor-of-two convention, so it is sqrt(2) times
    the standard deviation of the profile.
    """
    density = np.asarray(density, dtype=float)
    x = grid.x_values
    if density_contrast(density) < MIN_CONTRAST:
        raise FitError("density has no peak to fit")
    i = int(np.argmax(density))
    half = 0.5 * (density[i] + density.min())
    fwhm = max(np.count_nonzero(density >= half), 1) * grid.dx
    sigma0 = fwhm / (2.0 * math.sqrt(math.log(2.0)))
    margin = 3.0 * sigma0
    if x[i] - x[0] < margin or x[-1] - x[i] < margin:
        raise FitError(f"peak at x = {x[i]:.4g} is too close to the window edge")
    window = np.abs(x - x[i]) <= FIT_HALF_WINDOW * sigma0
    if np.count_nonzero(window) < 4:
        window = np.abs(x - x[i]) <= 2 * grid.dx
    try:
        with warnings.catch_warnings():
            # Covariance is unused; an exact fit makes it singular.
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(
                _gauss, x[window], density[window], p0=(density[i], x[i], sigma0),
                maxfev=5000, xtol=1e-14, ftol=1e-14,
            )
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Gaussian fit did not converge: {exc}") from exc
    amplitude, center, width = popt
    resid = density[window] - _gauss(x[window], *popt)
    if not np.all(np.isfinite(popt)) or width == 0:
        raise FitError("Gaussian fit returned non-finite parameters")
    return DropletFit(float(center), abs(float(width)), float(amplitude),
                      float(np.sqrt(np.mean(resid**2))))


def _check_anchor_consistency(params: SystemParams, anchors: PhysicalAnchors) -> None:
    implied = anchors.omega_r_bar
    if abs(implied - params.omega_r_bar) > 0.05 * params.omega_r_bar:
        warnings.warn(
            f"anchors imply omega_r_bar = {implied:.4g}, params use "
            f"{params.omega_r_bar:.4g} (>5% apart)",
            ValidityWarning,
            stacklevel=3,
        )


def to_physical(params: SystemParams, anchors: PhysicalAnchors,
                x_bar: float, t_bar: float, a_bar: float) -> tuple[float, float, float]:
    """Convert ``(x_bar, t_bar, a_bar)`` to metres, seconds and m/s^2."""
    _check_anchor_consistency(params, anchors)
    q_c = anchors.q_c
    a_unit = constants.hbar * q_c * anchors.gamma / anchors.mass
    return x_bar / q_c, t_bar / anchors.gamma, a_bar * a_unit


def from_physical(params: SystemParams, anchors: PhysicalAnchors,
                  x: float, t: float, a: float) -> tuple[float, float, float]:
    _check_anchor_consistency(params, anchors)
    q_c = anchors.q_c
    a_unit = constants.hbar * q_c * anchors.gamma / anchors.mass
    return x * q_c, t * anchors.gamma, a / a_unit


def cesium_anchors(params: SystemParams | None = None) -> PhysicalAnchors:
    """Cs D2 anchor set; with ``params`` the mirror distance is chosen to match omega_r_bar."""
    lambda0 = 852.347e-9
    gamma = 2.0 * math.pi * 5.234e6
    mass = 132.905451931 * constants.atomic_mass
    if params is None:
        d_mirror = 100e-6
    else:
        q_c2 = 2.0 * mass * gamma * params.omega_r_bar / constants.hbar
        d_mirror = 0.5 * math.pi * (2.0 * math.pi / lambda0) / q_c2
    return PhysicalAnchors(lambda0, d_mirror, gamma, mass)
