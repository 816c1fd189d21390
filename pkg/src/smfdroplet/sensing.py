"""Acceleration from the tracked optical extremum: x(t) = c0 + c1 t + c2 t^2, a = c2 / omega_r."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import heating_budget, pump_threshold
from .dynamics import (EvolutionConfig, Evolution, Wavefunction, evolve,
                       imaginary_time_ground_state)
from .errors import FitError
from .grid import SpectralGrid
from .optics import SystemParams, ValidityWarning
from .tracking import TrajectoryRecord

log = logging.getLogger(__name__)

MIN_SAMPLES = 10
# An accepted trajectory must be followed to better than half a cell ...
MAX_RMS_CELLS = 0.5
# ... by a droplet that keeps its shape.
MAX_WIDTH_CHANGE = 0.5


class InsufficientBaseline(FitError):
    def __init__(self, message, a_bar_min):
        super().__init__(message)
        self.a_bar_min = a_bar_min


@dataclass
class AccelEstimate:
    a_bar_hat: float
    gradient: float  # slope of x/Lambda_c against t^2
    velocity_term: float
    offset: float
    rms_residual: float
    covariance: np.ndarray  # of (c0, c1, c2)
    a_bar_sigma: float
    a_bar_min: float
    t_max: float
    displacement: float
    n_samples: int
    baseline_resolved: bool = True
    issues: list[str] = field(default_factory=list)

    @property
    def reliable(self) -> bool:
        return not self.issues


def fit_trajectory(record: TrajectoryRecord, params: SystemParams, resolution: float | None = None,
                   weights: np.ndarray | None = None, require_baseline: bool = False) -> AccelEstimate:
    """Weighted least squares of the tracked positions on ``{1, t, t^2}``.

    ``resolution`` is the smallest displacement the tracker can resolve (the
    grid spacing is a safe choice); it sets the reported minimum detectable
    acceleration. With ``require_baseline`` a displacement below it raises
    InsufficientBaseline instead of being flagged.
    """
    t = np.asarray(record.times, dtype=float)
    x = np.asarray(record.peak_positions, dtype=float)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
    ok = np.isfinite(x) & np.isfinite(t)
    t, x, w = t[ok], x[ok], w[ok]
    if t.size < MIN_SAMPLES:
        raise FitError(f"need at least {MIN_SAMPLES} tracked samples, have {t.size}")
    if np.ptp(t) == 0:
        raise FitError("rank-deficient design: all sample times are equal")

    # Scale time to keep the normal equations well conditioned.
    t_scale = float(np.max(np.abs(t)))
    s = t / t_scale
    design = np.column_stack([np.ones_like(s), s, s**2])
    sw = np.sqrt(w)
    coef_s, *_ = np.linalg.lstsq(design * sw[:, None], x * sw, rcond=None)
    resid = x - design @ coef_s
    dof = max(t.size - 3, 1)
    s2 = float(np.sum(w * resid**2) / dof)
    cov_s = s2 * np.linalg.inv(design.T @ (design * w[:, None]))
    scale = np.array([1.0, 1.0 / t_scale, 1.0 / t_scale**2])
    coef = coef_s * scale
    cov = cov_s * np.outer(scale, scale)
    cov = 0.5 * (cov + cov.T)

    c0, c1, c2 = (float(c) for c in coef)
    t_max = float(np.max(np.abs(t)))
    displacement = float(np.max(np.abs(x - x[0])))
    if resolution is None:
        resolution = 0.0
    a_min = resolution / (params.omega_r_bar * t_max**2) if resolution > 0 else 0.0
    issues = []
    resolved = not (resolution > 0 and displacement < resolution)
    if not resolved:
        msg = (f"insufficient baseline: displacement {displacement:.3g} below resolution "
               f"{resolution:.3g}; minimum detectable a_bar at t={t_max:g} is {a_min:.3g}")
        if require_baseline:
            raise InsufficientBaseline(msg, a_min)
        log.info(msg)
    return AccelEstimate(
        a_bar_hat=c2 / params.omega_r_bar,
        gradient=c2 / (2.0 * math.pi),
        velocity_term=c1,
        offset=c0,
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        covariance=cov,
        a_bar_sigma=math.sqrt(max(cov[2, 2], 0.0)) / params.omega_r_bar,
        a_bar_min=a_min,
        t_max=t_max,
        displacement=displacement,
        n_samples=int(t.size),
        baseline_resolved=resolved,
        issues=issues,
    )


def assess(record: TrajectoryRecord, estimate: AccelEstimate | None, grid: SpectralGrid) -> list[str]:
    """Reasons not to trust a sensing run."""
    issues = list(record.problems())
    if estimate is not None:
        issues += estimate.issues
        if estimate.rms_residual > MAX_RMS_CELLS * grid.dx:
            issues.append(f"rms residual {estimate.rms_residual:.3g} exceeds "
                          f"{MAX_RMS_CELLS:g} grid cells")
    widths = np.asarray(record.widths, dtype=float)
    w0 = widths[0] if widths.size else math.nan
    if not np.isfinite(w0) or np.any(~np.isfinite(widths)):
        issues.append("droplet width could not be measured throughout the run")
    else:
        change = float(np.max(np.abs(widths / w0 - 1.0)))
        if change > MAX_WIDTH_CHANGE:
            issues.append(f"droplet width changed by {100 * change:.0f}%: no bound droplet")
    return issues


@dataclass
class SenseResult:
    estimate: AccelEstimate | None
    record: TrajectoryRecord
    initial: Wavefunction
    evolution: Evolution | None
    issues: list[str]

    @property
    def reliable(self) -> bool:
        return self.estimate is not None and not self.issues


def sense(params: SystemParams, grid: SpectralGrid, config: EvolutionConfig,
          initial: Wavefunction | None = None, seed_center: float = 0.0, seed_width: float | None = None,
          relax_dt: float = 4.0, relax_tol: float = 1e-9, relax_max_steps: int = 200_000,
          keep_snapshots: bool = True, sink=None) -> SenseResult:
    """Prepare a droplet, let it fall, follow the light and fit the trajectory.

    Without ``initial`` a Gaussian seed is relaxed in imaginary time at zero
    acceleration; below threshold (or without feedback) the seed is used as is.
    """
    params.check_validity()
    _, t_limit, ok = heating_budget(params, config.t_final)
    if not ok:
        warnings.warn(f"t_final = {config.t_final:g} exceeds the heating limit "
                      f"{t_limit:.3g}: spontaneous scattering would heat the droplet",
                      ValidityWarning, stacklevel=2)
    if initial is None:
        p_th = pump_threshold(params)
        if seed_width is None:
            seed_width = (params.p0 / p_th) ** -0.25 if params.p0 > p_th else 0.562
        initial = Wavefunction.gaussian(grid, seed_center, seed_width)
        if params.p0 > p_th:
            initial = imaginary_time_ground_state(initial, params, grid, tol=relax_tol,
                                                  dt=relax_dt, max_steps=relax_max_steps)
        else:
            warnings.warn("pump below threshold: no droplet to relax, evolving the seed directly",
                          ValidityWarning, stacklevel=2)
    x = grid.x_values
    prior = float(x[np.argmax(initial.density)])
    evolution = evolve(initial, params, grid, config, sink=sink,
                       keep_snapshots=keep_snapshots, prior_position=prior)
    record = evolution.record
    try:
        estimate = fit_trajectory(record, params, resolution=grid.dx)
    except FitError as exc:
        estimate = None
        issues = assess(record, None, grid) + [str(exc)]
    else:
        issues = assess(record, estimate, grid)
    return SenseResult(estimate, record, initial, evolution, issues)
