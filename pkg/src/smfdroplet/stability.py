"""Numerical check of the pump threshold via growth of a weak q = q_c density modulation."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import Propagator, Wavefunction
from .errors import FitError
from .grid import SpectralGrid
from .optics import SystemParams

SEED_LOW = 2.0
SEED_HIGH = 20.0


@dataclass(frozen=True)
class ScanPoint:
    p0: float
    growth_rate: float


def _mode_index(grid: SpectralGrid) -> int:
    k = grid.length / (2.0 * math.pi)
    if abs(k - round(k)) > 1e-9 or round(k) < 1:
        raise ValueError("grid length must be a whole number of critical wavelengths (2*pi)")
    return int(round(k))


def mode_history(params: SystemParams, grid: SpectralGrid, probe_amplitude: float,
                 dt: float, t_max: float, sample_every: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Times and |n(q=1)| for a homogeneous cloud seeded with ``1 + eps cos(x)``.

    Stops early once the mode has grown past the upper edge of the fit window,
    or once a mode that never doubled has passed its first minimum.
    """
    k = _mode_index(grid)
    params = params.with_(a_bar=0.0)
    prop = Propagator(params, grid, dt)
    psi = Wavefunction.homogeneous(grid, probe_amplitude).psi
    n_steps = int(round(t_max / dt))
    amp0 = abs(np.fft.fft(np.abs(psi) ** 2)[k]) / grid.n_points
    times, amps = [0.0], [amp0]
    for step in range(1, n_steps + 1):
        psi = prop.step(psi)
        if step % sample_every == 0:
            a = abs(np.fft.fft(np.abs(psi) ** 2)[k]) / grid.n_points
            times.append(step * dt)
            amps.append(a)
            if a > 1.5 * SEED_HIGH * amp0:
                break
            if len(amps) > 3 and amps[-2] < amps[-3] and a > amps[-2] and max(amps) < SEED_LOW * amp0:
                break
    return np.array(times), np.array(amps)


def growth_rate(times: np.ndarray, amps: np.ndarray) -> float:
    """Log-linear rate of the mode amplitude.

    A growing mode is fitted between 2x and 20x its seed value. A mode that
    never doubles is fitted from the start up to its first local minimum,
    which gives the (negative) initial decay of an oscillating, stable mode.
    """
    a0 = amps[0]
    if not a0 > 1e3 * np.finfo(float).eps:
        raise FitError("probe amplitude is at round-off level")
    grown = np.flatnonzero(amps >= SEED_LOW * a0)
    if grown.size:
        start = grown[0]
        above = np.flatnonzero(amps >= SEED_HIGH * a0)
        stop = above[0] + 1 if above.size else amps.size
        sel = slice(start, stop)
    else:
        interior = np.flatnonzero((amps[1:-1] < amps[:-2]) & (amps[1:-1] <= amps[2:])) + 1
        stop = interior[0] + 1 if interior.size else amps.size
        sel = slice(0, stop)
    t, a = times[sel], amps[sel]
    a = np.maximum(a, np.finfo(float).tiny)
    if t.size < 3:
        raise FitError("too few samples in the growth-rate window")
    return float(np.polyfit(t, np.log(a), 1)[0])


def _scan_one(args):
    params, p0, grid, probe_amplitude, dt, t_max, sample_every = args
    t, a = mode_history(params.with_(p0=p0), grid, probe_amplitude, dt, t_max, sample_every)
    return ScanPoint(p0, growth_rate(t, a))


def threshold_scan(params_base: SystemParams, p0_values, grid: SpectralGrid,
                   probe_amplitude: float = 1e-4, dt: float = 10.0, t_max: float = 2.0e6,
                   sample_every: int = 10, max_workers: int | None = None) -> list[ScanPoint]:
    jobs = [(params_base, float(p), grid, probe_amplitude, dt, t_max, sample_every) for p in p0_values]
    if max_workers and max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_scan_one, jobs))
    return [_scan_one(j) for j in jobs]


def bracket_zero_crossing(scan: list[ScanPoint]) -> tuple[float, float]:
    """Largest non-growing and smallest growing pump value."""
    stable = [s.p0 for s in scan if s.growth_rate <= 0]
    unstable = [s.p0 for s in scan if s.growth_rate > 0]
    if not stable or not unstable:
        raise ValueError("scan does not straddle the threshold")
    return max(stable), min(unstable)
