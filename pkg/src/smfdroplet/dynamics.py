"""Split-step spectral propagation of the condensate in its self-consistent optical potential.

The wavefunction obeys

    i dPsi/dt = -omega_r d^2Psi/dx^2 + [ (Delta/4)(p0 + |B|^2) - a x ] Psi

where B is recomputed from |Psi|^2 whenever the potential is needed; the
light has no dynamics of its own.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import density_contrast, fit_gaussian
from .errors import (BoundaryViolation, ConfigError, ConvergenceError, FitError,
                     NoDropletSolution, NumericalError, TrackingError)
from .grid import SpectralGrid
from .optics import SystemParams, ValidityWarning, dipole_potential, image_plane_field, mirror_kernel
from .tracking import (BACKWARD_AT_BEC, IMAGE_PLANE_FORWARD, INTENSITY_KINDS,
                       TrajectoryRecord, locate_extremum)

log = logging.getLogger(__name__)

MEAN_DENSITY_ONE = "mean-density-one"
REAL_TIME = "real_time"
IMAGINARY_TIME = "imaginary_time"
NAN_CHECK_EVERY = 256


@dataclass
class Wavefunction:
    psi: np.ndarray
    norm_convention: str = MEAN_DENSITY_ONE

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.norm_convention != MEAN_DENSITY_ONE:
            raise ValueError(f"unsupported norm convention {self.norm_convention!r}")

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def mean_density(self) -> float:
        return float(np.mean(self.density))

    def normalized(self) -> "Wavefunction":
        m = self.mean_density()
        if not m > 0:
            raise ValueError("cannot normalise a zero wavefunction")
        return Wavefunction(self.psi / math.sqrt(m), self.norm_convention)

    def copy(self) -> "Wavefunction":
        return Wavefunction(self.psi.copy(), self.norm_convention)

    @classmethod
    def gaussian(cls, grid: SpectralGrid, center: float = 0.0, width: float = 0.562,
                 momentum: float = 0.0) -> "Wavefunction":
        """Density ``∝ exp(-(x - center)**2 / width**2)``, optionally with a phase ramp."""
        x = grid.x_values
        psi = np.exp(-0.5 * ((x - center) / width) ** 2 + 1j * momentum * x)
        return cls(psi).normalized()

    @classmethod
    def homogeneous(cls, grid: SpectralGrid, probe_amplitude: float = 0.0,
                    probe_q: float = 1.0) -> "Wavefunction":
        """Uniform state, optionally with density ``1 + eps cos(q x)``."""
        n = 1.0 + probe_amplitude * np.cos(probe_q * grid.x_values)
        return cls(np.sqrt(n).astype(complex)).normalized()


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_final: float
    snapshot_stride: int = 1000
    mode: str = REAL_TIME
    boundary_guard: float = 0.8
    intensity_kind: str = BACKWARD_AT_BEC

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"evolution.dt must be > 0, got {self.dt}")
        if not self.t_final >= 0:
            raise ConfigError(f"evolution.t_final must be >= 0, got {self.t_final}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ConfigError(f"evolution.snapshot_stride must be an integer >= 1, got {self.snapshot_stride}")
        if self.mode not in (REAL_TIME, IMAGINARY_TIME):
            raise ConfigError(f"evolution.mode must be real_time or imaginary_time, got {self.mode!r}")
        if not 0 < self.boundary_guard < 1:
            raise ConfigError(f"evolution.boundary_guard must lie in (0, 1), got {self.boundary_guard}")
        if self.intensity_kind not in INTENSITY_KINDS:
            raise ConfigError(f"unknown intensity kind {self.intensity_kind!r}")
        n = self.t_final / self.dt
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ConfigError(
                f"evolution.t_final = {self.t_final} is not a whole number of steps dt = {self.dt}"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class Snapshot:
    step: int
    t: float
    psi: np.ndarray
    image_intensity: np.ndarray  # |F_tr|^2 after 2d of free space
    backward_intensity: np.ndarray  # |B|^2 at the condensate

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def tracked_intensity(self, kind: str) -> np.ndarray:
        return self.backward_intensity if kind == BACKWARD_AT_BEC else self.image_intensity


@dataclass
class Evolution:
    record: TrajectoryRecord
    snapshots: list[Snapshot]
    final: Wavefunction
    dt: float


class Propagator:
    """Precomputed operators for repeated split steps on one grid.

    ``frozen_potential`` replaces the self-consistent optical potential by a
    fixed array (used to compare against other integrators).
    """

    def __init__(self, params: SystemParams, grid: SpectralGrid, dt: float,
                 imaginary: bool = False, frozen_potential: np.ndarray | None = None):
        self.params = params
        self.grid = grid
        self.dt = dt
        self.imaginary = imaginary
        q2 = grid.q_values**2
        self._mirror = mirror_kernel(grid, params.mirror_R)
        self._sqrt_p0 = math.sqrt(params.p0)
        self._linear = -params.a_bar * grid.x_values
        self.frozen = None if frozen_potential is None else np.asarray(frozen_potential, dtype=float)
        if imaginary:
            self._kinetic = np.exp(-params.omega_r_bar * q2 * dt)
        else:
            self._kinetic = np.exp(-1j * params.omega_r_bar * q2 * dt)

    def potential(self, density: np.ndarray) -> np.ndarray:
        if self.frozen is not None:
            return self.frozen
        p = self.params
        if p.mirror_R == 0 or p.p0 == 0:
            b2 = 0.0
        else:
            f_tr = self._sqrt_p0 * np.exp(-1j * p.chi0 * density)
            b2 = np.abs(np.fft.ifft(self._mirror * np.fft.fft(f_tr))) ** 2
        v = 0.25 * p.delta * (p.p0 + b2) + self._linear
        return np.broadcast_to(v, density.shape) if np.ndim(v) == 0 else v

    def phase(self, v: np.ndarray, fraction: float) -> np.ndarray:
        if self.imaginary:
            return np.exp(-fraction * self.dt * v)
        return np.exp(-1j * fraction * self.dt * v)

    def kinetic(self, psi: np.ndarray) -> np.ndarray:
        return np.fft.ifft(self._kinetic * np.fft.fft(psi))

    def step(self, psi: np.ndarray) -> np.ndarray:
        """One Strang step; the second half uses the post-kinetic density."""
        psi = psi * self.phase(self.potential(np.abs(psi) ** 2), 0.5)
        psi = self.kinetic(psi)
        return psi * self.phase(self.potential(np.abs(psi) ** 2), 0.5)


def split_step(psi: Wavefunction, params: SystemParams, grid: SpectralGrid, dt: float) -> Wavefunction:
    """Advance ``psi`` by one real-time step ``dt``."""
    return Wavefunction(Propagator(params, grid, dt).step(psi.psi), psi.norm_convention)


def kinetic_energy(psi: np.ndarray, params: SystemParams, grid: SpectralGrid) -> float:
    spec = np.fft.fft(psi)
    return float(params.omega_r_bar * np.sum(grid.q_values**2 * np.abs(spec) ** 2) * grid.dx / grid.n_points)


_RAY_NODES, _RAY_WEIGHTS = np.polynomial.legendre.leggauss(8)


def energy(psi: np.ndarray, params: SystemParams, grid: SpectralGrid) -> float:
    """Kinetic plus optical interaction energy at fixed norm.

    The optical response has no exact energy functional (its density
    Jacobian is not symmetric), so the interaction term is the line
    integral of the potential along n -> s n, s in [0, 1]. It reduces to the
    exact energy whenever one exists.
    """
    n = np.abs(psi) ** 2
    s = 0.5 * (_RAY_NODES + 1.0)
    interaction = sum(0.5 * w * np.sum(dipole_potential(si * n, params, grid).potential * n)
                      for si, w in zip(s, _RAY_WEIGHTS))
    return kinetic_energy(psi, params, grid) + float(interaction) * grid.dx


def optical_snapshot(step: int, t: float, psi: np.ndarray, params: SystemParams,
                     grid: SpectralGrid) -> Snapshot:
    fields = dipole_potential(np.abs(psi) ** 2, params, grid)
    image = np.abs(image_plane_field(fields.f_trans, grid)) ** 2
    return Snapshot(step, t, psi.copy(), image, np.abs(fields.b_field) ** 2)


class _Recorder:
    def __init__(self, params, grid, config, prior, sink, keep):
        self.params, self.grid, self.config = params, grid, config
        self.prior = prior
        self.sink, self.keep = sink, keep
        self.sign = 1 if params.delta > 0 else -1
        self.rows = {"t": [], "pos": [], "width": [], "norm": [], "center": []}
        self.snapshots: list[Snapshot] = []
        self.notes: list[str] = []

    def __call__(self, step, psi):
        snap = optical_snapshot(step, step * self.config.dt, psi, self.params, self.grid)
        density = snap.density
        try:
            pos = locate_extremum(snap.tracked_intensity(self.config.intensity_kind), self.grid,
                                  self.sign, self.prior)
            self.prior = pos
        except TrackingError as exc:
            pos = math.nan
            if not self.notes or self.notes[-1] != str(exc):
                self.notes.append(f"t={snap.t:g}: {exc}")
        try:
            fit = fit_gaussian(density, self.grid)
            width, center = fit.width, fit.center
        except FitError:
            width = center = math.nan
        r = self.rows
        r["t"].append(snap.t)
        r["pos"].append(pos)
        r["width"].append(width)
        r["norm"].append(float(np.sum(density) * self.grid.dx))
        r["center"].append(center)
        if self.keep:
            self.snapshots.append(snap)
        if self.sink is not None:
            self.sink(snap)

    def record(self) -> TrajectoryRecord:
        r = self.rows
        return TrajectoryRecord(r["t"], r["pos"], r["width"], r["norm"],
                                self.config.intensity_kind, r["center"], list(self.notes))


def evolve(psi0: Wavefunction, params: SystemParams, grid: SpectralGrid, config: EvolutionConfig,
           sink: Callable[[Snapshot], None] | None = None, keep_snapshots: bool = True,
           prior_position: float | None = None) -> Evolution:
    """Integrate in real time, recording a snapshot every ``snapshot_stride`` steps.

    The tracked intensity extremum starts from ``prior_position`` (default:
    the density maximum of ``psi0``) and follows the nearest extremum after that.
    """
    if config.mode != REAL_TIME:
        raise ConfigError("evolve integrates in real time; use imaginary_time_ground_state")
    prop = Propagator(params, grid, config.dt)
    psi = psi0.psi.astype(complex, copy=True)
    x = grid.x_values
    if abs(params.a_bar) * config.t_final > 0.5 * grid.q_max:
        # the momentum gained from the tilt would alias across the spectral window
        warnings.warn(f"|a_bar|*t_final = {abs(params.a_bar) * config.t_final:.3g} exceeds half of "
                      f"q_max = {grid.q_max:.3g}; refine the grid", ValidityWarning, stacklevel=2)
    if prior_position is None:
        prior_position = float(x[np.argmax(np.abs(psi) ** 2)])
    rec = _Recorder(params, grid, config, prior_position, sink, keep_snapshots)
    guard = config.boundary_guard * 0.5 * grid.length
    stride = config.snapshot_stride
    n_steps = config.n_steps

    rec(0, psi)
    if n_steps == 0:
        return Evolution(rec.record(), rec.snapshots, Wavefunction(psi, psi0.norm_convention), config.dt)
    v = prop.potential(np.abs(psi) ** 2)
    half = prop.phase(v, 0.5)
    psi *= half
    for k in range(1, n_steps + 1):
        psi = prop.kinetic(psi)
        v = prop.potential(np.abs(psi) ** 2)
        at_snapshot = k % stride == 0 or k == n_steps
        if at_snapshot or k % NAN_CHECK_EVERY == 0:
            half = prop.phase(v, 0.5)
            psi *= half
            if not np.all(np.isfinite(psi)):
                raise NumericalError(f"non-finite wavefunction at step {k}", step=k)
            if params.a_bar != 0:
                peak = x[np.argmax(np.abs(psi) ** 2)]
                if abs(peak) > guard:
                    if at_snapshot:
                        rec(k, psi)
                    raise BoundaryViolation(
                        f"density peak at x = {peak:.4g} left the central "
                        f"{config.boundary_guard:g} of the window at step {k} (t = {k * config.dt:g})",
                        step=k, partial=rec.record(),
                    )
            if at_snapshot:
                rec(k, psi)
            if k < n_steps:
                psi *= half
        else:
            psi *= prop.phase(v, 1.0)
    return Evolution(rec.record(), rec.snapshots, Wavefunction(psi, psi0.norm_convention), config.dt)


@dataclass
class Relaxation:
    state: Wavefunction
    steps: int
    converged: bool
    energies: list[float] = field(default_factory=list)


def relax(psi0: Wavefunction, params: SystemParams, grid: SpectralGrid, tol: float = 1e-9,
          dt: float = 4.0, max_steps: int = 200_000, track_energy: bool = False) -> Relaxation:
    """Imaginary-time relaxation with renormalisation after every step."""
    params = params.with_(a_bar=0.0)
    prop = Propagator(params, grid, dt, imaginary=True)
    psi = psi0.normalized().psi
    n_old = np.abs(psi) ** 2
    energies = []
    for k in range(1, max_steps + 1):
        psi = prop.step(psi)
        psi /= math.sqrt(np.mean(np.abs(psi) ** 2))
        n = np.abs(psi) ** 2
        if not np.all(np.isfinite(n)):
            raise NumericalError(f"non-finite wavefunction during relaxation at step {k}", step=k)
        if track_energy:
            energies.append(energy(psi, params, grid))
        change = float(np.max(np.abs(n - n_old))) / dt
        n_old = n
        if change < tol:
            return Relaxation(Wavefunction(psi), k, True, energies)
    return Relaxation(Wavefunction(psi), max_steps, False, energies)


def imaginary_time_ground_state(psi0: Wavefunction, params: SystemParams, grid: SpectralGrid,
                                tol: float = 1e-9, dt: float = 4.0, max_steps: int = 200_000,
                                min_contrast: float = 0.05) -> Wavefunction:
    """Relax ``psi0`` to the localised droplet state (acceleration switched off).

    Raises NoDropletSolution when the state flattens out (below threshold)
    and ConvergenceError when ``max_steps`` is exhausted.
    """
    result = relax(psi0, params, grid, tol=tol, dt=dt, max_steps=max_steps)
    contrast = density_contrast(result.state.density)
    if contrast < min_contrast:
        raise NoDropletSolution(
            f"relaxation reached the homogeneous state (contrast {contrast:.3g}); "
            "no droplet solution at this pump strength", state=result.state,
        )
    if not result.converged:
        raise ConvergenceError(
            f"imaginary-time relaxation did not reach tol={tol:g} in {max_steps} steps",
            step=max_steps,
        )
    log.info("relaxed in %d steps", result.steps)
    return result.state


@dataclass
class ProbeStep:
    dt: float
    relative_change: float


def trajectory_change(coarse: TrajectoryRecord, fine: TrajectoryRecord) -> float:
    """Largest position difference at shared times, relative to the excursion (at least 2*pi)."""
    common, i, j = np.intersect1d(np.round(coarse.times, 9), np.round(fine.times, 9),
                                  return_indices=True)
    if common.size == 0:
        raise ValueError("records share no sample times")
    a, b = coarse.peak_positions[i], fine.peak_positions[j]
    if np.any(~np.isfinite(a)) or np.any(~np.isfinite(b)):
        a, b = coarse.centers[i], fine.centers[j]
    excursion = max(float(np.nanmax(np.abs(b - b[0]))), 2.0 * math.pi)
    return float(np.nanmax(np.abs(a - b))) / excursion


def convergence_probe(psi0: Wavefunction, params: SystemParams, grid: SpectralGrid,
                      config: EvolutionConfig, start_dt: float = 1.0, rel_tol: float = 1e-3,
                      max_halvings: int = 5, prior_position: float | None = None
                      ) -> tuple[float, list[ProbeStep]]:
    """Halve dt until the tracked trajectory moves by less than ``rel_tol``.

    Snapshots are kept at the same physical times by doubling the stride
    with every halving. Returns the accepted (coarser) dt and the history.
    """
    dt = start_dt
    stride = max(1, int(round(config.snapshot_stride * config.dt / dt)))

    def run(dt_, stride_):
        cfg = EvolutionConfig(dt_, config.t_final, stride_, REAL_TIME,
                              config.boundary_guard, config.intensity_kind)
        return evolve(psi0, params, grid, cfg, keep_snapshots=False,
                      prior_position=prior_position).record

    history = []
    current = run(dt, stride)
    for _ in range(max_halvings):
        finer = run(dt / 2, stride * 2)
        change = trajectory_change(current, finer)
        history.append(ProbeStep(dt, change))
        log.info("dt=%g -> relative trajectory change %.3g", dt, change)
        if change < rel_tol:
            return dt, history
        dt, stride, current = dt / 2, stride * 2, finer
    raise ConvergenceError(f"trajectory still changing by {history[-1].relative_change:.3g} "
                           f"after {max_halvings} halvings of dt")
