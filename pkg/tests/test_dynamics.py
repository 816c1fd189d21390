import math

import numpy as np
import pytest
import scipy.linalg as sla

from smfdroplet import SystemParams, Wavefunction, make_grid
from smfdroplet.analysis import density_contrast, fit_gaussian, pump_threshold
from smfdroplet.dynamics import (EvolutionConfig, Propagator, evolve, imaginary_time_ground_state,
                                 relax, split_step)
from smfdroplet.errors import BoundaryViolation, ConfigError, NoDropletSolution, NumericalError
from smfdroplet.optics import ValidityWarning, dipole_potential


def run_steps(psi, params, grid, dt, n):
    prop = Propagator(params, grid, dt)
    for _ in range(n):
        psi = prop.step(psi)
    return psi


def test_norm_conserved(droplet, ref_params, ref_grid):
    psi = run_steps(droplet.psi, ref_params.with_(a_bar=1e-5), ref_grid, 1.0, 10_000)
    n0 = np.sum(droplet.density)
    assert abs(np.sum(np.abs(psi) ** 2) - n0) / n0 <= 1e-10


def test_free_gaussian_spreading(ref_params):
    grid = make_grid(1024, 20 * math.pi)
    params = ref_params.with_(p0=0.0)
    s0, t = 0.562, 1e4
    psi = run_steps(Wavefunction.gaussian(grid, 0.0, s0).psi, params, grid, 1.0, int(t))
    oracle = s0 * math.sqrt(1 + (2 * params.omega_r_bar * t / s0**2) ** 2)
    assert fit_gaussian(np.abs(psi) ** 2, grid).width == pytest.approx(oracle, rel=1e-3)


def test_zero_recoil_is_pure_phase(droplet, ref_params, ref_grid):
    params = ref_params.with_(a_bar=3e-5)
    object.__setattr__(params, "omega_r_bar", 0.0)  # limit excluded by validation
    out = split_step(droplet, params, ref_grid, 5.0)
    assert np.max(np.abs(out.density - droplet.density)) <= 1e-12 * droplet.density.max()
    v = dipole_potential(droplet.density, params, ref_grid).potential - params.a_bar * ref_grid.x_values
    np.testing.assert_allclose(out.psi, droplet.psi * np.exp(-1j * v * 5.0), atol=1e-12)


def _crank_nicolson(psi, v, omega, grid, dt, n):
    """Independent oracle: dense spectral Laplacian built from the DFT matrix."""
    f = sla.dft(grid.n_points)
    lap = (np.conj(f.T) @ np.diag(grid.q_values**2) @ f) / grid.n_points
    h = omega * lap + np.diag(v)
    eye = np.eye(grid.n_points)
    lu = sla.lu_factor(eye + 0.5j * dt * h)
    rhs = eye - 0.5j * dt * h
    for _ in range(n):
        psi = sla.lu_solve(lu, rhs @ psi)
    return psi


def test_split_step_matches_implicit_oracle(ref_params):
    grid = make_grid(128, 4 * math.pi)
    params = ref_params.with_(p0=1e-5, a_bar=0.0)
    seed = Wavefunction.gaussian(grid, 0.3, 0.6, momentum=1.0)
    v = dipole_potential(seed.density, params, grid).potential
    v = v - v.mean()  # a constant offset only adds a global phase
    split = seed.psi
    prop = Propagator(params, grid, 0.5, frozen_potential=v)
    for _ in range(2000):
        split = prop.step(split)
    oracle = _crank_nicolson(seed.psi, v, params.omega_r_bar, grid, 0.25, 4000)
    assert np.max(np.abs(split - oracle)) <= 1e-6


def test_galilean_translation(droplet, ref_params, ref_grid):
    k, t = 1.0, 2e4
    moving = Wavefunction(droplet.psi * np.exp(1j * k * ref_grid.x_values))
    start = fit_gaussian(moving.density, ref_grid).center
    psi = run_steps(moving.psi, ref_params, ref_grid, 1.0, int(t))
    shift = fit_gaussian(np.abs(psi) ** 2, ref_grid).center - start
    assert shift == pytest.approx(2 * ref_params.omega_r_bar * k * t, rel=1e-2)


def test_relaxed_width(droplet, ref_grid):
    assert fit_gaussian(droplet.density, ref_grid).width == pytest.approx(0.562, rel=0.1)


def test_relaxed_width_at_sixteen_thresholds(ref_params, ref_grid):
    params = ref_params.with_(p0=16 * pump_threshold(ref_params))
    state = imaginary_time_ground_state(Wavefunction.gaussian(ref_grid, 0, 0.5), params, ref_grid)
    assert fit_gaussian(state.density, ref_grid).width == pytest.approx(0.5, rel=0.1)


def test_below_threshold_has_no_droplet(ref_params):
    grid = make_grid(64, 2 * math.pi)
    params = ref_params.with_(p0=0.5 * pump_threshold(ref_params))
    with pytest.raises(NoDropletSolution) as info:
        imaginary_time_ground_state(Wavefunction.gaussian(grid, 0, 0.562), params, grid,
                                    dt=100.0, max_steps=100_000)
    assert density_contrast(info.value.state.density) < 0.05


def test_energy_decreases_in_imaginary_time(ref_params, ref_grid):
    res = relax(Wavefunction.gaussian(ref_grid, 0, 0.562), ref_params, ref_grid,
                max_steps=2000, track_energy=True)
    e = np.asarray(res.energies)
    assert np.count_nonzero(np.diff(e[100:]) > 1e-12) == 0


def test_relaxed_state_is_stationary(droplet, ref_params, ref_grid):
    cfg = EvolutionConfig(1.0, 1e4, snapshot_stride=1000)
    rec = evolve(droplet, ref_params, ref_grid, cfg, keep_snapshots=False).record
    assert np.max(np.abs(rec.widths / rec.widths[0] - 1)) < 0.02
    assert np.max(np.abs(rec.peak_positions - rec.peak_positions[0])) < ref_grid.dx


def test_evolution_records_every_stride(droplet, ref_params, ref_grid):
    cfg = EvolutionConfig(2.0, 1000.0, snapshot_stride=100)
    out = evolve(droplet, ref_params, ref_grid, cfg)
    np.testing.assert_allclose(out.record.times, np.arange(0, 1001, 200.0))
    assert len(out.snapshots) == 6
    snap = out.snapshots[-1]
    assert np.allclose(np.abs(snap.psi), np.abs(out.final.psi))
    np.testing.assert_allclose(out.record.norms, out.record.norms[0], rtol=1e-12)


def test_boundary_guard(ref_params):
    grid = make_grid(1024, 20 * math.pi)
    params = ref_params.with_(p0=0.0, a_bar=5e-3)
    cfg = EvolutionConfig(5.0, 1.2e4, snapshot_stride=100)
    with pytest.raises(BoundaryViolation) as info, pytest.warns(ValidityWarning):
        evolve(Wavefunction.gaussian(grid, 20.0, 1.0), params, grid, cfg)
    # 5.1 units to the guard at 0.8 of the half window
    assert info.value.step * 5.0 == pytest.approx(math.sqrt(5.13 / (1.14e-5 * 5e-3)), rel=0.05)
    assert len(info.value.partial.times) >= 1


def test_tilt_beyond_grid_warns(ref_params):
    grid = make_grid(64, 2 * math.pi)
    with pytest.warns(ValidityWarning, match="q_max"):
        evolve(Wavefunction.gaussian(grid), ref_params.with_(a_bar=0.5), grid,
               EvolutionConfig(1.0, 100.0, snapshot_stride=100))


def test_nan_detected(ref_params):
    grid = make_grid(64, 2 * math.pi)
    psi = Wavefunction.homogeneous(grid, 0.1)
    psi.psi[5] = np.nan
    with pytest.raises(NumericalError) as info:
        evolve(psi, ref_params, grid, EvolutionConfig(1.0, 1000.0, snapshot_stride=1000))
    assert info.value.step == 256


@pytest.mark.parametrize("kwargs, field", [
    (dict(dt=0.0, t_final=1.0), "dt"),
    (dict(dt=1.0, t_final=-1.0), "t_final"),
    (dict(dt=1.0, t_final=10.0, snapshot_stride=0), "snapshot_stride"),
    (dict(dt=3.0, t_final=10.0), "whole number"),
    (dict(dt=1.0, t_final=10.0, boundary_guard=1.0), "boundary_guard"),
    (dict(dt=1.0, t_final=10.0, mode="sideways"), "mode"),
])
def test_evolution_config_rejects(kwargs, field):
    with pytest.raises(ConfigError, match=field):
        EvolutionConfig(**kwargs)
