import math

import numpy as np
import pytest

from smfdroplet import make_grid
from smfdroplet.errors import TrackingError
from smfdroplet.tracking import TrajectoryRecord, locate_extremum, parabolic_offset


@pytest.fixture
def grid():
    return make_grid(256, 20.0)


def test_parabola_mid_cell(grid):
    x = grid.x_values
    center = x[100] + 0.5 * grid.dx
    y = 3.0 - (x - center) ** 2
    assert locate_extremum(y, grid, -1) == pytest.approx(center, abs=1e-12)


@pytest.mark.parametrize("frac", [-0.49, -0.2, 0.0, 0.13, 0.4])
def test_parabola_sub_cell(grid, frac):
    x = grid.x_values
    center = x[77] + frac * grid.dx
    assert locate_extremum(-(x - center) ** 2, grid, -1) == pytest.approx(center, abs=1e-12)


def test_symmetric_samples_zero_offset():
    assert parabolic_offset(1.0, 2.0, 1.0) == 0.0


def test_blue_detuning_tracks_minimum(grid):
    x = grid.x_values
    y = 1 + (x - 2.345) ** 2
    assert locate_extremum(y, grid, +1) == pytest.approx(2.345, abs=1e-12)


def test_uniform_intensity_untrackable(grid):
    with pytest.raises(TrackingError, match="uniform"):
        locate_extremum(np.full(256, 0.3), grid, -1)


def test_ambiguous_without_prior(grid):
    x = grid.x_values
    y = np.exp(-((x - 3) ** 2)) + 0.97 * np.exp(-((x + 4) ** 2))
    with pytest.raises(TrackingError, match="ambiguous"):
        locate_extremum(y, grid, -1)
    assert locate_extremum(y, grid, -1, prior_position=-3.5) == pytest.approx(-4, abs=0.05)


def test_droplet_light_follows_density(droplet, ref_params, ref_grid):
    from smfdroplet.optics import dipole_potential
    n = droplet.density
    b2 = np.abs(dipole_potential(n, ref_params, ref_grid).b_field) ** 2
    peak = ref_grid.x_values[np.argmax(n)]
    assert abs(locate_extremum(b2, ref_grid, -1, prior_position=peak) - peak) <= 0.5 * ref_grid.dx


def test_record_problems():
    t = np.arange(5.0)
    good = TrajectoryRecord(t, [0, 0.1, 0.3, 0.6, 1.0], np.ones(5), np.ones(5))
    assert good.problems() == []
    jumpy = TrajectoryRecord(t, [0, 0.1, 3.5, 3.6, 3.7], np.ones(5), np.ones(5))
    assert any("jumped" in p for p in jumpy.problems())
    lost = TrajectoryRecord(t, [0, math.nan, 0.1, 0.1, 0.1], np.ones(5), np.ones(5))
    assert any("without" in p for p in lost.problems())
    backwards = TrajectoryRecord([0, 1, 1, 2, 3], np.zeros(5), np.ones(5), np.ones(5))
    assert any("increasing" in p for p in backwards.problems())
    with pytest.raises(ValueError):
        TrajectoryRecord(t, t, t, t, intensity_kind="sideways")
