"""Condensate droplets under single-mirror optical feedback, and acceleration sensing with them."""
from .analysis import (DropletFit, PhysicalAnchors, critical_wavenumber, fit_gaussian,
                       heating_budget, predicted_width, pump_threshold, to_physical)
from .dynamics import (EvolutionConfig, Wavefunction, evolve, imaginary_time_ground_state,
                       split_step)
from .grid import SpectralGrid, from_spectrum, make_grid, to_spectrum
from .optics import (OpticalFields, SystemParams, backward_field, dipole_potential,
                     transmitted_field)
from .tracking import TrajectoryRecord, locate_extremum

__version__ = "0.1.0"
