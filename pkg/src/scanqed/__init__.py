"""Scanning-qubit circuit QED toolkit.

Predicts vacuum-Rabi transmission spectra from physical parameters, maps
coupling strength versus probe position from capacitance data, and
recovers the physical parameters from transmission traces by nonlinear
least squares.
"""

from .jc_model import (
    DressedModes,
    JcParams,
    SpectrumTrace,
    dispersive_shift,
    dressed_modes,
    transmission,
    transmission_peaks,
)
from .transmon import (
    SquidSpec,
    TransmonSolution,
    TransmonSpec,
    charging_energy,
    ej_of_flux,
    invert_ej,
    solve,
)
from .coupling_map import (
    CapacitanceGrid,
    CapCoeffs,
    GeometryParams,
    beta,
    g_of_position,
    interpolate,
    load_grid,
    mode_shape,
    save_grid,
    surrogate_grid,
)
from .fitting import (
    FitResult,
    FluxScanResult,
    fit_flux_scan,
    fit_gx,
    fit_gy,
    fit_spectrum,
    lm_minimize,
)
from .scan_sim import (
    FluxSweepTrace,
    ScanConfig,
    YScanSample,
    find_resonance,
    simulate_flux_sweep,
    simulate_y_scan,
    vibration_to_displacement,
)

__version__ = "0.1.0"

__all__ = [
    "JcParams",
    "DressedModes",
    "SpectrumTrace",
    "dressed_modes",
    "transmission",
    "dispersive_shift",
    "transmission_peaks",
    "TransmonSpec",
    "TransmonSolution",
    "SquidSpec",
    "solve",
    "invert_ej",
    "charging_energy",
    "ej_of_flux",
    "CapCoeffs",
    "CapacitanceGrid",
    "GeometryParams",
    "beta",
    "mode_shape",
    "interpolate",
    "g_of_position",
    "surrogate_grid",
    "load_grid",
    "save_grid",
    "FitResult",
    "FluxScanResult",
    "lm_minimize",
    "fit_spectrum",
    "fit_flux_scan",
    "fit_gx",
    "fit_gy",
    "ScanConfig",
    "FluxSweepTrace",
    "YScanSample",
    "simulate_flux_sweep",
    "find_resonance",
    "simulate_y_scan",
    "vibration_to_displacement",
    "__version__",
]
