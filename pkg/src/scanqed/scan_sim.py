"""Synthetic measurement campaigns and the vibration conversion chain.

Reproduces the experimental protocols end to end: sweep the SQUID flux
while monitoring single-frequency transmission to locate the
qubit-resonator resonance, record transmission spectra on resonance at a
series of probe positions, and convert transmitted-phase noise into an
effective displacement noise of the probe.

Randomness is fully deterministic: every scan position owns a random
stream derived from (master seed, position index), so serial and
parallel execution produce identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import coupling_map, jc_model, transmon

__all__ = [
    "ScanConfig",
    "FluxSweepTrace",
    "YScanSample",
    "simulate_flux_sweep",
    "find_resonance",
    "resonant_flux",
    "simulate_y_scan",
    "vibration_to_displacement",
]


@dataclass(frozen=True)
class ScanConfig:
    """Everything needed to simulate a scan campaign.

    ``noise_frac`` is the fractional multiplicative detector noise on
    transmitted power. ``encoder_sigma`` (um) and ``encoder_drift``
    (um per 100 um traveled) model the position readout: recorded
    positions drift linearly with distance traveled and carry white
    noise, while the true positions stay exact.
    """

    geom: coupling_map.GeometryParams
    grid: coupling_map.CapacitanceGrid
    squid: transmon.SquidSpec
    kappa: float
    t1: float
    ec_override: float | None = None
    noise_frac: float = 0.0
    encoder_sigma: float = 0.0
    encoder_drift: float = 0.0
    amp: float = 1.0
    bg: float = 0.0

    def __post_init__(self):
        if self.noise_frac < 0:
            raise ValueError(f"noise_frac must be >= 0, got {self.noise_frac}")
        if self.encoder_sigma < 0:
            raise ValueError(f"encoder_sigma must be >= 0, got {self.encoder_sigma}")
        if not (self.kappa > 0 and self.t1 > 0):
            raise ValueError("kappa and t1 must be positive")


@dataclass(frozen=True)
class FluxSweepTrace:
    """Transmission at a fixed probe frequency versus SQUID flux."""

    fluxes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        fl = np.array(self.fluxes, dtype=float)
        va = np.array(self.values, dtype=float)
        fl.setflags(write=False)
        va.setflags(write=False)
        object.__setattr__(self, "fluxes", fl)
        object.__setattr__(self, "values", va)
        if fl.shape != va.shape or fl.ndim != 1:
            raise ValueError("fluxes and values must be 1-D arrays of equal length")
        if fl.size >= 2 and not np.all(np.diff(fl) > 0):
            raise ValueError("fluxes must be strictly increasing")


@dataclass(frozen=True)
class YScanSample:
    """One y position of a scan: recorded trace plus ground truth."""

    y: float
    y_recorded: float
    flux: float
    trace: jc_model.SpectrumTrace
    g_true: float
    nu_q_true: float


def _ec_at(cfg: ScanConfig, y: float, z: float) -> float:
    if cfg.ec_override is not None:
        return cfg.ec_override
    return transmon.charging_energy(coupling_map.interpolate(cfg.grid, y, z))


def _jc_at(cfg: ScanConfig, position, flux: float) -> jc_model.JcParams:
    x, y, z = position
    ec = _ec_at(cfg, y, z)
    ej = transmon.ej_of_flux(replace(cfg.squid, flux=flux))
    nu_q = transmon.solve(transmon.TransmonSpec(ec=ec, ej=ej)).nu_q
    g = coupling_map.g_of_position(x, y, z, cfg.grid, cfg.geom)
    return jc_model.JcParams(
        nu_r=cfg.geom.nu_r, nu_q=nu_q, g=g, kappa=cfg.kappa, t1=cfg.t1,
        amp=cfg.amp, bg=cfg.bg,
    )


def simulate_flux_sweep(
    cfg: ScanConfig,
    position: tuple[float, float, float],
    flux_range: tuple[float, float] = (0.0, 0.5),
    steps: int = 481,
) -> FluxSweepTrace:
    """Monitor transmission at nu_r while sweeping the SQUID flux.

    At each flux the Josephson energy follows the SQUID modulation, the
    qubit frequency is re-solved, and the coupled-system transmission is
    evaluated at the single frequency nu_r. Dips mark fluxes where the
    qubit crosses the resonator.
    """
    if steps < 2:
        raise ValueError(f"need at least 2 sweep steps, got {steps}")
    fluxes = np.linspace(flux_range[0], flux_range[1], steps)
    x, y, z = position
    ec = _ec_at(cfg, y, z)
    g = coupling_map.g_of_position(x, y, z, cfg.grid, cfg.geom)
    values = np.empty(steps)
    for i, flux in enumerate(fluxes):
        ej = transmon.ej_of_flux(replace(cfg.squid, flux=float(flux)))
        nu_q = transmon.solve(transmon.TransmonSpec(ec=ec, ej=ej)).nu_q
        if g == 0.0 and nu_q == cfg.geom.nu_r:
            # uncoupled and exactly degenerate: bare resonator response
            values[i] = cfg.bg + cfg.amp
            continue
        p = jc_model.JcParams(
            nu_r=cfg.geom.nu_r, nu_q=nu_q, g=g, kappa=cfg.kappa, t1=cfg.t1,
            amp=cfg.amp, bg=cfg.bg,
        )
        values[i] = jc_model.transmission_values(p, np.array([cfg.geom.nu_r]))[0]
    return FluxSweepTrace(fluxes=fluxes, values=values)


def find_resonance(trace: FluxSweepTrace, dip_fraction: float = 0.5) -> float:
    """Flux of the deepest transmission dip, parabolically refined.

    A dip must fall below ``dip_fraction`` times the trace median to
    count. Ties go to the lower flux. Raises ValueError when no point
    passes the threshold (flat trace or coupling too weak).
    """
    vals = trace.values
    if vals.size < 3:
        raise ValueError("sweep too short to locate a dip")
    threshold = dip_fraction * float(np.median(vals))
    if not np.any(vals < threshold):
        raise ValueError(
            f"no transmission dip below {dip_fraction} x median; resonance not found"
        )
    i = int(np.argmin(vals))  # argmin takes the first (lowest-flux) minimum on ties
    if 0 < i < vals.size - 1:
        ym, y0, yp = vals[i - 1], vals[i], vals[i + 1]
        denom = ym - 2.0 * y0 + yp
        if denom > 0:
            shift = 0.5 * (ym - yp) / denom
            shift = float(np.clip(shift, -0.5, 0.5))
            step = trace.fluxes[i + 1] - trace.fluxes[i] if shift >= 0 else trace.fluxes[i] - trace.fluxes[i - 1]
            return float(trace.fluxes[i] + shift * step)
    return float(trace.fluxes[i])


def resonant_flux(cfg: ScanConfig, y: float, z: float) -> float:
    """Analytic flux that tunes nu_q to nu_r at (y, z), in [0, 0.5].

    Inverts the qubit spectrum for E_J and the SQUID modulation for
    flux. Used as the protocol bypass in unit tests and as a fallback
    when the coupling is too weak to produce a detectable dip.
    """
    ec = _ec_at(cfg, y, z)
    ej = transmon.invert_ej(ec, cfg.geom.nu_r)
    ratio = ej / cfg.squid.ej_max
    if ratio > 1.0:
        raise ValueError(
            f"required ej = {ej} GHz exceeds ej_max = {cfg.squid.ej_max} GHz"
        )
    return math.acos(ratio) / math.pi


def simulate_y_scan(
    cfg: ScanConfig,
    x: float,
    ys,
    z: float,
    freqs,
    seed: int = 0,
    flux_steps: int = 481,
    analytic_tuning: bool = False,
) -> list[YScanSample]:
    """Record an on-resonance transmission spectrum at each y position.

    At every position the qubit is tuned to the resonator by the
    single-frequency flux-sweep protocol (or analytically when
    ``analytic_tuning`` is set or no dip is detectable), then a spectrum
    is sampled on ``freqs`` with multiplicative detector noise. Encoder
    drift and noise perturb only the *recorded* y values.

    Each position uses an independent random stream derived from
    (seed, position index).
    """
    freqs = np.asarray(freqs, dtype=float)
    samples: list[YScanSample] = []
    traveled = 0.0
    prev_y = None
    for idx, y in enumerate(float(v) for v in ys):
        rng = np.random.default_rng(np.random.SeedSequence((seed, idx)))
        g = coupling_map.g_of_position(x, y, z, cfg.grid, cfg.geom)
        use_analytic = analytic_tuning
        flux = None
        if not use_analytic:
            sweep = simulate_flux_sweep(cfg, (x, y, z), steps=flux_steps)
            try:
                flux = find_resonance(sweep)
            except ValueError:
                use_analytic = True  # dip too shallow; fall back
        if use_analytic:
            flux = resonant_flux(cfg, y, z)
        p = _jc_at(cfg, (x, y, z), flux)
        values = jc_model.transmission_values(p, freqs)
        if cfg.noise_frac > 0:
            values = values * (1.0 + cfg.noise_frac * rng.standard_normal(values.size))
            values = np.clip(values, 0.0, None)

        if prev_y is not None:
            traveled += abs(y - prev_y)
        prev_y = y
        y_rec = y + cfg.encoder_drift * traveled / 100.0
        if cfg.encoder_sigma > 0:
            y_rec += cfg.encoder_sigma * rng.standard_normal()

        samples.append(
            YScanSample(
                y=y,
                y_recorded=float(y_rec),
                flux=float(flux),
                trace=jc_model.SpectrumTrace(freqs, values),
                g_true=float(g),
                nu_q_true=p.nu_q,
            )
        )
    return samples


def simulate_flux_spectra(
    cfg: ScanConfig,
    position: tuple[float, float, float],
    fluxes,
    freqs,
    seed=0,
) -> list[tuple[float, jc_model.SpectrumTrace]]:
    """Transmission spectra at a fixed position for several flux values.

    This is the raw material for the per-position flux-scan fit: a few
    spectra taken as the qubit steps through resonance. Each flux value
    gets its own random stream derived from (seed, flux index).
    """
    freqs = np.asarray(freqs, dtype=float)
    out: list[tuple[float, jc_model.SpectrumTrace]] = []
    for i, flux in enumerate(float(v) for v in fluxes):
        rng = np.random.default_rng(np.random.SeedSequence(_as_entropy(seed) + (i,)))
        p = _jc_at(cfg, position, flux)
        values = jc_model.transmission_values(p, freqs)
        if cfg.noise_frac > 0:
            values = values * (1.0 + cfg.noise_frac * rng.standard_normal(values.size))
            values = np.clip(values, 0.0, None)
        out.append((flux, jc_model.SpectrumTrace(freqs, values)))
    return out


def _as_entropy(seed) -> tuple:
    if isinstance(seed, tuple):
        return seed
    return (int(seed),)


def vibration_to_displacement(phase_noise, kappa: float, slope: float) -> np.ndarray:
    """Convert a transmitted-phase noise spectrum to displacement noise.

    At line center the Lorentzian phase responds to frequency as
    dphi/dnu = 2/kappa, so each bin of phase noise maps to frequency
    noise ``phase * kappa / 2`` and then to displacement through the
    resonator's frequency-versus-height slope: ``phase * (kappa/2) /
    |slope|``. Units: kappa in GHz, slope in GHz/um, displacement in um.
    """
    if not (kappa > 0):
        raise ValueError(f"kappa must be > 0, got {kappa}")
    if slope == 0:
        raise ValueError("dnu_r/dz slope must be nonzero")
    phase = np.asarray(phase_noise, dtype=float)
    return phase * (0.5 * kappa) / abs(slope)
