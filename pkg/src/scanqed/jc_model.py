"""Forward model of the coupled qubit-resonator system.

Single-excitation dressed states of a qubit coupled to a resonator mode,
their spectral weights and linewidths, and the low-power transmission
curve built from a sum of complex Lorentzians.

Units: all frequencies and rates are plain (non-angular) frequencies in
GHz. Linewidths are FWHM. The qubit relaxation time ``t1`` is in
microseconds, so the matching decay rate is ``1e-3 / t1`` GHz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "JcParams",
    "DressedModes",
    "SpectrumTrace",
    "qubit_decay_rate",
    "dressed_modes",
    "complex_lorentzian",
    "transmission",
    "dispersive_shift",
    "transmission_peaks",
]


def qubit_decay_rate(t1_us: float) -> float:
    """Qubit energy decay rate 1/T1 in GHz for T1 given in microseconds."""
    return 1e-3 / t1_us


@dataclass(frozen=True)
class JcParams:
    """Physical parameters of the coupled system plus detector scale.

    Attributes
    ----------
    nu_r : resonator frequency (GHz)
    nu_q : qubit frequency (GHz)
    g : coupling strength (GHz)
    kappa : photon escape rate, resonator FWHM linewidth (GHz)
    t1 : qubit relaxation time (us)
    amp : detector amplitude scale A (dimensionless)
    bg : detector background B (dimensionless)
    """

    nu_r: float
    nu_q: float
    g: float
    kappa: float
    t1: float
    amp: float = 1.0
    bg: float = 0.0

    def __post_init__(self):
        if not (self.nu_r > 0):
            raise ValueError(f"nu_r must be > 0, got {self.nu_r}")
        if not (self.nu_q >= 0):
            raise ValueError(f"nu_q must be >= 0, got {self.nu_q}")
        if not (self.g >= 0):
            raise ValueError(f"g must be >= 0, got {self.g}")
        if not (self.kappa > 0):
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if not (self.t1 > 0):
            raise ValueError(f"t1 must be > 0, got {self.t1}")
        if not (self.amp > 0):
            raise ValueError(f"amp must be > 0, got {self.amp}")
        if not (self.bg >= 0):
            raise ValueError(f"bg must be >= 0, got {self.bg}")

    @property
    def detuning(self) -> float:
        """Qubit-resonator detuning nu_q - nu_r (GHz)."""
        return self.nu_q - self.nu_r

    @property
    def t1_rate(self) -> float:
        """1/T1 expressed in GHz."""
        return qubit_decay_rate(self.t1)


@dataclass(frozen=True)
class DressedModes:
    """Dressed-state peak frequencies, weights, and linewidths.

    ``w_plus``/``w_minus`` are the photon weights of the upper/lower
    mode; they sum to one. Linewidths are the decay rates of photon and
    qubit mixed with these weights: gamma = w*kappa + (1-w)/T1.
    """

    nu_plus: float
    nu_minus: float
    w_plus: float
    w_minus: float
    gamma_plus: float
    gamma_minus: float

    @property
    def splitting(self) -> float:
        return self.nu_plus - self.nu_minus


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SpectrumTrace:
    """A sampled transmission curve: frequency grid plus power values."""

    freqs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "freqs", _as_readonly(self.freqs))
        object.__setattr__(self, "values", _as_readonly(self.values))
        if self.freqs.ndim != 1 or self.values.ndim != 1:
            raise ValueError("freqs and values must be 1-D arrays")
        if self.freqs.size != self.values.size:
            raise ValueError(
                f"length mismatch: {self.freqs.size} freqs vs {self.values.size} values"
            )
        if self.freqs.size and not np.all(np.diff(self.freqs) > 0):
            raise ValueError("freqs must be strictly increasing")
        if self.values.size and not np.all(self.values >= 0):
            raise ValueError("values must be non-negative")

    def __len__(self) -> int:
        return self.freqs.size


def dressed_modes(p: JcParams) -> DressedModes:
    """Diagonalize the single-excitation manifold of the coupled system.

    Mode frequencies::

        nu_pm = (nu_r + nu_q +- sqrt(4 g^2 + Delta^2)) / 2,  Delta = nu_q - nu_r

    Photon weights ``w_pm = g^2 / (g^2 + u_pm^2)`` with
    ``u_pm = Delta/2 +- sqrt((Delta/2)^2 + g^2)``. The branch with the
    larger ``|u|`` is evaluated directly and the other taken as its
    complement, which is numerically stable for any detuning and makes
    w_plus + w_minus == 1 exact.

    Raises
    ------
    ValueError
        If g == 0 and Delta == 0 (dressed basis undefined).
    """
    delta = p.nu_q - p.nu_r
    if p.g == 0.0 and delta == 0.0:
        raise ValueError("degenerate input g = 0 and nu_q = nu_r: dressed basis undefined")

    half = 0.5 * delta
    s = math.hypot(half, p.g)
    center = 0.5 * (p.nu_r + p.nu_q)
    nu_plus = center + s
    nu_minus = center - s

    g2 = p.g * p.g
    if delta >= 0.0:
        u = half + s
        w_plus = g2 / (g2 + u * u)
        w_minus = 1.0 - w_plus
    else:
        u = half - s
        w_minus = g2 / (g2 + u * u)
        w_plus = 1.0 - w_minus

    r1 = p.t1_rate
    gamma_plus = w_plus * p.kappa + (1.0 - w_plus) * r1
    gamma_minus = w_minus * p.kappa + (1.0 - w_minus) * r1
    return DressedModes(nu_plus, nu_minus, w_plus, w_minus, gamma_plus, gamma_minus)


def complex_lorentzian(nu, nu0: float, gamma: float):
    """Complex Lorentzian l(nu, nu0, gamma) = (1 - i (nu - nu0)/(gamma/2))^-1."""
    nu = np.asarray(nu, dtype=float)
    return 1.0 / (1.0 - 1j * (nu - nu0) / (0.5 * gamma))


def transmission_values(p: JcParams, freqs) -> np.ndarray:
    """Transmitted power B + A |sum_pm w_pm l(nu, nu_pm, gamma_pm)|^2.

    The two Lorentzians are summed as complex amplitudes before taking
    the squared magnitude, so they interfere.
    """
    m = dressed_modes(p)
    amp = m.w_plus * complex_lorentzian(freqs, m.nu_plus, m.gamma_plus)
    amp += m.w_minus * complex_lorentzian(freqs, m.nu_minus, m.gamma_minus)
    return p.bg + p.amp * np.abs(amp) ** 2


def transmission(p: JcParams, freqs) -> SpectrumTrace:
    """Sample the low-power transmission curve on a strictly increasing grid."""
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size and not np.all(np.diff(freqs) > 0):
        raise ValueError("freqs must be strictly increasing")
    return SpectrumTrace(freqs, transmission_values(p, freqs))


def dispersive_shift(p: JcParams) -> float:
    """Far-detuned shift of the resonator-like mode, g^2 / (nu_r - nu_q).

    First-order approximation to the exact dressed-mode frequency: the
    resonator-like mode sits at nu_r + g^2/(nu_r - nu_q), pushed away
    from the qubit. Valid only for |Delta| > 3 g; the exact mode
    frequencies differ from this approximation by O(g^3/Delta^2).
    """
    delta = p.nu_q - p.nu_r
    if abs(delta) <= 3.0 * p.g:
        raise ValueError(
            f"dispersive approximation invalid: |Delta| = {abs(delta)} <= 3 g = {3.0 * p.g}"
        )
    return p.g * p.g / (p.nu_r - p.nu_q)


def _golden_max(f, a: float, b: float, tol: float) -> float:
    """Golden-section search for a local maximum of f on [a, b]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def transmission_peaks(p: JcParams, span_linewidths: float = 6.0) -> tuple[float, float]:
    """Locate the two local maxima of the transmission curve.

    Each dressed-mode peak is bracketed around its bare position and
    refined by golden-section search to a tolerance of kappa/1000.
    Returns (lower peak, upper peak) in GHz.
    """
    m = dressed_modes(p)
    tol = p.kappa / 1000.0

    def value(nu: float) -> float:
        return float(transmission_values(p, np.array([nu]))[0])

    mid = 0.5 * (m.nu_plus + m.nu_minus)
    half_reach = min(span_linewidths * max(m.gamma_minus, m.gamma_plus), m.splitting)
    lo = _golden_max(value, m.nu_minus - half_reach, min(m.nu_minus + half_reach, mid), tol)
    hi = _golden_max(value, max(m.nu_plus - half_reach, mid), m.nu_plus + half_reach, tol)
    return lo, hi
