"""Charge-basis transmon eigensolver and flux tuning.

The transmon Hamiltonian ``H = 4 E_C n^2 - E_J cos(phi)`` is diagonalized
in the charge basis |n>, n = -N..N, where it is a real symmetric
tridiagonal matrix: diagonal ``4 E_C n^2``, first off-diagonals
``-E_J/2`` (the cosine couples neighboring charge states). Offset charge
is fixed to zero, appropriate deep in the transmon regime.

Energies are stored as frequencies (GHz) so the qubit transition is
simply ``nu_q = E1 - E0`` with no Planck-constant bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import constants
from scipy.linalg import eigh_tridiagonal

if TYPE_CHECKING:  # pragma: no cover
    from .coupling_map import CapCoeffs

__all__ = [
    "TransmonSpec",
    "TransmonSolution",
    "SquidSpec",
    "solve",
    "invert_ej",
    "charging_energy",
    "ej_of_flux",
]

DEFAULT_CUTOFF = 20
_INVERT_MAX_ITER = 200


@dataclass(frozen=True)
class TransmonSpec:
    """Charging energy, Josephson energy (both GHz), and charge-basis cutoff."""

    ec: float
    ej: float
    cutoff: int = DEFAULT_CUTOFF

    def __post_init__(self):
        if not (self.ec > 0):
            raise ValueError(f"ec must be > 0, got {self.ec}")
        if not (self.ej >= 0):
            raise ValueError(f"ej must be >= 0, got {self.ej}")
        if self.cutoff < 5:
            raise ValueError(f"cutoff must be >= 5, got {self.cutoff}")


@dataclass(frozen=True)
class TransmonSolution:
    """Lowest eigenenergies (GHz), qubit frequency, and charge matrix element."""

    energies: tuple[float, ...]
    nu_q: float
    n01: float

    def __post_init__(self):
        if len(self.energies) < 3:
            raise ValueError("need at least 3 energy levels")
        if not all(b > a for a, b in zip(self.energies, self.energies[1:])):
            # eigh of a symmetric tridiagonal with nonzero off-diagonals has
            # simple spectrum; ties can only appear at ej == 0
            if any(b < a for a, b in zip(self.energies, self.energies[1:])):
                raise ValueError("energies must be ascending")

    @property
    def anharmonicity(self) -> float:
        """(E2 - E1) - (E1 - E0), negative for a transmon."""
        e0, e1, e2 = self.energies[:3]
        return (e2 - e1) - (e1 - e0)


@dataclass(frozen=True)
class SquidSpec:
    """Two-junction loop: maximum Josephson energy and flux in units of Phi_0."""

    ej_max: float
    flux: float = 0.0

    def __post_init__(self):
        if not (self.ej_max > 0):
            raise ValueError(f"ej_max must be > 0, got {self.ej_max}")


def _eig_lowest(ec: float, ej: float, cutoff: int, k: int = 3):
    n = np.arange(-cutoff, cutoff + 1, dtype=float)
    diag = 4.0 * ec * n * n
    if ej == 0.0:
        order = np.argsort(diag, kind="stable")[:k]
        vecs = np.zeros((n.size, k))
        vecs[order, np.arange(k)] = 1.0
        return diag[order], vecs, n
    off = np.full(n.size - 1, -0.5 * ej)
    try:
        vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(
            f"eigensolve failed for ec={ec}, ej={ej}, cutoff={cutoff}: "
            f"diagonal range [{diag.min()}, {diag.max()}], off-diagonal {off[0]}"
        ) from exc
    return vals, vecs, n


def solve(spec: TransmonSpec) -> TransmonSolution:
    """Diagonalize the transmon and evaluate n01 = |<0| n |1>|.

    The charge-basis cutoff doubles automatically for E_J/E_C > 100,
    where the wavefunction spreads over more charge states.
    """
    cutoff = spec.cutoff
    if spec.ej > 100.0 * spec.ec:
        cutoff = max(cutoff, 2 * DEFAULT_CUTOFF)
    vals, vecs, n = _eig_lowest(spec.ec, spec.ej, cutoff)
    n01 = abs(float(vecs[:, 0] @ (n * vecs[:, 1])))
    return TransmonSolution(
        energies=tuple(float(v) for v in vals),
        nu_q=float(vals[1] - vals[0]),
        n01=n01,
    )


def nu_q_of(ec: float, ej: float, cutoff: int = DEFAULT_CUTOFF) -> float:
    """Qubit transition frequency E1 - E0 for given energies (GHz)."""
    return solve(TransmonSpec(ec=ec, ej=ej, cutoff=cutoff)).nu_q


def invert_ej(ec: float, nu_q_target: float, cutoff: int = DEFAULT_CUTOFF) -> float:
    """Solve nu_q(ec, ej) = nu_q_target for ej by bracketed bisection.

    nu_q is strictly increasing in ej with floor 4*ec as ej -> 0, so any
    target above the floor has a unique solution. The initial bracket
    comes from the asymptotic relation nu_q ~ sqrt(8 ej ec) - ec.
    """
    if not (nu_q_target > 0):
        raise ValueError(f"nu_q_target must be > 0, got {nu_q_target}")
    floor = 4.0 * ec
    if nu_q_target <= floor:
        raise ValueError(
            f"target nu_q = {nu_q_target} GHz not achievable: "
            f"nu_q(ej -> 0) floor is 4*ec = {floor} GHz"
        )
    # asymptotic guess, then expand to a sign-changing bracket
    guess = (nu_q_target + ec) ** 2 / (8.0 * ec)
    lo, hi = 0.0, max(2.0 * guess, 8.0 * ec)
    for _ in range(60):
        if nu_q_of(ec, hi, cutoff) >= nu_q_target:
            break
        hi *= 2.0
    else:
        raise ValueError(f"could not bracket ej for nu_q = {nu_q_target} GHz")
    for _ in range(_INVERT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if nu_q_of(ec, mid, cutoff) < nu_q_target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(hi, 1.0):
            break
    ej = 0.5 * (lo + hi)
    return ej


def charging_energy(cap: "CapCoeffs") -> float:
    """Charging energy E_C = e^2 / (2 C_Sigma) as a frequency in GHz.

    The total capacitance combines the direct inter-island capacitance
    with the series combination of each island's summed capacitance to
    pin and ground::

        C_Sigma = C_ab + (1/C_a_sigma + 1/C_b_sigma)^-1

    Capacitances are in fF.
    """
    ca = cap.c_a_sigma
    cb = cap.c_b_sigma
    if ca <= 0 or cb <= 0:
        raise ValueError("island capacitance sums must be positive")
    c_sigma_ff = cap.c_ab + 1.0 / (1.0 / ca + 1.0 / cb)
    if c_sigma_ff <= 0:
        raise ValueError("total capacitance must be positive")
    c_sigma = c_sigma_ff * 1e-15
    return constants.e**2 / (2.0 * c_sigma) / constants.h / 1e9


def ej_of_flux(s: SquidSpec) -> float:
    """Effective Josephson energy ej_max |cos(pi flux)| of a symmetric SQUID."""
    return s.ej_max * abs(math.cos(math.pi * s.flux))
