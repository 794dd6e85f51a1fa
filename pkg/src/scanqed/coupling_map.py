"""Coupling strength versus probe position.

The coupling of the scanning qubit to the resonator factorizes into the
sinusoidal resonator mode shape along x, a voltage-division factor beta
built from five capacitance coefficients at the lateral/vertical
position (y, z), and the transmon charge matrix element n01::

    g(x, y, z) = 2 e sqrt(2 Z_c / h) m(x) nu_r beta(y, z) n01(y, z)

The elementary-charge factor makes the expression carry frequency units;
with Z_c = 50 Ohm the dimensionless prefactor 2 e sqrt(2 Z_c / h) is
about 0.1245, which sets the hundreds-of-MHz scale of the measured
coupling. n01 is evaluated with the qubit tuned to the resonator
(E_J inverted so that nu_q = nu_r).

Capacitances are in fF, positions in um, frequencies in GHz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import constants

from . import transmon

__all__ = [
    "CapCoeffs",
    "CapacitanceGrid",
    "GeometryParams",
    "GridFormatError",
    "beta",
    "mode_shape",
    "interpolate",
    "g_of_position",
    "surrogate_grid",
    "load_grid",
    "save_grid",
]

COEFF_NAMES = ("c_ap", "c_bp", "c_ag", "c_bg", "c_ab")


@dataclass(frozen=True)
class CapCoeffs:
    """Capacitances (fF) of islands a, b to center pin p, ground g, and each other."""

    c_ap: float
    c_bp: float
    c_ag: float
    c_bg: float
    c_ab: float

    def __post_init__(self):
        for name in COEFF_NAMES:
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")

    @property
    def c_a_sigma(self) -> float:
        return self.c_ap + self.c_ag

    @property
    def c_b_sigma(self) -> float:
        return self.c_bp + self.c_bg

    def as_array(self) -> np.ndarray:
        return np.array([self.c_ap, self.c_bp, self.c_ag, self.c_bg, self.c_ab])


@dataclass(frozen=True)
class GeometryParams:
    """Resonator geometry: length (um), x offset (um), impedance (Ohm), frequency (GHz)."""

    l_r: float
    nu_r: float
    x0: float = 0.0
    z_c: float = 50.0

    def __post_init__(self):
        if not (self.l_r > 0):
            raise ValueError(f"l_r must be > 0, got {self.l_r}")
        if not (self.z_c > 0):
            raise ValueError(f"z_c must be > 0, got {self.z_c}")
        if not (self.nu_r > 0):
            raise ValueError(f"nu_r must be > 0, got {self.nu_r}")


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CapacitanceGrid:
    """Five capacitance coefficients tabulated on a rectangular (y, z) grid.

    ``coeffs`` has shape (ny, nz, 5) with the last axis ordered as
    ``COEFF_NAMES``. Axes are strictly ascending, positions in um.
    """

    y_axis: np.ndarray
    z_axis: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y_axis", _readonly(self.y_axis))
        object.__setattr__(self, "z_axis", _readonly(self.z_axis))
        object.__setattr__(self, "coeffs", _readonly(self.coeffs))
        if self.y_axis.ndim != 1 or self.y_axis.size < 2:
            raise ValueError("y_axis must be 1-D with at least 2 points")
        if self.z_axis.ndim != 1 or self.z_axis.size < 2:
            raise ValueError("z_axis must be 1-D with at least 2 points")
        if not np.all(np.diff(self.y_axis) > 0):
            raise ValueError("y_axis must be strictly ascending")
        if not np.all(np.diff(self.z_axis) > 0):
            raise ValueError("z_axis must be strictly ascending")
        expect = (self.y_axis.size, self.z_axis.size, 5)
        if self.coeffs.shape != expect:
            raise ValueError(f"coeffs shape {self.coeffs.shape} != {expect}")
        if not np.all(self.coeffs > 0):
            raise ValueError("all capacitance coefficients must be > 0")

    def at(self, iy: int, iz: int) -> CapCoeffs:
        """Stored coefficients at grid node (iy, iz)."""
        return CapCoeffs(*self.coeffs[iy, iz])

    @property
    def y_bounds(self) -> tuple[float, float]:
        return float(self.y_axis[0]), float(self.y_axis[-1])

    @property
    def z_bounds(self) -> tuple[float, float]:
        return float(self.z_axis[0]), float(self.z_axis[-1])


def beta(c: CapCoeffs) -> float:
    """Voltage-division factor from the five capacitance coefficients.

    beta = |C_ap C_bg - C_bp C_ag| / (C_ab (C_aS + C_bS) + C_aS C_bS)
    with C_xS = C_xp + C_xg. Lies in [0, 1) for positive inputs and
    vanishes for an island-symmetric configuration.
    """
    num = abs(c.c_ap * c.c_bg - c.c_bp * c.c_ag)
    den = c.c_ab * (c.c_a_sigma + c.c_b_sigma) + c.c_a_sigma * c.c_b_sigma
    return num / den


def mode_shape(x: float, geom: GeometryParams) -> float:
    """Sinusoidal mode-shape factor m(x) = sin(pi x / l_r) on [0, l_r]."""
    if not (0.0 <= x <= geom.l_r):
        raise ValueError(f"x = {x} um outside resonator span [0, {geom.l_r}] um")
    return math.sin(math.pi * x / geom.l_r)


def _cell_index(axis: np.ndarray, v: float, name: str) -> int:
    if not (axis[0] <= v <= axis[-1]):
        raise ValueError(
            f"{name} = {v} um outside grid bounds [{axis[0]}, {axis[-1]}] um "
            "(no extrapolation)"
        )
    i = int(np.searchsorted(axis, v, side="right")) - 1
    return min(max(i, 0), axis.size - 2)


def interpolate(grid: CapacitanceGrid, y: float, z: float) -> CapCoeffs:
    """Bilinear interpolation of each coefficient at (y, z).

    Queries exactly on a grid node return the stored values. Points
    outside the grid raise ValueError; capacitance models diverge at
    small z, so extrapolation is never attempted.
    """
    iy = _cell_index(grid.y_axis, y, "y")
    iz = _cell_index(grid.z_axis, z, "z")
    t = (y - grid.y_axis[iy]) / (grid.y_axis[iy + 1] - grid.y_axis[iy])
    u = (z - grid.z_axis[iz]) / (grid.z_axis[iz + 1] - grid.z_axis[iz])
    c = grid.coeffs
    vals = (
        (1.0 - t) * (1.0 - u) * c[iy, iz]
        + t * (1.0 - u) * c[iy + 1, iz]
        + (1.0 - t) * u * c[iy, iz + 1]
        + t * u * c[iy + 1, iz + 1]
    )
    return CapCoeffs(*vals)


def coupling_prefactor(z_c: float) -> float:
    """Dimensionless 2 e sqrt(2 Z_c / h); about 0.1245 for Z_c = 50 Ohm."""
    return 2.0 * constants.e * math.sqrt(2.0 * z_c / constants.h)


def g_of_position(
    x: float,
    y: float,
    z: float,
    grid: CapacitanceGrid,
    geom: GeometryParams,
    cutoff: int = transmon.DEFAULT_CUTOFF,
) -> float:
    """Coupling strength (GHz) at probe position (x, y, z).

    Interpolates the capacitance grid, derives E_C, inverts E_J so the
    qubit sits at nu_r, and combines mode shape, beta, and n01.
    """
    c = interpolate(grid, y, z)
    ec = transmon.charging_energy(c)
    try:
        ej = transmon.invert_ej(ec, geom.nu_r, cutoff)
    except ValueError as exc:
        raise ValueError(f"cannot tune qubit to nu_r at (y={y}, z={z}): {exc}") from exc
    sol = transmon.solve(transmon.TransmonSpec(ec=ec, ej=ej, cutoff=cutoff))
    return float(
        coupling_prefactor(geom.z_c) * mode_shape(x, geom) * geom.nu_r * beta(c) * sol.n01
    )


# Surrogate generator constants. The lateral profile and the three
# z-divisors are arbitrary smooth shapes; _SCALE and _PIN_AMP are
# calibrated so the default geometry reproduces device-scale numbers at
# z = 11 um (E_C near 0.388 GHz, peak coupling near 0.185 GHz for
# nu_r = 7.6 GHz). Not a physical capacitance model; for tests and demos.
_SCALE = 1.737927396975797
_PIN_BASE = 0.8
_PIN_AMP = 49.98560365171998
_GND_BASE = 9.0
_GND_DIP = 4.0
_GND_DIP_FRAC = 0.6
_ISLAND_CAP = 26.0
_Z_PIN = 12.0
_Z_GND = 18.0
_Z_ISLAND = 60.0


def surrogate_grid(
    island_width: float = 40.0,
    island_gap: float = 60.0,
    pin_width: float = 21.0,
    y_range: tuple[float, float] = (-150.0, 150.0),
    z_range: tuple[float, float] = (5.0, 25.0),
    pitch: float = 1.0,
    tilt_deg: float = 0.0,
) -> CapacitanceGrid:
    """Generate a smooth, mirror-symmetric synthetic capacitance grid.

    Replaces out-of-scope finite-element electromagnetics for testing.
    Each island couples to the center pin through a Gaussian lateral
    profile peaked when that island sits over the pin (offset
    (island_gap + island_width)/2 from the qubit center), with the
    complementary dip in its ground capacitance. All coefficients decay
    monotonically with height z. By construction c_ap(y, z) = c_bp(-y, z)
    exactly, so the derived coupling is mirror-symmetric in y with two
    maxima and an exact zero at y = 0.

    ``tilt_deg`` mimics an in-plane misalignment between the chips by
    widening the lateral profile and trimming its amplitude; it exists
    only for sensitivity studies of the height fit.
    """
    if island_width <= 0 or island_gap <= 0 or pin_width <= 0 or pitch <= 0:
        raise ValueError("all surrogate dimensions must be positive")
    y0, y1 = y_range
    z0, z1 = z_range
    if not (y1 > y0) or not (z1 > z0):
        raise ValueError("ranges must be nonempty")
    if z0 <= 0:
        raise ValueError("z_range must be positive (capacitances diverge at z = 0)")

    y_axis = y0 + pitch * np.arange(int(round((y1 - y0) / pitch)) + 1)
    z_axis = z0 + pitch * np.arange(int(round((z1 - z0) / pitch)) + 1)

    offset = 0.5 * (island_gap + island_width)
    width = 0.5 * (island_width + pin_width)
    ct = math.cos(math.radians(tilt_deg))
    width = width / ct
    amp = ct**4

    yy = y_axis[:, None]
    zz = z_axis[None, :]
    prof_a = np.exp(-(((yy - offset) / width) ** 2))
    prof_b = np.exp(-(((yy + offset) / width) ** 2))
    k_pin = 1.0 / (1.0 + zz / _Z_PIN)
    k_gnd = 1.0 / (1.0 + zz / _Z_GND)
    k_isl = 1.0 / (1.0 + zz / _Z_ISLAND)

    c_ap = _SCALE * (_PIN_BASE + amp * _PIN_AMP * prof_a) * k_pin
    c_bp = _SCALE * (_PIN_BASE + amp * _PIN_AMP * prof_b) * k_pin
    c_ag = _SCALE * (_GND_BASE + _GND_DIP * (1.0 - _GND_DIP_FRAC * amp * prof_a)) * k_gnd
    c_bg = _SCALE * (_GND_BASE + _GND_DIP * (1.0 - _GND_DIP_FRAC * amp * prof_b)) * k_gnd
    c_ab = _SCALE * _ISLAND_CAP * np.broadcast_to(k_isl, c_ap.shape)

    coeffs = np.stack([c_ap, c_bp, c_ag, c_bg, c_ab], axis=-1)
    return CapacitanceGrid(y_axis=y_axis, z_axis=z_axis, coeffs=coeffs)


class GridFormatError(ValueError):
    """Raised for malformed grid files; carries the offending line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


_HEADER_KEYS = ("y_min", "y_pitch", "y_count", "z_min", "z_pitch", "z_count", "units")


def save_grid(grid: CapacitanceGrid, path) -> None:
    """Write a grid file: one header line, then one data line per node.

    Requires uniform axis pitch (the file format stores min/pitch/count).
    Data lines hold the five coefficients in fF, comma separated, in
    ``COEFF_NAMES`` order, row-major in y then z (z varies fastest).
    """
    dy = np.diff(grid.y_axis)
    dz = np.diff(grid.z_axis)
    if not (np.allclose(dy, dy[0], rtol=1e-9) and np.allclose(dz, dz[0], rtol=1e-9)):
        raise ValueError("grid file format requires uniform axis pitch")
    lines = [
        f"y_min={float(grid.y_axis[0])!r} y_pitch={float(dy[0])!r} y_count={grid.y_axis.size} "
        f"z_min={float(grid.z_axis[0])!r} z_pitch={float(dz[0])!r} z_count={grid.z_axis.size} units=um,fF"
    ]
    for iy in range(grid.y_axis.size):
        for iz in range(grid.z_axis.size):
            lines.append(",".join(repr(float(v)) for v in grid.coeffs[iy, iz]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid(path) -> CapacitanceGrid:
    """Parse a grid file written by :func:`save_grid`.

    Blank lines and lines starting with '#' are ignored. Any malformed
    line raises :class:`GridFormatError` naming the line number.
    """
    path = Path(path)
    header = None
    header_line = 0
    rows: list[tuple[int, str]] = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if header is None:
                header = text
                header_line = line_no
            else:
                rows.append((line_no, text))
    if header is None:
        raise GridFormatError(path, 1, "missing header line")

    fields: dict[str, str] = {}
    for token in header.split():
        if "=" not in token:
            raise GridFormatError(path, header_line, f"bad header token {token!r}")
        key, _, val = token.partition("=")
        fields[key] = val
    missing = [k for k in _HEADER_KEYS if k not in fields]
    if missing:
        raise GridFormatError(path, header_line, f"header missing keys {missing}")
    unknown = [k for k in fields if k not in _HEADER_KEYS]
    if unknown:
        raise GridFormatError(path, header_line, f"unknown header keys {unknown}")
    if fields["units"] != "um,fF":
        raise GridFormatError(path, header_line, f"unsupported units {fields['units']!r}")
    try:
        y_min, y_pitch = float(fields["y_min"]), float(fields["y_pitch"])
        z_min, z_pitch = float(fields["z_min"]), float(fields["z_pitch"])
        y_count, z_count = int(fields["y_count"]), int(fields["z_count"])
    except ValueError as exc:
        raise GridFormatError(path, header_line, f"bad header value: {exc}") from exc
    if y_count < 2 or z_count < 2 or y_pitch <= 0 or z_pitch <= 0:
        raise GridFormatError(path, header_line, "axis counts must be >= 2 and pitches > 0")

    expected = y_count * z_count
    if len(rows) != expected:
        last = rows[-1][0] if rows else header_line
        raise GridFormatError(
            path, last, f"expected {expected} data lines, found {len(rows)}"
        )
    coeffs = np.empty((y_count, z_count, 5))
    for k, (line_no, text) in enumerate(rows):
        parts = text.split(",")
        if len(parts) != 5:
            raise GridFormatError(path, line_no, f"expected 5 comma-separated values, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise GridFormatError(path, line_no, f"bad capacitance value: {exc}") from exc
        if any(v <= 0 for v in vals):
            raise GridFormatError(path, line_no, "capacitances must be > 0")
        coeffs[k // z_count, k % z_count] = vals

    y_axis = y_min + y_pitch * np.arange(y_count)
    z_axis = z_min + z_pitch * np.arange(z_count)
    return CapacitanceGrid(y_axis=y_axis, z_axis=z_axis, coeffs=coeffs)
