"""Unit-suffixed scalar parsing for the CLI and config files.

Dimensioned quantities must carry an explicit unit suffix ("20MHz",
"8.342GHz", "2.6us", "3330um"); bare numbers are rejected so a missing
unit can never silently introduce a factor of 1000. Canonical internal
units are GHz, us, and um. Slopes combine a frequency and a length unit
("0.2MHz/um").
"""

from __future__ import annotations

import re

__all__ = [
    "UnitError",
    "parse_frequency",
    "parse_time",
    "parse_length",
    "parse_slope",
]


class UnitError(ValueError):
    pass


_NUMBER_RE = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(\S*)\s*$")

# factors to the canonical unit
_FREQ = {"Hz": 1e-9, "kHz": 1e-6, "MHz": 1e-3, "GHz": 1.0}
_TIME = {"ns": 1e-3, "us": 1.0, "µs": 1.0, "ms": 1e3, "s": 1e6}
_LENGTH = {"nm": 1e-3, "um": 1.0, "µm": 1.0, "mm": 1e3, "m": 1e6}


def _split(text: str) -> tuple[float, str]:
    if not isinstance(text, str):
        raise UnitError(f"expected a unit-suffixed string, got {text!r}")
    m = _NUMBER_RE.match(text)
    if not m:
        raise UnitError(f"cannot parse quantity {text!r}")
    return float(m.group(1)), m.group(2)


def _parse(text: str, table: dict[str, float], kind: str, canonical: str) -> float:
    value, unit = _split(text)
    if not unit:
        raise UnitError(
            f"{text!r} has no unit; {kind} values need an explicit suffix "
            f"({', '.join(sorted(table))})"
        )
    if unit not in table:
        raise UnitError(f"unknown {kind} unit {unit!r} in {text!r} (canonical: {canonical})")
    return value * table[unit]


def parse_frequency(text: str) -> float:
    """Parse a frequency like '20MHz' into GHz."""
    return _parse(text, _FREQ, "frequency", "GHz")


def parse_time(text: str) -> float:
    """Parse a time like '2.6us' into microseconds."""
    return _parse(text, _TIME, "time", "us")


def parse_length(text: str) -> float:
    """Parse a length like '3330um' into micrometers."""
    return _parse(text, _LENGTH, "length", "um")


def parse_slope(text: str) -> float:
    """Parse a frequency-per-length slope like '0.2MHz/um' into GHz/um."""
    if not isinstance(text, str) or "/" not in text:
        raise UnitError(f"slope must look like '<value><freq unit>/<length unit>', got {text!r}")
    num, _, den = text.partition("/")
    value = parse_frequency(num)
    den = den.strip()
    if den not in _LENGTH:
        raise UnitError(f"unknown length unit {den!r} in slope {text!r}")
    return value / _LENGTH[den]
