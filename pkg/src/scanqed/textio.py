"""Text file formats: traces, point sets, fit reports, manifests.

Everything is plain diff-able text. Floats are written with ``repr`` so
values round-trip exactly and repeated runs are byte-identical.

Trace files are two-column CSV with a mandatory header line::

    frequency_GHz,transmission
    8.282,0.2012
    ...

Point files for the coupling fits follow the same shape with headers
``dx_um,g_GHz`` / ``y_um,g_GHz``, and vibration spectra use
``frequency_Hz,phase_rad``. Reports and manifests are ``key = value``
lines; manifests list every output file with its SHA-256 hash.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .jc_model import SpectrumTrace

__all__ = [
    "TextFormatError",
    "TRACE_HEADER",
    "read_trace",
    "write_trace",
    "read_columns",
    "write_columns",
    "format_fit_report",
    "write_key_values",
    "read_key_values",
    "file_sha256",
    "write_manifest",
]

TRACE_HEADER = "frequency_GHz,transmission"


class TextFormatError(ValueError):
    """Malformed text input; message carries file and line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_columns(path, expected_header: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column CSV with the given header line.

    Blank lines and '#' comments are skipped. Any malformed line raises
    :class:`TextFormatError` naming the line number.
    """
    path = Path(path)
    xs: list[float] = []
    ys: list[float] = []
    header_seen = False
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if not header_seen:
                if text != expected_header:
                    raise TextFormatError(
                        path, line_no, f"expected header {expected_header!r}, got {text!r}"
                    )
                header_seen = True
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise TextFormatError(path, line_no, f"expected 2 columns, got {len(parts)}")
            try:
                xs.append(float(parts[0]))
                ys.append(float(parts[1]))
            except ValueError as exc:
                raise TextFormatError(path, line_no, f"bad number: {exc}") from exc
    if not header_seen:
        raise TextFormatError(path, 1, "empty file (missing header)")
    return np.array(xs), np.array(ys)


def write_columns(path, header: str, xs, ys) -> None:
    lines = [header]
    lines += [f"{_fmt(float(x))},{_fmt(float(y))}" for x, y in zip(xs, ys, strict=True)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path) -> SpectrumTrace:
    """Read a transmission trace file (frequencies in GHz)."""
    freqs, values = read_columns(path, TRACE_HEADER)
    try:
        return SpectrumTrace(freqs, values)
    except ValueError as exc:
        raise TextFormatError(path, 1, f"invalid trace data: {exc}") from exc


def write_trace(trace: SpectrumTrace, path) -> None:
    write_columns(path, TRACE_HEADER, trace.freqs, trace.values)


def format_fit_report(result, extra: dict | None = None) -> str:
    """Render a FitResult as structured key-value text."""
    lines = [
        f"converged = {_fmt(result.converged)}",
        f"iterations = {result.iterations}",
        f"residual_norm = {_fmt(result.residual_norm)}",
        f"message = {result.message}",
    ]
    for name in result.params:
        lines.append(f"param.{name}.value = {_fmt(result.params[name])}")
        lines.append(f"param.{name}.sigma = {_fmt(result.sigmas.get(name, float('nan')))}")
    for key, val in (extra or {}).items():
        lines.append(f"{key} = {_fmt(val)}")
    return "\n".join(lines) + "\n"


def write_key_values(path, entries: dict) -> None:
    lines = [f"{k} = {_fmt(v)}" for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_key_values(path) -> dict[str, str]:
    out: dict[str, str] = {}
    path = Path(path)
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise TextFormatError(path, line_no, "expected 'key = value'")
            key, _, val = text.partition("=")
            out[key.strip()] = val.strip()
    return out


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, entries: dict, files, base_dir) -> None:
    """Write run metadata plus a SHA-256 line for every output file."""
    base = Path(base_dir)
    items = dict(entries)
    for f in sorted(Path(p) for p in files):
        rel = f.relative_to(base).as_posix()
        items[f"file.{rel}.sha256"] = file_sha256(f)
    write_key_values(path, items)
