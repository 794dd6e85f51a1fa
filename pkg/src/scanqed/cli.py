"""Command-line front end: reproducible simulation and fitting runs.

Every command resolves its configuration up front, echoes it alongside
the results, and writes a manifest listing each output file with a
SHA-256 hash, so a run can be reproduced or audited from its output
directory alone. Given the same seed, reruns are byte-identical.

Dimensioned command-line values require unit suffixes (GHz/MHz, us, um);
bare numbers are accepted only for dimensionless quantities.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import coupling_map, fitting, jc_model, scan_sim, textio, transmon
from .units import UnitError, parse_frequency, parse_length, parse_slope, parse_time

__all__ = ["main"]


class _SeedAction(argparse.Action):
    """Stores the last --seed given, warning when it is repeated."""

    def __call__(self, parser, namespace, values, option_string=None):
        if getattr(namespace, "_seed_seen", False):
            print("warning: --seed given more than once; last value wins", file=sys.stderr)
        setattr(namespace, "_seed_seen", True)
        setattr(namespace, self.dest, values)


def _freq(text):
    try:
        return parse_frequency(text)
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _time(text):
    try:
        return parse_time(text)
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _length(text):
    try:
        return parse_length(text)
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _slope(text):
    try:
        return parse_slope(text)
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(args, keys) -> dict:
    return {f"config.{k}": getattr(args, k) for k in keys}


# ---------------------------------------------------------------- simulate

def cmd_simulate_spectrum(args) -> int:
    if args.points < 2:
        raise SystemExit2(f"--points must be >= 2 to define a frequency grid, got {args.points}")
    if not (args.fmax > args.fmin):
        raise SystemExit2(f"empty frequency grid: fmin {args.fmin} >= fmax {args.fmax} GHz")
    p = jc_model.JcParams(
        nu_r=args.nu_r, nu_q=args.nu_q, g=args.g, kappa=args.kappa,
        t1=args.t1, amp=args.amp, bg=args.bg,
    )
    freqs = np.linspace(args.fmin, args.fmax, args.points)
    trace = jc_model.transmission(p, freqs)
    if args.noise_frac > 0:
        rng = np.random.default_rng(args.seed)
        values = trace.values * (1.0 + args.noise_frac * rng.standard_normal(len(trace)))
        trace = jc_model.SpectrumTrace(freqs, np.clip(values, 0.0, None))

    keys = ("nu_r", "nu_q", "g", "kappa", "t1", "amp", "bg",
            "fmin", "fmax", "points", "noise_frac", "seed")
    if args.dry_run:
        print("dry run: config valid, no files written")
        return 0
    out = _out_dir(args)
    trace_path = out / "trace.csv"
    textio.write_trace(trace, trace_path)
    entries = {"command": "simulate-spectrum", **_echo_config(args, keys)}
    textio.write_manifest(out / "manifest.txt", entries, [trace_path], out)
    print(f"wrote {trace_path}")
    return 0


def cmd_fit_spectrum(args) -> int:
    trace = textio.read_trace(args.trace)
    result = fitting.fit_spectrum(trace, t1_fixed=args.t1)
    report = textio.format_fit_report(result)
    if args.dry_run:
        print(report, end="")
        return 0 if result.converged else 1
    out = _out_dir(args)
    report_path = out / "fit_report.txt"
    report_path.write_text(report)
    entries = {
        "command": "fit-spectrum",
        "config.trace": str(args.trace),
        "config.t1": args.t1,
    }
    textio.write_manifest(out / "manifest.txt", entries, [report_path], out)
    print(report, end="")
    if not result.converged:
        print(f"fit did not converge: {result.message}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- flux sweep

def _load_or_surrogate_grid(grid_arg):
    if grid_arg is None:
        return coupling_map.surrogate_grid()
    return coupling_map.load_grid(grid_arg)


def cmd_flux_sweep(args) -> int:
    if args.steps < 2:
        raise SystemExit2(f"--steps must be >= 2, got {args.steps}")
    grid = _load_or_surrogate_grid(args.grid)
    geom = coupling_map.GeometryParams(l_r=args.lr, nu_r=args.nu_r, z_c=args.z_c)
    cfg = scan_sim.ScanConfig(
        geom=geom, grid=grid, squid=transmon.SquidSpec(ej_max=args.ej_max),
        kappa=args.kappa, t1=args.t1, amp=args.amp, bg=args.bg,
    )
    trace = scan_sim.simulate_flux_sweep(
        cfg, (args.x, args.y, args.z), (args.flux_min, args.flux_max), args.steps
    )
    try:
        found = scan_sim.find_resonance(trace)
        found_text = repr(found)
    except ValueError as exc:
        found_text = f"none ({exc})"

    keys = ("grid", "x", "y", "z", "nu_r", "lr", "z_c", "kappa", "t1",
            "amp", "bg", "ej_max", "flux_min", "flux_max", "steps")
    if args.dry_run:
        print(f"dry run: config valid; resonance: {found_text}")
        return 0
    out = _out_dir(args)
    sweep_path = out / "flux_sweep.csv"
    textio.write_columns(sweep_path, "flux_phi0,transmission", trace.fluxes, trace.values)
    entries = {
        "command": "flux-sweep",
        **_echo_config(args, keys),
        "result.resonant_flux": found_text,
    }
    textio.write_manifest(out / "manifest.txt", entries, [sweep_path], out)
    print(f"resonant flux: {found_text}")
    return 0


# ---------------------------------------------------------------- point fits

def cmd_fit_gx(args) -> int:
    dx, g = textio.read_columns(args.points, "dx_um,g_GHz")
    result = fitting.fit_gx(list(zip(dx, g)), l_r=args.lr)
    report = textio.format_fit_report(result, extra={"config.lr": args.lr})
    if args.dry_run:
        print(report, end="")
        return 0 if result.converged else 1
    out = _out_dir(args)
    path = out / "fit_gx_report.txt"
    path.write_text(report)
    textio.write_manifest(
        out / "manifest.txt",
        {"command": "fit-gx", "config.points": str(args.points), "config.lr": args.lr},
        [path], out,
    )
    print(report, end="")
    return 0 if result.converged else 1


def cmd_fit_gy(args) -> int:
    ys, gs = textio.read_columns(args.points, "y_um,g_GHz")
    grid = _load_or_surrogate_grid(args.grid)
    geom = coupling_map.GeometryParams(l_r=args.lr, nu_r=args.nu_r, z_c=args.z_c)
    result = fitting.fit_gy(list(zip(ys, gs)), grid, geom, x=args.x)
    report = textio.format_fit_report(result, extra={"config.x": args.x})
    if args.dry_run:
        print(report, end="")
        return 0 if result.converged else 1
    out = _out_dir(args)
    path = out / "fit_gy_report.txt"
    path.write_text(report)
    textio.write_manifest(
        out / "manifest.txt",
        {"command": "fit-gy", "config.points": str(args.points), "config.x": args.x},
        [path], out,
    )
    print(report, end="")
    return 0 if result.converged else 1


def cmd_vibration(args) -> int:
    freqs, phase = textio.read_columns(args.spectrum, "frequency_Hz,phase_rad")
    disp = scan_sim.vibration_to_displacement(phase, kappa=args.kappa, slope=args.slope)
    if args.dry_run:
        print("dry run: config valid, no files written")
        return 0
    out = _out_dir(args)
    path = out / "displacement.csv"
    textio.write_columns(path, "frequency_Hz,displacement_um", freqs, disp)
    textio.write_manifest(
        out / "manifest.txt",
        {
            "command": "vibration",
            "config.spectrum": str(args.spectrum),
            "config.kappa": args.kappa,
            "config.slope": args.slope,
        },
        [path], out,
    )
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- scan

# Demo campaign: five x positions every 600 um ending at x = 3330 um,
# eleven y positions across both coupling lobes, probe height 11 um.
DEFAULT_SCAN_CONFIG: dict = {
    "grid_file": None,
    "nu_r": "7.6GHz",
    "l_r": "7872um",
    "z_c_ohm": 50.0,
    "kappa": "13MHz",
    "t1": "2.6us",
    "amp": 57.0,
    "bg": 0.2,
    "ej_max": "50.35GHz",
    "z_true": "11um",
    "x_first": "930um",
    "x_spacing": "600um",
    "x_count": 5,
    "y_min": "-100um",
    "y_max": "100um",
    "y_step": "25um",
    "freq_halfspan": "450MHz",
    "freq_points": 601,
    "flux_steps": 481,
    "fluxes_per_point": 5,
    "noise_frac": 0.01,
    "encoder_sigma": "0um",
    "encoder_drift_um_per_100um": 0.0,
    "seed": 42,
}

_SCAN_PARSERS = {
    "nu_r": parse_frequency,
    "kappa": parse_frequency,
    "ej_max": parse_frequency,
    "freq_halfspan": parse_frequency,
    "t1": parse_time,
    "l_r": parse_length,
    "z_true": parse_length,
    "x_first": parse_length,
    "x_spacing": parse_length,
    "y_min": parse_length,
    "y_max": parse_length,
    "y_step": parse_length,
    "encoder_sigma": parse_length,
    "z_c_ohm": float,
    "amp": float,
    "bg": float,
    "noise_frac": float,
    "encoder_drift_um_per_100um": float,
    "x_count": int,
    "freq_points": int,
    "flux_steps": int,
    "fluxes_per_point": int,
    "seed": int,
    "grid_file": lambda v: v,
}


def load_scan_config(path, seed_override=None) -> dict:
    """Merge a JSON config over the demo defaults and resolve units.

    Unknown keys are rejected so typos cannot silently fall back to
    defaults.
    """
    raw = dict(DEFAULT_SCAN_CONFIG)
    if path is not None:
        user = json.loads(Path(path).read_text())
        if not isinstance(user, dict):
            raise ValueError(f"{path}: scan config must be a JSON object")
        unknown = sorted(set(user) - set(DEFAULT_SCAN_CONFIG))
        if unknown:
            raise ValueError(f"{path}: unknown config keys {unknown}")
        raw.update(user)
    if seed_override is not None:
        raw["seed"] = seed_override
    resolved = {}
    for key, value in raw.items():
        if value is None:
            resolved[key] = None
            continue
        try:
            resolved[key] = _SCAN_PARSERS[key](value)
        except (UnitError, ValueError, TypeError) as exc:
            raise ValueError(f"config key {key!r}: {exc}") from exc
    if resolved["x_count"] < 2:
        raise ValueError("x_count must be >= 2 to fit the mode shape")
    if resolved["fluxes_per_point"] < 3:
        raise ValueError("fluxes_per_point must be >= 3 for flux-scan aggregation")
    if resolved["freq_points"] < 2:
        raise ValueError("freq_points must be >= 2")
    return resolved


def _position_tag(x: float, y: float) -> str:
    return f"x{x:+08.1f}_y{y:+07.1f}".replace("+", "p").replace("-", "m")


def run_scan_campaign(cfg: dict, out: Path | None) -> dict:
    """Synthetic reproduction of the full position-scan analysis.

    For each probe position: locate resonance with a flux sweep, record
    spectra at a few fluxes around it, and fit each spectrum, averaging
    the coupling over converged fits. Then fit the per-x maxima to the
    sinusoidal mode shape and fit the probe height against the grid
    model at the best x. Writes trace files, plot-ready columns for each
    analysis stage, a report, the effective config, and a manifest.
    """
    grid = (coupling_map.load_grid(cfg["grid_file"]) if cfg["grid_file"]
            else coupling_map.surrogate_grid())
    geom = coupling_map.GeometryParams(l_r=cfg["l_r"], nu_r=cfg["nu_r"], z_c=cfg["z_c_ohm"])
    scan_cfg = scan_sim.ScanConfig(
        geom=geom, grid=grid, squid=transmon.SquidSpec(ej_max=cfg["ej_max"]),
        kappa=cfg["kappa"], t1=cfg["t1"], noise_frac=cfg["noise_frac"],
        encoder_sigma=cfg["encoder_sigma"], encoder_drift=cfg["encoder_drift_um_per_100um"],
        amp=cfg["amp"], bg=cfg["bg"],
    )
    z = cfg["z_true"]
    xs = [cfg["x_first"] + k * cfg["x_spacing"] for k in range(cfg["x_count"])]
    n_y = int(round((cfg["y_max"] - cfg["y_min"]) / cfg["y_step"])) + 1
    ys = [cfg["y_min"] + i * cfg["y_step"] for i in range(n_y)]
    freqs = np.linspace(
        cfg["nu_r"] - cfg["freq_halfspan"], cfg["nu_r"] + cfg["freq_halfspan"],
        cfg["freq_points"],
    )
    flux_step = 0.5 / (cfg["flux_steps"] - 1)
    n_flux = cfg["fluxes_per_point"]
    flux_offsets = (np.arange(n_flux) - (n_flux - 1) / 2) * flux_step

    files: list[Path] = []
    truth: dict = {"truth.z_um": z, "truth.x0_um": cfg["x_first"]}
    fig3_rows: list[tuple] = []
    g_by_x: dict[float, list[tuple[float, float]]] = {x: [] for x in xs}

    for xk, x in enumerate(xs):
        for yi, y in enumerate(ys):
            g_true = coupling_map.g_of_position(x, y, z, grid, geom)
            sweep = scan_sim.simulate_flux_sweep(scan_cfg, (x, y, z), steps=cfg["flux_steps"])
            try:
                fstar = scan_sim.find_resonance(sweep)
            except ValueError:
                fstar = scan_sim.resonant_flux(scan_cfg, y, z)
            fluxes = fstar + flux_offsets
            spectra = scan_sim.simulate_flux_spectra(
                scan_cfg, (x, y, z), fluxes, freqs, seed=(cfg["seed"], xk, yi)
            )
            try:
                scan = fitting.fit_flux_scan(spectra, t1_fixed=cfg["t1"])
                g_fit = scan.means["g"]
                g_sigma = scan.stds["g"]
                n_conv = scan.n_converged
            except (RuntimeError, ValueError):
                g_fit, g_sigma, n_conv = float("nan"), float("nan"), 0
            tag = _position_tag(x, y)
            truth[f"truth.g.{tag}_GHz"] = g_true
            truth[f"truth.flux.{tag}"] = fstar
            fig3_rows.append((x, y, g_fit, g_sigma, n_conv))
            # positions with an unresolvable splitting fit to noise; keep
            # only couplings the flux scan pinned down reproducibly
            if math.isfinite(g_fit) and g_sigma <= 0.25 * g_fit:
                g_by_x[x].append((y, g_fit))
            if out is not None:
                trace_path = out / "traces" / f"{tag}.csv"
                trace_path.parent.mkdir(parents=True, exist_ok=True)
                central = spectra[len(spectra) // 2][1]
                textio.write_trace(central, trace_path)
                files.append(trace_path)

    # mode-shape fit over per-x maxima
    gx_points = []
    for x in xs:
        vals = g_by_x[x]
        if vals:
            gx_points.append((x - cfg["x_first"], max(g for _, g in vals)))
    gx_fit = fitting.fit_gx(gx_points, l_r=cfg["l_r"])

    # height fit at the x with the largest coupling, using the fitted x0
    best_x = max(
        (x for x in xs if g_by_x[x]),
        key=lambda x: max(g for _, g in g_by_x[x]),
    )
    x_for_gy = gx_fit.params["x0"] + (best_x - cfg["x_first"])
    gy_fit = fitting.fit_gy(g_by_x[best_x], grid, geom, x=x_for_gy)

    summary = {
        "gx.g_max_GHz": gx_fit.params["g_max"],
        "gx.g_max_sigma_GHz": gx_fit.sigmas["g_max"],
        "gx.x0_um": gx_fit.params["x0"],
        "gx.x0_sigma_um": gx_fit.sigmas["x0"],
        "gx.converged": gx_fit.converged,
        "gy.z_um": gy_fit.params["z"],
        "gy.z_sigma_um": gy_fit.sigmas["z"],
        "gy.converged": gy_fit.converged,
        "gy.x_used_um": x_for_gy,
        "gy.n_points": len(g_by_x[best_x]),
    }

    if out is not None:
        fig3_path = out / "fig3_g_vs_y.csv"
        lines = ["x_um,y_um,g_GHz,g_sigma_GHz,n_converged"]
        lines += [
            f"{x!r},{y!r},{g!r},{s!r},{n}" for x, y, g, s, n in fig3_rows
        ]
        fig3_path.write_text("\n".join(lines) + "\n")
        files.append(fig3_path)

        fig4a_path = out / "fig4a_gmax_vs_x.csv"
        lines = ["x_um,g_max_GHz,fit_GHz"]
        for dx, gmax in gx_points:
            model = gx_fit.params["g_max"] * math.sin(
                math.pi * (dx + gx_fit.params["x0"]) / cfg["l_r"]
            )
            lines.append(f"{dx + cfg['x_first']!r},{gmax!r},{model!r}")
        fig4a_path.write_text("\n".join(lines) + "\n")
        files.append(fig4a_path)

        fig4b_path = out / "fig4b_g_vs_y.csv"
        lines = ["y_um,g_GHz,model_GHz"]
        for y, g in g_by_x[best_x]:
            model = coupling_map.g_of_position(x_for_gy, y, gy_fit.params["z"], grid, geom)
            lines.append(f"{float(y)!r},{float(g)!r},{float(model)!r}")
        fig4b_path.write_text("\n".join(lines) + "\n")
        files.append(fig4b_path)

        report_path = out / "report.txt"
        report_path.write_text(
            textio.format_fit_report(gx_fit, extra=None)
            + textio.format_fit_report(gy_fit, extra=None)
            + "".join(f"{k} = {v!r}\n" for k, v in summary.items())
        )
        files.append(report_path)

        config_path = out / "config.txt"
        textio.write_key_values(config_path, {f"config.{k}": v for k, v in cfg.items()})
        files.append(config_path)

        entries = {"command": "scan", "seed": cfg["seed"], **truth}
        textio.write_manifest(out / "manifest.txt", entries, files, out)

    return summary


def cmd_scan(args) -> int:
    cfg = load_scan_config(args.config, seed_override=args.seed)
    if args.dry_run:
        print("dry run: config valid, no files written")
        for k, v in cfg.items():
            print(f"config.{k} = {v}")
        return 0
    out = _out_dir(args)
    summary = run_scan_campaign(cfg, out)
    for k, v in summary.items():
        print(f"{k} = {v}")
    print(f"campaign written to {out}")
    return 0


# ---------------------------------------------------------------- wiring

class SystemExit2(Exception):
    """Usage error detected after parsing; exits with status 2."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanqed",
        description="Scanning-qubit circuit QED: simulate and fit transmission data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_default, seed_default=0):
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed", type=int, default=seed_default, action=_SeedAction,
                       help="random seed (last occurrence wins)")
        p.add_argument("--dry-run", action="store_true",
                       help="validate configuration, write nothing")

    p = sub.add_parser("simulate-spectrum", help="synthesize a transmission trace")
    p.add_argument("--nu-r", type=_freq, default="8.342GHz", dest="nu_r")
    p.add_argument("--nu-q", type=_freq, default="8.339GHz", dest="nu_q")
    p.add_argument("--g", type=_freq, default="20MHz")
    p.add_argument("--kappa", type=_freq, default="14MHz")
    p.add_argument("--t1", type=_time, default="2.6us")
    p.add_argument("--amp", type=float, default=57.0)
    p.add_argument("--bg", type=float, default=0.2)
    p.add_argument("--fmin", type=_freq, default="8.282GHz")
    p.add_argument("--fmax", type=_freq, default="8.402GHz")
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--noise-frac", type=float, default=0.0, dest="noise_frac")
    add_common(p, "simulated_spectrum")
    p.set_defaults(func=cmd_simulate_spectrum)

    p = sub.add_parser("fit-spectrum", help="fit a transmission trace file")
    p.add_argument("trace", help="trace CSV (frequency_GHz,transmission)")
    p.add_argument("--t1", type=_time, default="2.6us",
                   help="fixed qubit relaxation time")
    add_common(p, "fit_spectrum")
    p.set_defaults(func=cmd_fit_spectrum)

    p = sub.add_parser("flux-sweep", help="simulate single-frequency flux sweep")
    p.add_argument("--grid", default=None, help="capacitance grid file (default: surrogate)")
    p.add_argument("--x", type=_length, default="3330um")
    p.add_argument("--y", type=_length, default="50um")
    p.add_argument("--z", type=_length, default="11um")
    p.add_argument("--nu-r", type=_freq, default="7.6GHz", dest="nu_r")
    p.add_argument("--lr", type=_length, default="7872um")
    p.add_argument("--z-c", type=float, default=50.0, dest="z_c", help="line impedance, Ohm")
    p.add_argument("--kappa", type=_freq, default="13MHz")
    p.add_argument("--t1", type=_time, default="2.6us")
    p.add_argument("--amp", type=float, default=57.0)
    p.add_argument("--bg", type=float, default=0.2)
    p.add_argument("--ej-max", type=_freq, default="50.35GHz", dest="ej_max")
    p.add_argument("--flux-min", type=float, default=0.0, dest="flux_min")
    p.add_argument("--flux-max", type=float, default=0.5, dest="flux_max")
    p.add_argument("--steps", type=int, default=481)
    add_common(p, "flux_sweep")
    p.set_defaults(func=cmd_flux_sweep)

    p = sub.add_parser("scan", help="run the full synthetic scan campaign")
    p.add_argument("--config", default=None, help="JSON config (defaults: demo campaign)")
    # seed default None: the config file's seed applies unless overridden
    add_common(p, "scan_campaign", seed_default=None)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fit-gx", help="fit coupling vs x to the sinusoidal mode shape")
    p.add_argument("points", help="points CSV (dx_um,g_GHz)")
    p.add_argument("--lr", type=_length, default="7872um")
    add_common(p, "fit_gx")
    p.set_defaults(func=cmd_fit_gx)

    p = sub.add_parser("fit-gy", help="fit probe height z from coupling vs y")
    p.add_argument("points", help="points CSV (y_um,g_GHz)")
    p.add_argument("--grid", default=None, help="capacitance grid file (default: surrogate)")
    p.add_argument("--x", type=_length, required=True, help="probe x position")
    p.add_argument("--nu-r", type=_freq, default="7.6GHz", dest="nu_r")
    p.add_argument("--lr", type=_length, default="7872um")
    p.add_argument("--z-c", type=float, default=50.0, dest="z_c")
    add_common(p, "fit_gy")
    p.set_defaults(func=cmd_fit_gy)

    p = sub.add_parser("vibration", help="convert phase noise to displacement noise")
    p.add_argument("spectrum", help="phase noise CSV (frequency_Hz,phase_rad)")
    p.add_argument("--kappa", type=_freq, required=True)
    p.add_argument("--slope", type=_slope, required=True,
                   help="resonator frequency vs height, e.g. '0.2MHz/um'")
    add_common(p, "vibration")
    p.set_defaults(func=cmd_vibration)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as exc:
        parser.exit(2, f"{parser.prog}: error: {exc}\n")
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
