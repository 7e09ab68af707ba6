"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 validation error, 4 I/O
error.  Failures print one diagnostic line to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .errors import ConfigError, MissingRowError, ValidationError
from .export import atomic_write, emit_heatmap, latency_csv, table_csv
from .scanout import ns_to_ms

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_IO = 0, 2, 3, 4

DEFAULT_PRESET = {
    "latency-field": "camsicle72", "simulate": "camsicle72", "geometry": "testbed",
    "table19": "testbed", "psychofit": "testbed", "sobol": "testbed",
}

OUTPUTS = {
    "latency-field": "writes latency_field.csv (column,row,latency_ns), latency_field.pgm "
                     "(P2 heatmap over [0, max]) and latency_field.scale.txt",
    "simulate": "writes trace.csv (time_ns,kind,row_start,row_end,frame), latency.csv, "
                "latency.pgm and latency.scale.txt (last frame's end-to-end latency)",
    "geometry": "writes yaw_sweep.csv (yaw_deg,left_x_cm,right_x_cm,separation_cm) and "
                "disparity.csv (t_s,error_arcsec)",
    "table19": "prints the table; with --out also writes table19.txt",
    "psychofit": "prints the fit report; with --out writes fit.txt and curve.csv "
                 "(latency_ms,p_correct every 0.1 ms)",
    "sobol": "prints one latency per line; with --out writes sobol.csv (latency_ms)",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="beamrace", description="Rolling-scan passthrough latency tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=False):
        sp.add_argument("--preset", help=f"shipped preset ({', '.join(C.PRESETS)})")
        sp.add_argument("--config", type=Path, help="INI file layered over the preset")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config value (repeatable)")
        sp.add_argument("--out", type=Path, required=out_required, help="output directory")

    for name, helptext in (
        ("latency-field", "per-pixel buffer latency after phase selection"),
        ("simulate", "run the slice compositor simulation"),
        ("geometry", "yaw sweep and latency disparity-error trace"),
        ("table19", "testbed separation and translation table"),
        ("psychofit", "fit a logistic psychometric function to trials"),
        ("sobol", "Sobol-placed trial latencies"),
    ):
        sp = sub.add_parser(name, help=helptext, description=f"{helptext}; {OUTPUTS[name]}.")
        common(sp, out_required=name in ("latency-field", "simulate", "geometry"))
        if name == "simulate":
            sp.add_argument("--frames", type=int, help="display frames (default: pipeline.frames)")
            sp.add_argument("--seed", type=int, help="jitter seed (default: pipeline.seed)")
            sp.add_argument("--mode", choices=("sliced", "full_frame"))
        if name == "geometry":
            sp.add_argument("--latency-ms", type=float, default=1.0,
                            help="latency for the disparity trace (default 1)")
        if name == "table19":
            sp.add_argument("--latency-ms", type=float, help="lag for the third row (default: trajectory.latency_ms)")
        if name == "psychofit":
            sp.add_argument("--trials", type=Path, required=True, help="CSV with header latency_ms,correct")
        if name == "sobol":
            sp.add_argument("--n", type=int, help="count (default: psychometrics.sobol_n)")
            sp.add_argument("--lo", type=float, help="lower bound in ms")
            sp.add_argument("--hi", type=float, help="upper bound in ms")
    return p


def _outdir(args) -> Path | None:
    if args.out is None:
        return None
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def cmd_latency_field(cfg, args):
    from .optics import buffer_latency_field, required_buffer, select_phase_offset

    cam, disp = C.camera_spec(cfg).with_phase(0), C.display_spec(cfg)
    mapping = C.mapping(cfg)
    raw = buffer_latency_field(mapping, cam, disp)
    offset = select_phase_offset(raw)
    fld = raw.shifted(offset)
    out = _outdir(args)
    atomic_write(out / "latency_field.csv", latency_csv(fld))
    emit_heatmap(fld, out / "latency_field.pgm")
    return (f"max {ns_to_ms(fld.stat_max):.4f} ms, mean {ns_to_ms(fld.stat_mean):.4f} ms, "
            f"phase offset {ns_to_ms(offset):.4f} ms, buffer {required_buffer(fld, cam)} rows")


def cmd_simulate(cfg, args):
    from .pipeline import simulate

    pc = C.pipeline_config(cfg, mode=args.mode)
    frames = args.frames if args.frames is not None else cfg.get("pipeline", "frames")
    trace = simulate(pc, frames, seed=args.seed)
    out = _outdir(args)
    atomic_write(out / "trace.csv", trace.to_csv())
    atomic_write(out / "latency.csv", latency_csv(trace.per_pixel_latency))
    emit_heatmap(trace.per_pixel_latency, out / "latency.pgm")
    return (f"mode {pc.mode}, {frames} frames, mean latency {ns_to_ms(trace.mean_latency):.4f} ms, "
            f"tears {trace.tear_count}")


def cmd_geometry(cfg, args):
    from .geometry import disparity_error_trace, yaw_sweep_table

    rig = C.rig(cfg)
    traj = C.trajectory(cfg)
    lo, hi = traj.yaw_range
    sweep = yaw_sweep_table(rig, np.linspace(lo, hi, int(round(hi - lo)) + 1))
    trace = disparity_error_trace(rig, C.trajectory(cfg, kind="sinusoid"), args.latency_ms / 1000)
    out = _outdir(args)
    atomic_write(out / "yaw_sweep.csv",
                 table_csv(("yaw_deg", "left_x_cm", "right_x_cm", "separation_cm"), sweep))
    atomic_write(out / "disparity.csv",
                 table_csv(("t_s", "error_arcsec"), np.column_stack([trace.t, trace.error_arcsec])))
    return (f"disparity error at {args.latency_ms:g} ms: peak-to-peak {trace.peak:.2f} arcsec, "
            f"max abs {trace.peak_abs:.2f} arcsec")


def cmd_table19(cfg, args):
    from .geometry import table19_report

    lat = args.latency_ms if args.latency_ms is not None else cfg.get("trajectory", "latency_ms")
    rep = table19_report(C.rig(cfg), C.trajectory(cfg, kind="sweep"), lat / 1000)
    text = rep.as_text()
    sys.stdout.write(text)
    if args.out is not None:
        atomic_write(_outdir(args) / "table19.txt", text)
    ec = rep.values["eye_cor"]
    return f"head forward {ec[0]:.2f} cm, 0-ms {ec[1]:.2f} cm, {lat:g}-ms {ec[2]:.2f} cm (eye CoR)"


def cmd_psychofit(cfg, args):
    from .psychometrics import curve_csv, fit_logistic, read_trials, threshold_at

    trials = read_trials(args.trials.read_text())
    fit = fit_logistic(trials, cfg.get("psychometrics", "guess_rate"), cfg.get("psychometrics", "lapse_rate"))
    crit = cfg.get("psychometrics", "criterion")
    report = fit.report(crit)
    sys.stdout.write(report)
    if args.out is not None:
        out = _outdir(args)
        atomic_write(out / "fit.txt", report)
        xs = [t.stimulus_latency for t in trials]
        atomic_write(out / "curve.csv", curve_csv(fit, np.floor(min(xs)), np.ceil(max(xs))))
    if fit.converged:
        return f"threshold {threshold_at(fit, crit):.3f} ms at {crit:g}"
    return "fit did not converge (optimum on the parameter box boundary)"


def cmd_sobol(cfg, args):
    from .sobol import sobol_latencies

    g = lambda k: cfg.get("psychometrics", k)  # noqa: E731
    n = args.n if args.n is not None else g("sobol_n")
    lo = args.lo if args.lo is not None else g("sobol_lo_ms")
    hi = args.hi if args.hi is not None else g("sobol_hi_ms")
    vals = sobol_latencies(n, lo, hi)
    text = "".join(f"{v!r}\n" for v in vals)
    if args.out is not None:
        atomic_write(_outdir(args) / "sobol.csv", "latency_ms\n" + text)
    else:
        sys.stdout.write(text)
    return f"{n} Sobol latencies in [{lo:g}, {hi:g}] ms"


COMMANDS = {
    "latency-field": cmd_latency_field, "simulate": cmd_simulate, "geometry": cmd_geometry,
    "table19": cmd_table19, "psychofit": cmd_psychofit, "sobol": cmd_sobol,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        preset = args.preset
        if preset is None and args.config is None:
            preset = DEFAULT_PRESET[args.command]
        cfg = C.load_config(preset, args.config, args.overrides)
        summary = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, MissingRowError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        msg = f"{exc.strerror}: {exc.filename}" if exc.strerror and exc.filename else str(exc)
        print(f"i/o error: {msg}", file=sys.stderr)
        return EXIT_IO
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
