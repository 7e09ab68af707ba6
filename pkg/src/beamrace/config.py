"""Sectioned key-value configuration, presets and object builders.

Durations are written in decimal milliseconds and converted exactly to
integer nanoseconds.  Values are layered: schema defaults, then a preset,
then a user file, then ``section.key=value`` overrides.  Every value keeps
its origin so diagnostics can point at the offending file and line.
"""

from __future__ import annotations

import configparser
import re
from decimal import InvalidOperation
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError
from .scanout import ScanSpec, hz_to_period_ns, ms_to_ns


def _ms(raw):
    try:
        return ms_to_ns(raw.strip())
    except (InvalidOperation, ValueError):
        raise ValueError("expected a duration in milliseconds") from None


def _auto(inner):
    def parse(raw):
        return None if raw.strip().lower() == "auto" else inner(raw)
    return parse


def _choice(*options):
    def parse(raw):
        if raw not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return raw
    return parse


def _floats(raw):
    vals = [float(v) for v in raw.replace(",", " ").split()]
    if not vals:
        raise ValueError("empty list")
    return tuple(vals)


def _int(raw):
    return int(raw)


_float = float

# section -> key -> (parser, default); None default means required when used
SCHEMA = {
    "display": {
        "columns": (_int, None), "rows": (_int, None), "refresh_hz": (_float, None),
        "persistence_ms": (_ms, None), "active_scan_fraction": (_float, "1.0"), "phase_ms": (_ms, "0"),
    },
    "camera": {
        "columns": (_int, None), "rows": (_int, None), "refresh_hz": (_float, None),
        "exposure_ms": (_ms, None), "readout_delay_ms": (_ms, "0"),
        "active_scan_fraction": (_float, "1.0"), "phase_ms": (_auto(_ms), "auto"),
    },
    "optics": {
        "display_kind": (_choice("identity", "radial_polynomial", "equidistant_fisheye", "sampled_lut"), "identity"),
        "display_focal_px": (_float, "1.0"), "display_coefficients": (_floats, "1.0"),
        "display_table": (_floats, "0 0 1 1"), "display_max_angle_deg": (_auto(_float), "auto"),
        "camera_kind": (_choice("identity", "radial_polynomial", "equidistant_fisheye", "sampled_lut"), "identity"),
        "camera_focal_px": (_float, "1.0"), "camera_coefficients": (_floats, "1.0"),
        "camera_table": (_floats, "0 0 1 1"), "camera_max_angle_deg": (_auto(_float), "auto"),
        "downsample": (_int, "1"),
    },
    "pipeline": {
        "mode": (_choice("sliced", "full_frame"), "sliced"), "render_lead_ms": (_ms, "0.2"),
        "slice_budget_ms": (_ms, "0.1"), "buffer_rows": (_auto(_int), "auto"),
        "jitter": (_choice("none", "uniform", "spike"), "none"), "base_dispatch_ms": (_ms, "0"),
        "worst_case_ms": (_ms, "0"), "spike_probability": (_float, "0"), "seed": (_int, "0"),
        "frames": (_int, "10"),
    },
    "geometry": {
        "ipd_cm": (_float, "6.0"), "eye_front_from_head_cor_cm": (_float, "9.12"),
        "eye_cor_behind_front_cm": (_float, "1.2"), "pupil_ahead_of_eye_cor_cm": (_float, "1.0"),
        "screen_from_eye_front_cm": (_float, "57"), "object_from_eye_front_cm": (_float, "20"),
        "kappa_deg": (_float, "5"), "mode": (_choice("eye_cor", "visual_axis"), "eye_cor"),
    },
    "trajectory": {
        "kind": (_choice("static", "sweep", "sinusoid"), "sweep"), "yaw_min_deg": (_float, "-25"),
        "yaw_max_deg": (_float, "25"), "velocity_deg_s": (_float, "7.509"), "latency_ms": (_float, "200"),
        "amplitude_deg": (_float, "15.628"), "frequency_hz": (_float, "0.5"),
        "sample_rate_hz": (_float, "2000"),
    },
    "psychometrics": {
        "guess_rate": (_float, "0.5"), "lapse_rate": (_float, "0.0001"), "criterion": (_float, "0.75"),
        "sobol_lo_ms": (_float, "0"), "sobol_hi_ms": (_float, "25"), "sobol_n": (_int, "50"),
    },
}

PRESETS = ("camsicle72", "testbed")


@dataclass
class Config:
    """Raw string values per (section, key) plus where each came from."""

    values: dict = field(default_factory=dict)
    origins: dict = field(default_factory=dict)

    def has(self, section, key) -> bool:
        return (section, key) in self.values

    def get(self, section: str, key: str):
        """Typed value, falling back to the schema default."""
        try:
            parser, default = SCHEMA[section][key]
        except KeyError:
            raise ConfigError(f"unknown key '{section}.{key}'") from None
        raw = self.values.get((section, key), default)
        if raw is None:
            raise ConfigError(f"missing required key '{key}' in [{section}]")
        try:
            return parser(raw)
        except (ValueError, ArithmeticError) as exc:
            raise ConfigError(f"{self.where(section, key)}invalid value {raw!r} for "
                              f"'{section}.{key}': {exc}") from None

    def where(self, section, key) -> str:
        origin = self.origins.get((section, key))
        return f"{origin}: " if origin else ""

    def set(self, section, key, raw, origin):
        if section not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"{origin}: unknown key '{key}' in [{section}]")
        self.values[(section, key)] = raw
        self.origins[(section, key)] = origin

    def check(self):
        """Parse every explicitly set value so bad input fails early."""
        for section, key in list(self.values):
            self.get(section, key)
        return self


def _key_lines(text: str):
    """Map (section, key) to 1-based line numbers by scanning the text."""
    lines, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), n)
    return lines


def merge_text(cfg: Config, text: str, name: str) -> Config:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=name)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{name}:{exc.lineno}: key outside any [section]") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{name}:{exc.lineno}: {exc.message if hasattr(exc, 'message') else exc}") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{name}:{lineno}: cannot parse {line.strip()!r}") from None
    lines = _key_lines(text)
    for section in parser.sections():
        for key, raw in parser.items(section):
            where = f"{name}:{lines.get((section, key), '?')}"
            if section not in SCHEMA:
                sec_line = next((n for n, s in enumerate(text.splitlines(), 1) if s.strip().startswith(f"[{section}]")), "?")
                raise ConfigError(f"{name}:{sec_line}: unknown section [{section}]")
            cfg.set(section, key, raw.strip(), where)
    return cfg


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}' (available: {', '.join(PRESETS)})")
    return resources.files("beamrace.presets").joinpath(f"{name}.ini").read_text()


def parse_override(item: str):
    m = re.fullmatch(r"\s*([A-Za-z_]+)\.([A-Za-z0-9_]+)\s*=(.*)", item)
    if not m:
        raise ConfigError(f"override {item!r} is not of the form section.key=value")
    return m.group(1), m.group(2).lower(), m.group(3).strip()


def load_config(preset: str | None = None, path=None, overrides=()) -> Config:
    """Layer preset, file and overrides into a checked :class:`Config`."""
    cfg = Config()
    if preset is not None:
        merge_text(cfg, preset_text(preset), f"preset:{preset}")
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {p}: {exc.strerror}") from exc
        merge_text(cfg, text, str(p))
    for item in overrides:
        section, key, raw = parse_override(item)
        cfg.set(section, key, raw, f"--set {section}.{key}")
    return cfg.check()


# builders ------------------------------------------------------------------

def downsample_factor(cfg: Config) -> int:
    ds = cfg.get("optics", "downsample")
    if ds < 1:
        raise ConfigError(f"{cfg.where('optics', 'downsample')}downsample must be >= 1")
    return ds


def display_spec(cfg: Config, downsample: int | None = None) -> ScanSpec:
    ds = downsample_factor(cfg) if downsample is None else downsample
    return ScanSpec(
        role="display", rows=cfg.get("display", "rows") // ds,
        frame_period=hz_to_period_ns(cfg.get("display", "refresh_hz")),
        integration=cfg.get("display", "persistence_ms"), phase=cfg.get("display", "phase_ms"),
        active_scan_fraction=cfg.get("display", "active_scan_fraction"),
    )


def camera_spec(cfg: Config, downsample: int | None = None) -> ScanSpec:
    """Camera spec; an ``auto`` phase is left at 0 for :func:`pipeline_config` to set."""
    ds = downsample_factor(cfg) if downsample is None else downsample
    phase = cfg.get("camera", "phase_ms")
    return ScanSpec(
        role="camera", rows=cfg.get("camera", "rows") // ds,
        frame_period=hz_to_period_ns(cfg.get("camera", "refresh_hz")),
        integration=cfg.get("camera", "exposure_ms"), phase=0 if phase is None else phase,
        active_scan_fraction=cfg.get("camera", "active_scan_fraction"),
        readout_delay=cfg.get("camera", "readout_delay_ms"),
    )


def profile(cfg: Config, which: str, downsample: int = 1):
    from .optics import DistortionProfile

    kind = cfg.get("optics", f"{which}_kind")
    max_deg = cfg.get("optics", f"{which}_max_angle_deg")
    table = ()
    if kind == "sampled_lut":
        flat = np.asarray(cfg.get("optics", f"{which}_table"))
        if flat.size % 2:
            raise ConfigError(f"{cfg.where('optics', f'{which}_table')}table needs (theta, u) pairs")
        table = tuple(map(tuple, flat.reshape(-1, 2)))
    return DistortionProfile(
        kind=kind, focal_scale=cfg.get("optics", f"{which}_focal_px") / downsample,
        coefficients=cfg.get("optics", f"{which}_coefficients") if kind == "radial_polynomial" else (),
        table=table, max_angle=None if max_deg is None else float(np.radians(max_deg)),
    )


def mapping(cfg: Config, downsample: int | None = None):
    from .optics import build_mapping

    ds = downsample_factor(cfg) if downsample is None else downsample
    ddims = (cfg.get("display", "columns") // ds, cfg.get("display", "rows") // ds)
    cdims = (cfg.get("camera", "columns") // ds, cfg.get("camera", "rows") // ds)
    return build_mapping(profile(cfg, "camera", ds), profile(cfg, "display", ds), ddims, cdims)


def jitter_model(cfg: Config, seed: int | None = None):
    from .pipeline import JitterModel

    return JitterModel(
        kind=cfg.get("pipeline", "jitter"), base_dispatch=cfg.get("pipeline", "base_dispatch_ms"),
        worst_case=cfg.get("pipeline", "worst_case_ms"),
        spike_probability=cfg.get("pipeline", "spike_probability"),
        seed=cfg.get("pipeline", "seed") if seed is None else seed,
    )


def pipeline_config(cfg: Config, downsample: int | None = None, mode: str | None = None, pixel_mapping=None):
    """Pipeline config; ``auto`` phase and buffer use the operating point."""
    from .pipeline import PipelineConfig, operating_phase

    cam, disp = camera_spec(cfg, downsample), display_spec(cfg, downsample)
    m = mapping(cfg, downsample) if pixel_mapping is None else pixel_mapping
    lead = cfg.get("pipeline", "render_lead_ms")
    budget = cfg.get("pipeline", "slice_budget_ms")
    phase, need = operating_phase(cam, disp, m, lead, budget)
    if cfg.get("camera", "phase_ms") is None:
        cam = cam.with_phase(phase)
    buffer_rows = cfg.get("pipeline", "buffer_rows")
    return PipelineConfig(
        camera=cam, display=disp, mapping=m, render_lead=lead, slice_budget=budget,
        buffer_rows=need if buffer_rows is None else buffer_rows,
        mode=mode or cfg.get("pipeline", "mode"), jitter=jitter_model(cfg),
    )


def rig(cfg: Config):
    from .geometry import RigGeometry

    g = lambda k: cfg.get("geometry", k)  # noqa: E731
    return RigGeometry(
        ipd=g("ipd_cm"), eye_front_from_head_cor=g("eye_front_from_head_cor_cm"),
        eye_cor_behind_front=g("eye_cor_behind_front_cm"),
        pupil_ahead_of_eye_cor=g("pupil_ahead_of_eye_cor_cm"),
        screen_from_eye_front=g("screen_from_eye_front_cm"),
        object_from_eye_front=g("object_from_eye_front_cm"), kappa=g("kappa_deg"), mode=g("mode"),
    )


def trajectory(cfg: Config, kind: str | None = None):
    from .geometry import HeadTrajectory

    t = lambda k: cfg.get("trajectory", k)  # noqa: E731
    return HeadTrajectory(
        kind=kind or t("kind"), yaw_range=(t("yaw_min_deg"), t("yaw_max_deg")),
        amplitude=t("amplitude_deg"), frequency=t("frequency_hz"), velocity=t("velocity_deg_s"),
        sample_rate=t("sample_rate_hz"),
    )
