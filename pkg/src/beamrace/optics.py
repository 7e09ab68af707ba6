"""Camera/display distortion composition and per-pixel buffer latency.

Profiles map a field angle (radians) to a normalised image radius; the
pixel radius is ``focal_scale * u(theta)``.  A display pixel is traced
back to the field angle through the display profile and forward into the
camera through the camera profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ValidationError
from .scanout import ScanSpec, camera_ready, display_emit_start

ProfileKind = Literal["identity", "radial_polynomial", "equidistant_fisheye", "sampled_lut"]

# absorbs float noise when taking the ceiling of a continuous source row
ROW_EPS = 1e-6


@dataclass(frozen=True)
class DistortionProfile:
    """Radially symmetric lens profile.

    ``identity`` is a distortion-free pinhole (u = tan theta),
    ``equidistant_fisheye`` is u = theta, ``radial_polynomial`` is the odd
    polynomial ``u = sum(c[i] * theta**(2i+1))`` and ``sampled_lut`` takes a
    monotone table of (theta, u) pairs starting at (0, 0).
    """

    kind: ProfileKind
    focal_scale: float = 1.0
    coefficients: tuple = ()
    table: tuple = ()
    max_angle: float | None = None
    _lut: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.focal_scale <= 0:
            raise ValidationError("focal_scale must be positive")
        if self.kind == "identity":
            limit = np.pi / 2 * 0.999
        elif self.kind == "equidistant_fisheye":
            limit = np.pi
        elif self.kind == "radial_polynomial":
            if not self.coefficients:
                raise ValidationError("radial_polynomial needs coefficients")
            limit = np.pi
        elif self.kind == "sampled_lut":
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or len(tab) < 2:
                raise ValidationError("sampled_lut table must be a list of (theta, u) pairs")
            if tab[0, 0] != 0 or tab[0, 1] != 0:
                raise ValidationError("sampled_lut must start at (0, 0)")
            if np.any(np.diff(tab[:, 0]) <= 0) or np.any(np.diff(tab[:, 1]) <= 0):
                raise ValidationError("sampled_lut profile is not strictly monotone")
            object.__setattr__(self, "_lut", PchipInterpolator(tab[:, 0], tab[:, 1], extrapolate=False))
            limit = float(tab[-1, 0])
        else:
            raise ValidationError(f"unknown profile kind {self.kind!r}")
        if self.max_angle is None:
            object.__setattr__(self, "max_angle", float(limit))
        elif not 0 < self.max_angle <= limit:
            raise ValidationError(f"max_angle must lie in (0, {limit:.4f}]")
        grid = np.linspace(0.0, self.max_angle, 2049)
        if np.any(np.diff(self.forward(grid)) <= 0):
            raise ValidationError(f"{self.kind} profile is not strictly monotone over its field")

    def forward(self, theta):
        """Normalised radius for field angle ``theta`` (radians)."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "identity":
            return np.tan(theta)
        if self.kind == "equidistant_fisheye":
            return theta.copy()
        if self.kind == "radial_polynomial":
            t2 = theta * theta
            acc = np.zeros_like(theta)
            for c in reversed(self.coefficients):
                acc = acc * t2 + c
            return acc * theta
        return self._lut(theta)

    def derivative(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "identity":
            return 1.0 / np.cos(theta) ** 2
        if self.kind == "equidistant_fisheye":
            return np.ones_like(theta)
        if self.kind == "radial_polynomial":
            t2 = theta * theta
            acc = np.zeros_like(theta)
            for i, c in reversed(list(enumerate(self.coefficients))):
                acc = acc * t2 + (2 * i + 1) * c
            return acc
        return self._lut.derivative()(theta)

    @property
    def max_radius(self) -> float:
        """Normalised radius at the edge of the valid field."""
        return float(self.forward(self.max_angle))

    def inverse(self, u):
        """Field angle for normalised radius ``u``; NaN beyond the valid field."""
        u = np.asarray(u, dtype=float)
        out = np.full(u.shape, np.nan)
        ok = (u >= 0) & (u <= self.max_radius)
        if self.kind == "identity":
            out[ok] = np.arctan(u[ok])
            return out
        if self.kind == "equidistant_fisheye":
            out[ok] = u[ok]
            return out
        # seed from a dense monotone table, then polish with safeguarded Newton
        grid = np.linspace(0.0, self.max_angle, 4097)
        theta = np.interp(u[ok], self.forward(grid), grid)
        target = u[ok]
        for _ in range(6):
            step = (self.forward(theta) - target) / self.derivative(theta)
            theta = np.clip(theta - step, 0.0, self.max_angle)
        out[ok] = theta
        return out


def _center(dims):
    cols, rows = dims
    return ((cols - 1) / 2.0, (rows - 1) / 2.0)


@dataclass(frozen=True, eq=False)
class PixelMapping:
    """Per-display-pixel continuous camera coordinates.

    ``source_x``/``source_y`` have shape (display rows, display columns);
    pixel centres sit on integer coordinates.
    """

    display_dims: tuple
    camera_dims: tuple
    source_x: np.ndarray
    source_y: np.ndarray
    valid: np.ndarray
    camera_profile: DistortionProfile | None = None
    display_profile: DistortionProfile | None = None
    display_center: tuple = (0.0, 0.0)
    camera_center: tuple = (0.0, 0.0)

    @property
    def shape(self):
        return self.valid.shape

    def source_rows(self) -> np.ndarray:
        """Last camera row each display pixel depends on (-1 where invalid)."""
        rows = np.ceil(np.where(self.valid, self.source_y, 0.0) - ROW_EPS).astype(np.int64)
        rows = np.clip(rows, 0, self.camera_dims[1] - 1)
        return np.where(self.valid, rows, -1)

    def camera_to_display(self, cam_x, cam_y):
        """Inverse mapping for a camera coordinate, via the two profiles."""
        cx, cy = self.camera_center
        dx, dy = np.asarray(cam_x, float) - cx, np.asarray(cam_y, float) - cy
        rc = np.hypot(dx, dy)
        theta = self.camera_profile.inverse(rc / self.camera_profile.focal_scale)
        rd = self.display_profile.focal_scale * self.display_profile.forward(theta)
        scale = np.divide(rd, rc, out=np.ones_like(rc), where=rc > 0)
        # at the exact centre the radial scale is undefined; it maps to the centre
        return self.display_center[0] + dx * scale, self.display_center[1] + dy * scale

    def downsampled(self, factor: int) -> PixelMapping:
        """Keep every ``factor``-th display pixel (coordinates unchanged)."""
        sl = (slice(None, None, factor), slice(None, None, factor))
        rows, cols = self.valid[sl].shape
        return PixelMapping(
            display_dims=(cols, rows),
            camera_dims=self.camera_dims,
            source_x=self.source_x[sl],
            source_y=self.source_y[sl],
            valid=self.valid[sl],
            camera_profile=self.camera_profile,
            display_profile=self.display_profile,
            display_center=self.display_center,
            camera_center=self.camera_center,
        )


def _snap(v, hi, tol=1e-9):
    # float noise must not push an edge pixel out of bounds
    clipped = np.clip(v, 0.0, hi)
    return np.where(np.abs(v - clipped) <= tol * max(hi, 1.0), clipped, v)


def build_mapping(camera_profile, display_profile, display_dims, camera_dims, optical_centers=None) -> PixelMapping:
    """Compose the display->camera mapping for every display pixel.

    ``optical_centers`` is ``(display_center, camera_center)`` in pixel
    coordinates; image centres are used when omitted.
    """
    dcols, drows = (int(v) for v in display_dims)
    ccols, crows = (int(v) for v in camera_dims)
    if min(dcols, drows, ccols, crows) < 1:
        raise ValidationError("image dimensions must be positive")
    if optical_centers is None:
        dc, cc = _center((dcols, drows)), _center((ccols, crows))
    else:
        dc, cc = (tuple(float(v) for v in c) for c in optical_centers)
    if not (0 <= dc[0] <= dcols - 1 and 0 <= dc[1] <= drows - 1):
        raise ValidationError("display optical center outside image")
    if not (0 <= cc[0] <= ccols - 1 and 0 <= cc[1] <= crows - 1):
        raise ValidationError("camera optical center outside image")

    xs = np.arange(dcols, dtype=float) - dc[0]
    ys = np.arange(drows, dtype=float) - dc[1]
    dx, dy = np.meshgrid(xs, ys)
    rd = np.hypot(dx, dy)
    theta = display_profile.inverse(rd / display_profile.focal_scale)
    in_field = np.isfinite(theta) & (theta <= camera_profile.max_angle)
    theta = np.where(in_field, theta, 0.0)
    rc = camera_profile.focal_scale * camera_profile.forward(theta)
    scale = np.divide(rc, rd, out=np.full_like(rd, np.nan), where=rd > 0)
    # on-axis pixel: radial scale is the ratio of the two profiles' slopes at 0
    scale[rd == 0] = (camera_profile.focal_scale * camera_profile.derivative(0.0)) / (
        display_profile.focal_scale * display_profile.derivative(0.0)
    )
    sx = _snap(cc[0] + dx * scale, ccols - 1)
    sy = _snap(cc[1] + dy * scale, crows - 1)
    valid = in_field & (sx >= 0) & (sx <= ccols - 1) & (sy >= 0) & (sy <= crows - 1)
    sx = np.where(valid, sx, np.nan)
    sy = np.where(valid, sy, np.nan)
    return PixelMapping(
        display_dims=(dcols, drows),
        camera_dims=(ccols, crows),
        source_x=sx,
        source_y=sy,
        valid=valid,
        camera_profile=camera_profile,
        display_profile=display_profile,
        display_center=dc,
        camera_center=cc,
    )


@dataclass(frozen=True, eq=False)
class LatencyField:
    """Per-display-pixel signed durations in ns.

    Statistics are taken over valid pixels only and recomputed on
    construction.
    """

    values: np.ndarray
    valid: np.ndarray
    stat_min: int = field(init=False)
    stat_max: int = field(init=False)
    stat_mean: float = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape:
            raise ValidationError("values and valid mask must have the same shape")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)
        v = values[valid]
        if v.size == 0:
            raise ValidationError("latency field has no valid pixels")
        object.__setattr__(self, "stat_min", int(v.min()))
        object.__setattr__(self, "stat_max", int(v.max()))
        object.__setattr__(self, "stat_mean", float(v.mean()))

    @property
    def dims(self):
        rows, cols = self.values.shape
        return (cols, rows)

    def shifted(self, offset: int) -> LatencyField:
        return LatencyField(np.where(self.valid, self.values + int(offset), 0), self.valid)


def slice_first_rows(display_rows: int, slice_rows: int) -> np.ndarray:
    """First display row of the slice each row belongs to."""
    rows = np.arange(display_rows, dtype=np.int64)
    return (rows // slice_rows) * slice_rows


def buffer_latency_field(mapping: PixelMapping, camera: ScanSpec, display: ScanSpec,
                         render_lead: int = 0, slice_rows: int = 1) -> LatencyField:
    """Slack between a pixel's source row landing and its compositing deadline.

    With the defaults (no lead, one row per slice) the deadline is the
    display row's emission start.  Negative values mean the camera row
    arrives too late at the current phase.
    """
    drows = mapping.shape[0]
    if drows != display.rows:
        raise ValidationError(f"mapping has {drows} rows but display spec has {display.rows}")
    if mapping.camera_dims[1] != camera.rows:
        raise ValidationError(f"mapping expects {mapping.camera_dims[1]} camera rows, spec has {camera.rows}")
    if slice_rows < 1:
        raise ValidationError("slice_rows must be >= 1")
    deadline_rows = slice_first_rows(display.rows, slice_rows)
    deadline = display_emit_start(display, deadline_rows, 0) - int(render_lead)
    src = mapping.source_rows()
    ready = camera_ready(camera, np.where(mapping.valid, src, 0), 0)
    values = np.where(mapping.valid, deadline[:, None] - ready, 0)
    return LatencyField(values, mapping.valid)


def select_phase_offset(field: LatencyField) -> int:
    """Camera advance (ns) that makes the field's minimum exactly zero."""
    return -field.stat_min


def advance_camera(camera: ScanSpec, offset: int) -> ScanSpec:
    """Trigger the camera ``offset`` ns earlier."""
    return camera.shifted(-int(offset))


def required_buffer(field: LatencyField, camera: ScanSpec) -> int:
    """Camera rows that must be retained ahead of compositing."""
    if field.stat_min < 0:
        raise ValidationError("field has negative latency; apply select_phase_offset first")
    return -((-field.stat_max * camera.rows) // camera.scan_time)
