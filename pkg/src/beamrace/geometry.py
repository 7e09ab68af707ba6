"""Planar stereo geometry of a head-mounted latency testbed.

Top-down coordinates in centimetres: x is lateral (positive to the
right), z points forward, and the head centre of rotation (CoR) sits at
the origin.  A positive yaw turns the head toward +x.

Latency is modelled as the rendered scene being drawn for a stale head
pose: with true yaw ``yt`` and rendered yaw ``yr`` a world-fixed object at
``P`` appears at ``rot(P, yt - yr)``, i.e. it is dragged along with the
head, and is seen from the eyes at their true positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .errors import ValidationError

ARCSEC_PER_RAD = 180.0 / np.pi * 3600.0
EYES = ("left", "right")


def rot(points, angle):
    """Rotate planar (x, z) points about the origin; positive tips +z toward +x."""
    p = np.asarray(points, dtype=float)
    a = np.asarray(angle, dtype=float)
    c, s = np.cos(a), np.sin(a)
    x, z = p[..., 0], p[..., 1]
    return np.stack([x * c + z * s, -x * s + z * c], axis=-1)


@dataclass(frozen=True)
class RigGeometry:
    """Head, eye, screen and object layout (lengths in cm, kappa in degrees).

    Parameters
    ----------
    ipd : float
        Interpupillary distance.
    eye_front_from_head_cor : float
        Distance from the head CoR forward to the front of the eye.
    eye_cor_behind_front : float
        Eye CoR depth behind the front of the eye.
    pupil_ahead_of_eye_cor : float
        Entrance pupil distance ahead of the eye CoR.
    screen_from_eye_front, object_from_eye_front : float
        Depths of the screen plane and the midline object, measured from the
        front of the eye.
    kappa : float
        Angle between visual and pupillary axes, degrees.
    mode : {'eye_cor', 'visual_axis'}
        Ray origin used for projection.
    """

    ipd: float = 6.0
    eye_front_from_head_cor: float = 9.12
    eye_cor_behind_front: float = 1.2
    pupil_ahead_of_eye_cor: float = 1.0
    screen_from_eye_front: float = 57.0
    object_from_eye_front: float = 20.0
    kappa: float = 5.0
    mode: Literal["eye_cor", "visual_axis"] = "eye_cor"

    def __post_init__(self):
        for name in ("ipd", "eye_front_from_head_cor", "eye_cor_behind_front",
                     "pupil_ahead_of_eye_cor", "screen_from_eye_front", "object_from_eye_front"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if not 0 <= self.kappa <= 15:
            raise ValidationError("kappa must lie in [0, 15] degrees")
        if self.mode not in ("eye_cor", "visual_axis"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.eye_cor_z <= 0:
            raise ValidationError("eye CoR must lie in front of the head CoR")
        if self.object_from_eye_front >= self.screen_from_eye_front:
            raise ValidationError("object must lie in front of the screen")

    @property
    def eye_cor_z(self) -> float:
        return self.eye_front_from_head_cor - self.eye_cor_behind_front

    @property
    def screen_z(self) -> float:
        return self.eye_front_from_head_cor + self.screen_from_eye_front

    @property
    def object_point(self) -> np.ndarray:
        return np.array([0.0, self.eye_front_from_head_cor + self.object_from_eye_front])

    def with_mode(self, mode) -> RigGeometry:
        return replace(self, mode=mode)


@dataclass(frozen=True)
class HeadTrajectory:
    """Head yaw over time (angles in degrees, times in seconds).

    ``sweep`` rests at ``yaw_range[0]`` for t < 0, turns at ``velocity``
    deg/s and holds at ``yaw_range[1]``.  ``sinusoid`` is
    ``amplitude * sin(2 pi frequency t)``; ``static`` holds ``amplitude``.
    """

    kind: Literal["static", "sweep", "sinusoid"] = "sweep"
    yaw_range: tuple = (-25.0, 25.0)
    amplitude: float = 0.0
    frequency: float = 0.5
    velocity: float = 7.5
    duration: float | None = None
    sample_rate: float = 2000.0

    def __post_init__(self):
        if self.kind not in ("static", "sweep", "sinusoid"):
            raise ValidationError(f"unknown trajectory kind {self.kind!r}")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if self.kind == "sweep":
            lo, hi = self.yaw_range
            if not lo < hi or self.velocity <= 0:
                raise ValidationError("sweep needs an increasing yaw_range and positive velocity")
        if self.kind == "sinusoid" and self.frequency <= 0:
            raise ValidationError("sinusoid frequency must be positive")

    @property
    def sweep_time(self) -> float:
        lo, hi = self.yaw_range
        return (hi - lo) / self.velocity

    def yaw(self, t):
        """Yaw in degrees at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "static":
            return np.full(t.shape, float(self.amplitude))
        if self.kind == "sinusoid":
            return self.amplitude * np.sin(2 * np.pi * self.frequency * t)
        lo, hi = self.yaw_range
        return np.clip(lo + self.velocity * t, lo, hi)

    def sample_times(self, latency: float = 0.0) -> np.ndarray:
        """Sample instants covering the motion and its lagged copy.

        Sweeps include the kinks of both the true and lagged yaw exactly.
        Sinusoids cover one period (or ``duration`` when given).
        """
        if self.kind == "sinusoid":
            span = self.duration if self.duration is not None else 1.0 / self.frequency
            n = max(int(round(span * self.sample_rate)), 2)
            return np.arange(n) * (span / n)
        if self.kind == "static":
            span = self.duration if self.duration is not None else 1.0
            return np.linspace(0.0, span, max(int(span * self.sample_rate), 2))
        end = self.sweep_time + latency
        n = max(int(np.ceil((end + 0.2) * self.sample_rate)), 2)
        ts = np.linspace(-0.1, end + 0.1, n)
        kinks = np.array([0.0, latency, self.sweep_time, end])
        return np.union1d(ts, kinks)


@dataclass(frozen=True)
class StereoProjection:
    left: float
    right: float

    @property
    def separation(self) -> float:
        return abs(self.left - self.right)


def _eye_cors(rig: RigGeometry, yaw_rad):
    yaw_rad = np.asarray(yaw_rad, dtype=float)
    base = np.array([[-rig.ipd / 2, rig.eye_cor_z], [rig.ipd / 2, rig.eye_cor_z]])
    return rot(base, yaw_rad[..., None])  # (..., 2 eyes, 2)


def _origins(rig: RigGeometry, yaw_rad, fixation):
    """Ray origins (..., 2, 2) and, in visual-axis mode, gaze directions."""
    cors = _eye_cors(rig, yaw_rad)
    if rig.mode == "eye_cor":
        return cors, None
    if fixation is None:
        raise ValidationError("visual_axis mode needs a fixation point")
    fix = np.asarray(fixation, dtype=float)[..., None, :]
    v = fix - cors
    yaw_rad = np.asarray(yaw_rad, dtype=float)
    fwd = np.stack([np.sin(yaw_rad), np.cos(yaw_rad)], axis=-1)[..., None, :]
    if np.any(np.sum(v * fwd, axis=-1) <= 0):
        raise ValidationError("fixation point is behind the eye")
    gaze = np.arctan2(v[..., 0], v[..., 1])
    # kappa turns the pupillary axis temporally: left eye toward -x, right toward +x
    pupil_axis = gaze + np.array([-1.0, 1.0]) * np.radians(rig.kappa)
    offset = rig.pupil_ahead_of_eye_cor * np.stack([np.sin(pupil_axis), np.cos(pupil_axis)], axis=-1)
    directions = np.stack([np.sin(gaze), np.cos(gaze)], axis=-1)
    return cors + offset, directions


def pose_eyes(rig: RigGeometry, yaw: float, fixation_point=None):
    """Ray origins for both eyes at head yaw ``yaw`` (degrees).

    Returns
    -------
    origins : ndarray, shape (2, 2)
        Rows are the (x, z) origins of the left and right eye.
    directions : ndarray or None
        Unit visual-axis directions in visual-axis mode.
    """
    return _origins(rig, np.radians(yaw), fixation_point)


def project_point(origin, target, screen_z: float):
    """Intersect the ray ``origin -> target`` with the plane ``z = screen_z``.

    Points are (x, z) or (x, y, z); the result drops the z component.
    """
    o = np.asarray(origin, dtype=float)
    t = np.asarray(target, dtype=float)
    dz = t[..., -1] - o[..., -1]
    if np.any(dz == 0):
        raise ValidationError("ray is parallel to the screen plane")
    k = (screen_z - o[..., -1]) / dz
    res = o[..., :-1] + (t[..., :-1] - o[..., :-1]) * k[..., None]
    return res[..., 0] if res.shape[-1] == 1 else res


def _rendered(rig: RigGeometry, yaw_true_rad, yaw_rendered_rad):
    """Apparent object, ray origins and screen x for both eyes (vectorised)."""
    yt = np.asarray(yaw_true_rad, dtype=float)
    apparent = rot(rig.object_point, yt - np.asarray(yaw_rendered_rad, dtype=float))
    origins, _ = _origins(rig, yt, apparent)
    xs = project_point(origins, apparent[..., None, :], rig.screen_z)
    return apparent, origins, xs


def stereo_pair(rig: RigGeometry, yaw_true: float, yaw_rendered: float) -> StereoProjection:
    """Screen images of the midline object for a (possibly stale) render pose."""
    _, _, xs = _rendered(rig, np.radians(yaw_true), np.radians(yaw_rendered))
    return StereoProjection(left=float(xs[0]), right=float(xs[1]))


def head_forward_separation_closed_form(rig: RigGeometry) -> float:
    """Similar-triangles separation for eye-CoR rays at zero yaw."""
    z_e, z_o = rig.eye_cor_z, rig.object_point[1]
    return rig.ipd * (rig.screen_z - z_o) / (z_o - z_e)


def monocular_translation(rig: RigGeometry, trajectory: HeadTrajectory, latency: float, eye: str = "right") -> float:
    """Total range of one eye's screen image over the trajectory (cm)."""
    t = trajectory.sample_times(latency)
    yt = np.radians(trajectory.yaw(t))
    yr = np.radians(trajectory.yaw(t - latency))
    _, _, xs = _rendered(rig, yt, yr)
    x = xs[:, EYES.index(eye)]
    return float(x.max() - x.min())


@dataclass(frozen=True)
class Table19:
    """Head-forward separation and monocular translations per ray mode (cm)."""

    latency: float
    values: dict = field(default_factory=dict)

    def as_text(self) -> str:
        modes = [m for m in ("eye_cor", "visual_axis") if m in self.values]
        heads = {"eye_cor": "CoR", "visual_axis": "Visual Axis"}
        lag_label = f"{self.latency * 1000:g}-ms latency"
        rows = [("Head forward", 0), ("0-ms latency", 1), (lag_label, 2)]
        lines = ["".ljust(18) + "".join(heads[m].rjust(14) for m in modes),
                 "".ljust(18) + "".join("Sim (cm)".rjust(14) for _ in modes)]
        for label, i in rows:
            lines.append(label.ljust(18) + "".join(f"{self.values[m][i]:14.2f}" for m in modes))
        return "\n".join(lines) + "\n"


def table19_report(rig: RigGeometry, trajectory: HeadTrajectory, latency: float = 0.2,
                   modes=("eye_cor", "visual_axis"), eye: str = "right") -> Table19:
    """Head-forward separation plus lag-free and lagged monocular translation.

    ``latency`` is in seconds.  The monocular metric follows ``eye``.
    """
    lo, hi = trajectory.yaw_range
    if trajectory.kind != "sweep" or lo > -25 or hi < 25:
        raise ValidationError("table19 needs a sweep spanning -25 to +25 degrees")
    values = {}
    for mode in modes:
        r = rig.with_mode(mode)
        values[mode] = (
            stereo_pair(r, 0.0, 0.0).separation,
            monocular_translation(r, trajectory, 0.0, eye),
            monocular_translation(r, trajectory, latency, eye),
        )
    return Table19(latency=latency, values=values)


def calibrate_sweep_velocity(rig: RigGeometry, target: float, latency: float = 0.2,
                             bracket=(2.0, 40.0), yaw_range=(-25.0, 25.0), eye: str = "right") -> float:
    """Sweep velocity (deg/s) whose lagged monocular translation hits ``target`` cm."""
    def f(v):
        traj = HeadTrajectory(kind="sweep", yaw_range=yaw_range, velocity=v)
        return monocular_translation(rig, traj, latency, eye) - target
    return float(brentq(f, *bracket, xtol=1e-6))


@dataclass(frozen=True)
class DisparityTrace:
    t: np.ndarray
    error_arcsec: np.ndarray
    peak: float
    peak_abs: float


def binocular_disparity(rig: RigGeometry, yaw_true_rad, yaw_rendered_rad):
    """Difference of the eyes' visual directions to the rendered screen images (rad)."""
    yt = np.asarray(yaw_true_rad, dtype=float)
    _, _, xs = _rendered(rig, yt, yaw_rendered_rad)
    # directions are taken from the true eye centres of rotation in both modes
    cors = _eye_cors(rig, yt)
    angles = np.arctan2(xs - cors[..., 0], rig.screen_z - cors[..., 1])
    return angles[..., 0] - angles[..., 1]


def disparity_error_trace(rig: RigGeometry, trajectory: HeadTrajectory, latency: float) -> DisparityTrace:
    """Latency-induced binocular disparity error over one sinusoid period.

    ``peak`` is the peak-to-peak excursion of the error; ``peak_abs`` the
    largest absolute error.  ``latency`` is in seconds.
    """
    if trajectory.kind != "sinusoid":
        raise ValidationError("disparity_error_trace needs a sinusoid trajectory")
    if latency < 0:
        raise ValidationError("latency must be nonnegative")
    t = trajectory.sample_times()
    yt = np.radians(trajectory.yaw(t))
    yr = np.radians(trajectory.yaw(t - latency))
    err = (binocular_disparity(rig, yt, yr) - binocular_disparity(rig, yt, yt)) * ARCSEC_PER_RAD
    if latency == 0:
        err = np.zeros_like(err)
    return DisparityTrace(t=t, error_arcsec=err, peak=float(err.max() - err.min()),
                          peak_abs=float(np.abs(err).max()))


def yaw_sweep_table(rig: RigGeometry, yaws_deg) -> np.ndarray:
    """Rows of (yaw_deg, left_x, right_x, separation) for lag-free rendering."""
    yaws = np.asarray(yaws_deg, dtype=float)
    _, _, xs = _rendered(rig, np.radians(yaws), np.radians(yaws))
    return np.column_stack([yaws, xs[:, 0], xs[:, 1], np.abs(xs[:, 0] - xs[:, 1])])
