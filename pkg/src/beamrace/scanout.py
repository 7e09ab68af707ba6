"""Rolling-scan timing for sensors and displays.

All times are integer nanoseconds relative to the shared vsync epoch.  A
row's start offset within a frame is ``(row * scan_time) // rows``, so the
spacing between consecutive rows is the rational row period rounded down
to the nanosecond; the error never accumulates past one quantum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Literal

import numpy as np

from .errors import ValidationError

Role = Literal["camera", "display"]

NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def ms_to_ns(value) -> int:
    """Convert decimal milliseconds to integer nanoseconds (round half up)."""
    d = Decimal(str(value)) * NS_PER_MS
    return int(d.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def ns_to_ms(value) -> float:
    return value / NS_PER_MS


def hz_to_period_ns(hz) -> int:
    d = Decimal(NS_PER_S) / Decimal(str(hz))
    return int(d.quantize(Decimal(1), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ScanSpec:
    """Rolling-scan timing of one camera or display.

    Parameters
    ----------
    role : {'camera', 'display'}
    rows : int
        Number of scanned rows.
    frame_period : int
        Frame period in ns.
    integration : int
        Exposure (camera) or persistence (display) in ns.
    phase : int
        Offset of row 0 relative to the vsync epoch, ns.  Negative values
        trigger the camera ahead of the display.
    active_scan_fraction : float
        Fraction of the frame period spent scanning rows.
    readout_delay : int
        Delay between end of a camera row's exposure and its availability.
    """

    role: Role
    rows: int
    frame_period: int
    integration: int
    phase: int = 0
    active_scan_fraction: float = 1.0
    readout_delay: int = 0

    def __post_init__(self):
        if self.role not in ("camera", "display"):
            raise ValidationError(f"role must be 'camera' or 'display', got {self.role!r}")
        if int(self.rows) != self.rows or self.rows < 1:
            raise ValidationError(f"rows must be a positive integer, got {self.rows}")
        if self.frame_period <= 0:
            raise ValidationError("frame_period must be positive")
        if not 0 < self.active_scan_fraction <= 1:
            raise ValidationError("active_scan_fraction must lie in (0, 1]")
        if not 0 <= self.integration < self.frame_period:
            raise ValidationError("integration must satisfy 0 <= integration < frame_period")
        if self.readout_delay < 0:
            raise ValidationError("readout_delay must be nonnegative")
        if self.scan_time < self.rows:
            # row period would round to zero nanoseconds
            raise ValidationError("row period must be at least one nanosecond")

    @property
    def scan_time(self) -> int:
        """Nanoseconds spent scanning all rows of one frame."""
        return math.floor(Fraction(self.frame_period) * Fraction(str(self.active_scan_fraction)))

    @property
    def row_period(self) -> Fraction:
        """Exact (rational) row period in ns."""
        return Fraction(self.scan_time, self.rows)

    def with_phase(self, phase: int) -> ScanSpec:
        return replace(self, phase=int(phase))

    def shifted(self, delta: int) -> ScanSpec:
        return replace(self, phase=self.phase + int(delta))

    def _check_rows(self, row):
        r = np.asarray(row)
        if r.size and (r.min() < 0 or r.max() >= self.rows):
            raise ValidationError(f"row out of range [0, {self.rows})")

    def row_start(self, row, frame=0):
        """Start of the row's integration/emission window (ns).

        Accepts scalars or integer arrays for ``row`` and ``frame``.
        """
        self._check_rows(row)
        if np.isscalar(row) and np.isscalar(frame):
            return int(frame) * self.frame_period + self.phase + (int(row) * self.scan_time) // self.rows
        row = np.asarray(row, dtype=np.int64)
        frame = np.asarray(frame, dtype=np.int64)
        return frame * self.frame_period + self.phase + (row * self.scan_time) // self.rows


@dataclass(frozen=True)
class RowTimes:
    row: int
    integration_start: int
    integration_mid: int
    ready: int


def _require(spec: ScanSpec, role: Role):
    if spec.role != role:
        raise ValidationError(f"expected a {role} ScanSpec, got {spec.role}")


def display_emit_start(spec: ScanSpec, row, frame=0):
    _require(spec, "display")
    return spec.row_start(row, frame)


def display_emit_mid(spec: ScanSpec, row, frame=0):
    """Midpoint of the row's emission (persistence) window, ns."""
    _require(spec, "display")
    return spec.row_start(row, frame) + spec.integration // 2


def camera_row_times(spec: ScanSpec, row: int, frame: int = 0) -> RowTimes:
    _require(spec, "camera")
    start = spec.row_start(row, frame)
    return RowTimes(
        row=int(row),
        integration_start=start,
        integration_mid=start + spec.integration // 2,
        ready=start + spec.integration + spec.readout_delay,
    )


def camera_ready(spec: ScanSpec, row, frame=0):
    """Vectorised time at which camera rows land in the buffer."""
    _require(spec, "camera")
    return spec.row_start(row, frame) + spec.integration + spec.readout_delay


def camera_mid(spec: ScanSpec, row, frame=0):
    _require(spec, "camera")
    return spec.row_start(row, frame) + spec.integration // 2


def rows_in_budget(spec: ScanSpec, budget: int) -> int:
    """Number of whole rows scanned within ``budget`` ns."""
    if budget < 0:
        raise ValidationError("budget must be nonnegative")
    return (int(budget) * spec.rows) // spec.scan_time


def rows_ceil(spec: ScanSpec, duration: int) -> int:
    """Smallest row count whose scan time covers ``duration`` ns."""
    if duration <= 0:
        return 0
    return -((-int(duration) * spec.rows) // spec.scan_time)
