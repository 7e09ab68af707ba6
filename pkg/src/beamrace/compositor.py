"""Fixed-point slice compositor: bilinear Bayer demosaic, resample, colour, gamma.

Every step is integer arithmetic so that compositing a frame in any slice
partition is bit-identical to a single full-frame pass.

Fixed-point conventions
-----------------------
* source coordinates are rounded (half up) to 1/256 pixel
* demosaiced site values carry a factor of 4 (exact bilinear averages)
* resampled values are normalised to 16-bit linear, round half up
* the colour matrix is Q12; gamma is a 65536-entry LUT to 8 bits
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import MissingRowError, ValidationError

SUBPIXEL_BITS = 8
SUBPIXEL = 1 << SUBPIXEL_BITS
MATRIX_BITS = 12
LINEAR_MAX = 65535


def round_half_up_div(num, den):
    """Integer ``num / den`` rounded half up (den > 0)."""
    return (2 * num + den) // (2 * den)


@dataclass(frozen=True)
class ColorParams:
    """Colour pipeline settings.

    ``cfa`` is ``'RGGB'`` for a Bayer mosaic or ``'mono'`` when the input
    is already a full-resolution single channel.
    """

    matrix: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    gamma: float = 2.2
    input_bits: int = 10
    cfa: str = "RGGB"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValidationError("colour matrix must be 3x3")
        if not np.all(np.abs(m) <= 16):
            raise ValidationError("colour matrix entries must lie in [-16, 16]")
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")
        if not 1 <= self.input_bits <= 12:
            raise ValidationError("input_bits must lie in [1, 12]")
        if self.cfa not in ("RGGB", "mono"):
            raise ValidationError("cfa must be 'RGGB' or 'mono'")

    @cached_property
    def matrix_q(self) -> np.ndarray:
        m = np.asarray(self.matrix, dtype=float) * (1 << MATRIX_BITS)
        return np.floor(m + 0.5).astype(np.int64)

    @cached_property
    def matrix_qf(self) -> np.ndarray:
        # Q12 entries as floats: with |entry| <= 2**16 and 16-bit inputs every
        # product and sum is an integer below 2**53, so BLAS is exact
        return self.matrix_q.astype(np.float64)

    @cached_property
    def gamma_lut(self) -> np.ndarray:
        v = np.arange(LINEAR_MAX + 1, dtype=np.int64)
        if self.gamma == 1.0:
            return round_half_up_div(v * 255, LINEAR_MAX).astype(np.uint8)
        enc = np.power(v / LINEAR_MAX, 1.0 / self.gamma)
        return np.floor(255.0 * enc + 0.5).astype(np.uint8)


@dataclass(frozen=True)
class CameraRows:
    """A contiguous block of raw mosaic rows held in the camera buffer."""

    first_row: int
    data: np.ndarray
    frame_rows: int = field(default=0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValidationError("camera rows must be a 2-D array")
        object.__setattr__(self, "data", data)
        if not self.frame_rows:
            object.__setattr__(self, "frame_rows", self.first_row + data.shape[0])

    @property
    def stop(self) -> int:
        return self.first_row + self.data.shape[0]


def _reflect(idx, n):
    # whole-sample mirror keeps Bayer parity: -1 -> 1, n -> n - 2
    idx = np.where(idx < 0, -idx, idx)
    return np.where(idx > n - 1, 2 * (n - 1) - idx, idx)


def quantize_coords(mapping):
    """Fixed-point source coordinates (1/256 px) for every display pixel."""
    sx = np.where(mapping.valid, mapping.source_x, 0.0)
    sy = np.where(mapping.valid, mapping.source_y, 0.0)
    xq = np.floor(sx * SUBPIXEL + 0.5).astype(np.int64)
    yq = np.floor(sy * SUBPIXEL + 0.5).astype(np.int64)
    return xq, yq


@dataclass(frozen=True, eq=False)
class SampleTable:
    """Bilinear taps for the valid display pixels, stored row-major.

    Pixels of display rows ``a..b-1`` occupy entries
    ``row_ptr[a]:row_ptr[b]``, so a slice is a contiguous view.
    """

    camera_dims: tuple
    display_cols: int
    row_ptr: np.ndarray
    pixel: np.ndarray      # flat display index
    y0: np.ndarray
    y1: np.ndarray
    tap: np.ndarray        # (4, n) flat camera index of the four taps
    weight: np.ndarray     # (4, n) Q8 x Q8 weights summing to 65536

    @classmethod
    def from_mapping(cls, mapping) -> SampleTable:
        cam_cols, cam_rows = mapping.camera_dims
        xq, yq = quantize_coords(mapping)
        valid = mapping.valid
        xq, yq = xq[valid], yq[valid]
        x0, fx = xq >> SUBPIXEL_BITS, xq & (SUBPIXEL - 1)
        y0, fy = yq >> SUBPIXEL_BITS, yq & (SUBPIXEL - 1)
        x1 = np.minimum(x0 + 1, cam_cols - 1)
        y1 = np.minimum(y0 + 1, cam_rows - 1)
        gx, gy = SUBPIXEL - fx, SUBPIXEL - fy
        counts = valid.sum(axis=1)
        return cls(
            camera_dims=(cam_cols, cam_rows), display_cols=valid.shape[1],
            row_ptr=np.concatenate([[0], np.cumsum(counts)]),
            pixel=np.flatnonzero(valid), y0=y0, y1=y1,
            tap=np.stack([y0 * cam_cols + x0, y0 * cam_cols + x1, y1 * cam_cols + x0, y1 * cam_cols + x1]),
            weight=np.stack([gx * gy, fx * gy, gx * fy, fx * fy]).astype(np.int32),
        )

    def rows_needed(self, start, stop, cfa="RGGB"):
        """Inclusive camera row range read by display rows ``start..stop-1``."""
        a, b = self.row_ptr[start], self.row_ptr[stop]
        if a == b:
            return None
        lo, hi = int(self.y0[a:b].min()), int(self.y1[a:b].max())
        if cfa == "RGGB":
            # mirrored neighbours stay inside [lo - 1, hi + 1]
            lo, hi = max(lo - 1, 0), min(hi + 1, self.camera_dims[1] - 1)
        return lo, hi


_TABLES: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def sample_table(mapping) -> SampleTable:
    """Cached :class:`SampleTable` for a mapping."""
    table = _TABLES.get(mapping)
    if table is None:
        table = _TABLES[mapping] = SampleTable.from_mapping(mapping)
    return table


def _demosaic_rows(block: CameraRows, first, last, cam_rows, cam_cols, cfa) -> np.ndarray:
    """RGB x4 planes, shape (3, n_rows, cols), for camera rows ``first..last``."""
    if cfa == "mono":
        v = block.data[first - block.first_row:last + 1 - block.first_row].astype(np.int32)
        return np.broadcast_to(4 * v, (3,) + v.shape)
    src = _reflect(np.arange(first - 1, last + 2), cam_rows) - block.first_row
    p = block.data[src].astype(np.int32)
    p = np.concatenate([p[:, 1:2], p, p[:, -2:-1]], axis=1)  # mirrored columns
    v = p[1:-1, 1:-1]
    horiz = p[1:-1, :-2] + p[1:-1, 2:]
    vert = p[:-2, 1:-1] + p[2:, 1:-1]
    diag = p[:-2, :-2] + p[:-2, 2:] + p[2:, :-2] + p[2:, 2:]
    out = np.empty((3,) + v.shape, dtype=np.int32)
    r, g, b = out
    er = slice(first & 1, None, 2)        # local rows with an even camera index
    od = slice(1 - (first & 1), None, 2)
    ev_c, od_c = slice(0, None, 2), slice(1, None, 2)
    r[er, ev_c] = 4 * v[er, ev_c]
    g[er, ev_c] = horiz[er, ev_c] + vert[er, ev_c]
    b[er, ev_c] = diag[er, ev_c]
    r[er, od_c] = 2 * horiz[er, od_c]
    g[er, od_c] = 4 * v[er, od_c]
    b[er, od_c] = 2 * vert[er, od_c]
    r[od, ev_c] = 2 * vert[od, ev_c]
    g[od, ev_c] = 4 * v[od, ev_c]
    b[od, ev_c] = 2 * horiz[od, ev_c]
    r[od, od_c] = diag[od, od_c]
    g[od, od_c] = horiz[od, od_c] + vert[od, od_c]
    b[od, od_c] = 4 * v[od, od_c]
    return out


def composite_slice(slice_rows, camera_rows: CameraRows, mapping, color: ColorParams, table=None) -> np.ndarray:
    """Composite display rows ``slice_rows`` (a range or (start, stop)).

    Returns a uint8 array of shape (n_rows, display_columns, 3).  Invalid
    pixels are black.  Raises :class:`MissingRowError` when a camera row
    the slice reads is not in ``camera_rows``.
    """
    if isinstance(slice_rows, range):
        start, stop = slice_rows.start, slice_rows.stop
    else:
        start, stop = slice_rows
    table = sample_table(mapping) if table is None else table
    cam_cols, cam_rows = table.camera_dims
    if camera_rows.data.shape[1] != cam_cols:
        raise ValidationError("camera row width does not match mapping")
    cols = table.display_cols
    planar = np.zeros((3, (stop - start) * cols), dtype=np.uint8)
    need = table.rows_needed(start, stop, color.cfa)
    if need is None:
        return planar.T.reshape(stop - start, cols, 3)
    for r in need:
        if not camera_rows.first_row <= r < camera_rows.stop:
            raise MissingRowError(r, (camera_rows.first_row, camera_rows.stop))

    a, b = table.row_ptr[start], table.row_ptr[stop]
    first, last = int(table.y0[a:b].min()), int(table.y1[a:b].max())
    planes = _demosaic_rows(camera_rows, first, last, cam_rows, cam_cols, color.cfa).reshape(3, -1)
    taps = table.tap[:, a:b] - first * cam_cols
    w = table.weight[:, a:b]
    acc = (w[0] * np.take(planes, taps[0], axis=1) + w[1] * np.take(planes, taps[1], axis=1)
           + w[2] * np.take(planes, taps[2], axis=1) + w[3] * np.take(planes, taps[3], axis=1))

    full_scale = (1 << color.input_bits) - 1
    den = 4 * SUBPIXEL * SUBPIXEL * full_scale
    # acc < 2**28 fits int32; the scaled product needs 64 bits
    lin = round_half_up_div(acc.astype(np.int64) * LINEAR_MAX, den)
    mixed = color.matrix_qf @ lin.astype(np.float64)
    # (x + 2048) >> 12 on exact integers; the power-of-two scale is exact too
    mixed = np.floor((mixed + (1 << (MATRIX_BITS - 1))) * (1.0 / (1 << MATRIX_BITS)))
    mixed = np.clip(mixed, 0, LINEAR_MAX).astype(np.intp)
    planar[:, table.pixel[a:b] - start * cols] = color.gamma_lut[mixed]
    return planar.T.reshape(stop - start, cols, 3)


def composite_frame(mosaic: np.ndarray, mapping, color: ColorParams, partition=None) -> np.ndarray:
    """Composite a whole display frame slice by slice.

    ``partition`` is a sorted list of slice boundaries (including 0 and the
    display row count); one slice covering the frame is used when omitted.
    Each slice only sees the camera rows it needs.
    """
    drows = mapping.shape[0]
    bounds = [0, drows] if partition is None else list(partition)
    if bounds[0] != 0 or bounds[-1] != drows or any(b >= a for a, b in zip(bounds[1:], bounds[:-1])):
        raise ValidationError("partition must be increasing from 0 to the display row count")
    table = sample_table(mapping)
    parts = []
    for start, stop in zip(bounds[:-1], bounds[1:]):
        lo, hi = table.rows_needed(start, stop, color.cfa) or (0, 0)
        block = CameraRows(lo, mosaic[lo:hi + 1], frame_rows=mapping.camera_dims[1])
        parts.append(composite_slice((start, stop), block, mapping, color, table=table))
    return np.concatenate(parts, axis=0)
