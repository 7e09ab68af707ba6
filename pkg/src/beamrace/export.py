"""Plain-text and binary exports written atomically.

Files are written to a temporary sibling and renamed into place, so a
reader never sees a partial file.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

PGM_LINE = 70


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path, data) -> Path:
    """Write ``data`` (str or bytes) to ``path`` via write-then-rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        # mkstemp creates 0600; give the file the usual umask-derived mode
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def latency_csv(field) -> str:
    """``column,row,latency_ns`` for every valid pixel, row-major."""
    rows, cols = np.nonzero(field.valid)
    vals = field.values[rows, cols]
    body = "".join(f"{c},{r},{v}\n" for c, r, v in zip(cols.tolist(), rows.tolist(), vals.tolist()))
    return "column,row,latency_ns\n" + body


def heatmap_levels(field) -> np.ndarray:
    """8-bit grey levels scaled linearly over [0, stat_max], round half up."""
    top = max(int(field.stat_max), 0)
    v = np.clip(np.where(field.valid, field.values, 0), 0, None).astype(np.int64)
    if top == 0:
        return np.zeros(v.shape, dtype=np.int64)
    return np.minimum((510 * v + top) // (2 * top), 255)


def pgm_p2(levels: np.ndarray, comment: str | None = None) -> str:
    """Text PGM with lines no longer than 70 characters."""
    rows, cols = levels.shape
    head = ["P2"] + ([f"# {comment}"] if comment else []) + [f"{cols} {rows}", "255"]
    lines, cur = [], ""
    for row in levels.tolist():
        for v in row:
            tok = str(v)
            if cur and len(cur) + 1 + len(tok) > PGM_LINE:
                lines.append(cur)
                cur = tok
            else:
                cur = f"{cur} {tok}" if cur else tok
        lines.append(cur)
        cur = ""
    return "\n".join(head + lines) + "\n"


def scale_text(field) -> str:
    return (f"stat_min_ns {field.stat_min}\nstat_max_ns {field.stat_max}\n"
            f"stat_mean_ns {field.stat_mean:.3f}\nscale 0..{max(field.stat_max, 0)} ns -> 0..255\n")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".scale.txt")


def emit_heatmap(field, path) -> tuple[Path, Path]:
    """Write the field as a P2 heatmap plus a ``.scale.txt`` sidecar."""
    atomic_write(path, pgm_p2(heatmap_levels(field)))
    side = atomic_write(sidecar_path(path), scale_text(field))
    return Path(path), side


def ppm_p6(rgb: np.ndarray) -> bytes:
    """Binary PPM of an (rows, cols, 3) uint8 image."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    rows, cols, _ = rgb.shape
    return f"P6\n{cols} {rows}\n255\n".encode() + rgb.tobytes()


def read_ppm_p6(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols, 3)


def table_csv(header, rows, fmt="{:.6f}") -> str:
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(fmt.format(v) for v in r))
    return "\n".join(out) + "\n"
