"""Independent full-frame reference for the slice compositor.

Demosaic uses scipy convolution over masked colour planes; resampling is
written out separately from the library code.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import convolve

K_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.int64)
K_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.int64)


def demosaic_x4(mosaic, cfa="RGGB"):
    m = mosaic.astype(np.int64)
    if cfa == "mono":
        return [4 * m] * 3
    yy, xx = np.indices(m.shape)
    r_mask = (yy % 2 == 0) & (xx % 2 == 0)
    b_mask = (yy % 2 == 1) & (xx % 2 == 1)
    g_mask = ~(r_mask | b_mask)
    return [convolve(m * mask, k, mode="mirror") for mask, k in ((r_mask, K_RB), (g_mask, K_G), (b_mask, K_RB))]


def composite_reference(mosaic, mapping, color):
    planes = demosaic_x4(mosaic, color.cfa)
    crows, ccols = mosaic.shape
    out = np.zeros(mapping.shape + (3,), dtype=np.uint8)
    ok = mapping.valid
    xq = np.floor(mapping.source_x[ok] * 256 + 0.5).astype(np.int64)
    yq = np.floor(mapping.source_y[ok] * 256 + 0.5).astype(np.int64)
    x0, y0 = xq // 256, yq // 256
    fx, fy = xq - 256 * x0, yq - 256 * y0
    x1, y1 = np.minimum(x0 + 1, ccols - 1), np.minimum(y0 + 1, crows - 1)
    full = 2 ** color.input_bits - 1
    den = 4 * 65536 * full
    lin = []
    for p in planes:
        acc = ((256 - fx) * (256 - fy) * p[y0, x0] + fx * (256 - fy) * p[y0, x1]
               + (256 - fx) * fy * p[y1, x0] + fx * fy * p[y1, x1])
        lin.append((2 * acc * 65535 + den) // (2 * den))
    lin = np.array(lin)
    q = np.floor(np.asarray(color.matrix, dtype=float) * 4096 + 0.5).astype(np.int64)
    mixed = np.clip((q @ lin + 2048) // 4096, 0, 65535)
    if color.gamma == 1.0:
        enc = (2 * mixed * 255 + 65535) // (2 * 65535)
    else:
        enc = np.floor(255 * (mixed / 65535.0) ** (1 / color.gamma) + 0.5).astype(np.int64)
    out[ok] = enc.T.astype(np.uint8)
    return out
