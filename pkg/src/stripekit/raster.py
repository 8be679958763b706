"""Raster primitives shared by the warping and synthesis modules.

Images are 2-D float64 arrays in [0, 1], indexed [row, col]; sample
coordinates are (x, y) with x along columns and y along rows. All warps
in this toolkit use inverse mapping with bilinear interpolation.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def bilinear_sample(
    image: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    fill: float | None = 0.0,
) -> np.ndarray:
    """Sample ``image`` at fractional (x, y) positions.

    ``fill`` gives the value for samples outside [0, W-1] x [0, H-1];
    ``fill=None`` clamps sample positions to the image border instead.
    """
    h, w = image.shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    if fill is None:
        xc = np.clip(x, 0.0, w - 1.0)
        yc = np.clip(y, 0.0, h - 1.0)
    else:
        inside = (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)
        xc = np.clip(x, 0.0, w - 1.0)
        yc = np.clip(y, 0.0, h - 1.0)

    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0

    v00 = image[y0, x0]
    v01 = image[y0, x1]
    v10 = image[y1, x0]
    v11 = image[y1, x1]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    out = top * (1.0 - fy) + bot * fy

    if fill is not None:
        out = np.where(inside, out, fill)
    return out


def pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (x, y) coordinate arrays of shape (height, width)."""
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def draw_polyline(
    image: np.ndarray,
    points_px: np.ndarray,
    thickness: float = 3.0,
    value: float = 1.0,
) -> None:
    """Paint a polyline into ``image`` in place.

    ``points_px`` is an (N, 2) array of (x, y) pixel coordinates. Pixels
    within ``thickness / 2`` of any segment are set to ``value``.
    """
    h, w = image.shape
    pts = np.asarray(points_px, dtype=np.float64)
    r = thickness / 2.0
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        lo_x = max(int(np.floor(min(x0, x1) - r - 1)), 0)
        hi_x = min(int(np.ceil(max(x0, x1) + r + 1)), w - 1)
        lo_y = max(int(np.floor(min(y0, y1) - r - 1)), 0)
        hi_y = min(int(np.ceil(max(y0, y1) + r + 1)), h - 1)
        if lo_x > hi_x or lo_y > hi_y:
            continue
        xs, ys = np.meshgrid(
            np.arange(lo_x, hi_x + 1, dtype=np.float64),
            np.arange(lo_y, hi_y + 1, dtype=np.float64),
        )
        dx, dy = x1 - x0, y1 - y0
        seg_len2 = dx * dx + dy * dy
        if seg_len2 == 0.0:
            dist = np.hypot(xs - x0, ys - y0)
        else:
            t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / seg_len2, 0.0, 1.0)
            dist = np.hypot(xs - (x0 + t * dx), ys - (y0 + t * dy))
        patch = image[lo_y : hi_y + 1, lo_x : hi_x + 1]
        patch[dist <= r] = value


def resize(image: np.ndarray, size: tuple[int, int], method: str = "lanczos") -> np.ndarray:
    """Resize a float image to ``size`` = (width, height)."""
    resample = {
        "lanczos": Image.Resampling.LANCZOS,
        "bilinear": Image.Resampling.BILINEAR,
        "nearest": Image.Resampling.NEAREST,
    }[method]
    pil = Image.fromarray(image.astype(np.float32), mode="F")
    out = pil.resize(size, resample=resample)
    return np.asarray(out, dtype=np.float64)


def save_png(path: str | Path, image: np.ndarray) -> None:
    """Write a [0, 1] float image as 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(Path(path), format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    """Read a PNG as a [0, 1] float grayscale image."""
    with Image.open(Path(path)) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def box_blur_horizontal(image: np.ndarray, radius: int) -> np.ndarray:
    """Uniform horizontal box filter of width 2*radius + 1 (edge-replicated)."""
    if radius <= 0:
        return image.copy()
    size = 2 * radius + 1
    padded = np.pad(image, ((0, 0), (radius, radius)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, size, axis=1)
    return windows.mean(axis=-1)
