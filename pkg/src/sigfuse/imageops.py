"""Grayscale grid utilities: bilinear resize and PGM (P5) I/O.

The resize uses half-pixel-center coordinates with edge clamping, i.e. the
convention of the usual image-library bilinear resamplers, which makes an
identity resize exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidInput


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2D array to (out_h, out_w) by bilinear interpolation."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise InvalidInput(f"expected a nonempty 2D array, got shape {img.shape}")
    if out_h < 1 or out_w < 1:
        raise InvalidInput("output dimensions must be >= 1")
    if not np.all(np.isfinite(img)):
        raise InvalidInput("input contains non-finite values")

    h, w = img.shape
    # Source coordinate of each output pixel center, clamped to the image.
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)

    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bot = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) 8-bit PGM file into a 2D uint8 array."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise InvalidInput(f"{path}: not a P5 PGM file")

    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval

    width, height, maxval = (int(t) for t in tokens)
    if maxval > 255:
        raise InvalidInput(f"{path}: only 8-bit PGM supported (maxval={maxval})")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise InvalidInput(f"{path}: truncated pixel data")
    return pixels.reshape(height, width).copy()


def write_pgm(path, img: np.ndarray) -> None:
    """Write a 2D array (values clipped to [0, 255]) as binary P5 PGM."""
    arr = np.clip(np.asarray(img, dtype=float), 0, 255).round().astype(np.uint8)
    if arr.ndim != 2:
        raise InvalidInput("PGM output requires a 2D array")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())
