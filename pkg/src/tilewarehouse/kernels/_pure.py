"""Pure-Python pixel kernels.

Fallback backend used when the compiled extension is unavailable.  Each
function here is the reference semantics for its compiled twin in
``_native.pyx``: identical inputs must produce identical bytes, which the
test suite asserts pairwise.  All buffers are row-major 8-bit, row 0 on top.
"""

from __future__ import annotations


def count_value(data: bytes, value: int) -> int:
    """Number of pixels equal to ``value``."""
    return data.count(value)


def merge_prefer_nonblank(new: bytes, old: bytes, blank: int) -> bytes:
    """Per-pixel merge: a blank pixel yields to the other buffer; where both
    carry data the ``new`` pixel wins; where both are blank, blank stays."""
    if len(new) != len(old):
        raise ValueError("merge buffers differ in length")
    out = bytearray(new)
    for i, pixel in enumerate(new):
        if pixel == blank:
            out[i] = old[i]
    return bytes(out)


def downsample_mean(src: bytes, width: int, height: int) -> bytes:
    """Halve both dimensions, each output pixel the mean of its 2x2 block,
    rounded half up.  Width and height must be even."""
    if width % 2 or height % 2:
        raise ValueError("downsample requires even dimensions")
    ow = width // 2
    oh = height // 2
    out = bytearray(ow * oh)
    for oy in range(oh):
        top = 2 * oy * width
        bottom = top + width
        row = oy * ow
        for ox in range(ow):
            i = 2 * ox
            total = src[top + i] + src[top + i + 1] + src[bottom + i] + src[bottom + i + 1]
            out[row + ox] = (total + 2) >> 2
    return bytes(out)


def downsample_nearest(src: bytes, width: int, height: int) -> bytes:
    """Halve both dimensions taking the top-left pixel of each 2x2 block
    (palette-safe: never invents a new index)."""
    if width % 2 or height % 2:
        raise ValueError("downsample requires even dimensions")
    ow = width // 2
    oh = height // 2
    out = bytearray(ow * oh)
    for oy in range(oh):
        top = 2 * oy * width
        row = oy * ow
        for ox in range(ow):
            out[row + ox] = src[top + 2 * ox]
    return bytes(out)


def resample_bilinear(src: bytes, width: int, height: int, out_w: int, out_h: int) -> bytes:
    """Resize with bilinear interpolation over half-pixel centers."""
    out = bytearray(out_w * out_h)
    x_ratio = width / out_w
    y_ratio = height / out_h
    xs = []
    for ox in range(out_w):
        sx = (ox + 0.5) * x_ratio - 0.5
        if sx < 0.0:
            sx = 0.0
        x0 = int(sx)
        if x0 > width - 1:
            x0 = width - 1
        x1 = x0 + 1 if x0 + 1 < width else width - 1
        xs.append((x0, x1, sx - x0))
    for oy in range(out_h):
        sy = (oy + 0.5) * y_ratio - 0.5
        if sy < 0.0:
            sy = 0.0
        y0 = int(sy)
        if y0 > height - 1:
            y0 = height - 1
        y1 = y0 + 1 if y0 + 1 < height else height - 1
        ty = sy - y0
        row0 = y0 * width
        row1 = y1 * width
        out_row = oy * out_w
        for ox in range(out_w):
            x0, x1, tx = xs[ox]
            top = src[row0 + x0] + (src[row0 + x1] - src[row0 + x0]) * tx
            bot = src[row1 + x0] + (src[row1 + x1] - src[row1 + x0]) * tx
            value = int(top + (bot - top) * ty + 0.5)
            if value < 0:
                value = 0
            elif value > 255:
                value = 255
            out[out_row + ox] = value
    return bytes(out)


def resample_nearest(src: bytes, width: int, height: int, out_w: int, out_h: int) -> bytes:
    """Resize with nearest-neighbor sampling over half-pixel centers."""
    out = bytearray(out_w * out_h)
    x_ratio = width / out_w
    y_ratio = height / out_h
    xs = []
    for ox in range(out_w):
        sx = int((ox + 0.5) * x_ratio)
        if sx > width - 1:
            sx = width - 1
        xs.append(sx)
    for oy in range(out_h):
        sy = int((oy + 0.5) * y_ratio)
        if sy > height - 1:
            sy = height - 1
        row = sy * width
        out_row = oy * out_w
        for ox in range(out_w):
            out[out_row + ox] = src[row + xs[ox]]
    return bytes(out)
