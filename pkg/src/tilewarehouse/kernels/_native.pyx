# cython: language_level=3
"""Compiled pixel kernels.

Byte-for-byte equivalent to ``_pure``; the float expressions mirror the
pure-Python evaluation order so both backends round identically.
"""

from libc.stdlib cimport free, malloc


def count_value(bytes data, int value):
    cdef const unsigned char[::1] buf = data
    cdef Py_ssize_t i, n = buf.shape[0]
    cdef unsigned char v = <unsigned char> value
    cdef Py_ssize_t count = 0
    for i in range(n):
        if buf[i] == v:
            count += 1
    return count


def merge_prefer_nonblank(bytes new, bytes old, int blank):
    if len(new) != len(old):
        raise ValueError("merge buffers differ in length")
    cdef const unsigned char[::1] a = new
    cdef const unsigned char[::1] b = old
    cdef Py_ssize_t i, n = a.shape[0]
    cdef unsigned char sentinel = <unsigned char> blank
    out = bytearray(n)
    cdef unsigned char[::1] o = out
    for i in range(n):
        o[i] = b[i] if a[i] == sentinel else a[i]
    return bytes(out)


def downsample_mean(bytes src, int width, int height):
    if width % 2 or height % 2:
        raise ValueError("downsample requires even dimensions")
    cdef const unsigned char[::1] s = src
    cdef int ow = width // 2
    cdef int oh = height // 2
    cdef Py_ssize_t top, bottom, row
    cdef int ox, oy, i, total
    out = bytearray(ow * oh)
    cdef unsigned char[::1] o = out
    for oy in range(oh):
        top = 2 * oy * width
        bottom = top + width
        row = oy * ow
        for ox in range(ow):
            i = 2 * ox
            total = s[top + i] + s[top + i + 1] + s[bottom + i] + s[bottom + i + 1]
            o[row + ox] = <unsigned char> ((total + 2) >> 2)
    return bytes(out)


def downsample_nearest(bytes src, int width, int height):
    if width % 2 or height % 2:
        raise ValueError("downsample requires even dimensions")
    cdef const unsigned char[::1] s = src
    cdef int ow = width // 2
    cdef int oh = height // 2
    cdef Py_ssize_t top, row
    cdef int ox, oy
    out = bytearray(ow * oh)
    cdef unsigned char[::1] o = out
    for oy in range(oh):
        top = 2 * oy * width
        row = oy * ow
        for ox in range(ow):
            o[row + ox] = s[top + 2 * ox]
    return bytes(out)


def resample_bilinear(bytes src, int width, int height, int out_w, int out_h):
    cdef const unsigned char[::1] s = src
    cdef double x_ratio = (<double> width) / out_w
    cdef double y_ratio = (<double> height) / out_h
    cdef int ox, oy, x0, x1, y0, y1, value
    cdef double sx, sy, tx, ty, top, bot
    cdef Py_ssize_t row0, row1, out_row
    out = bytearray(out_w * out_h)
    cdef unsigned char[::1] o = out

    cdef int* xs0 = <int*> malloc(out_w * sizeof(int))
    cdef int* xs1 = <int*> malloc(out_w * sizeof(int))
    cdef double* xst = <double*> malloc(out_w * sizeof(double))
    if xs0 == NULL or xs1 == NULL or xst == NULL:
        free(xs0); free(xs1); free(xst)
        raise MemoryError()
    try:
        for ox in range(out_w):
            sx = (ox + 0.5) * x_ratio - 0.5
            if sx < 0.0:
                sx = 0.0
            x0 = <int> sx
            if x0 > width - 1:
                x0 = width - 1
            x1 = x0 + 1 if x0 + 1 < width else width - 1
            xs0[ox] = x0
            xs1[ox] = x1
            xst[ox] = sx - x0
        for oy in range(out_h):
            sy = (oy + 0.5) * y_ratio - 0.5
            if sy < 0.0:
                sy = 0.0
            y0 = <int> sy
            if y0 > height - 1:
                y0 = height - 1
            y1 = y0 + 1 if y0 + 1 < height else height - 1
            ty = sy - y0
            row0 = y0 * width
            row1 = y1 * width
            out_row = oy * out_w
            for ox in range(out_w):
                x0 = xs0[ox]
                x1 = xs1[ox]
                tx = xst[ox]
                top = s[row0 + x0] + (s[row0 + x1] - s[row0 + x0]) * tx
                bot = s[row1 + x0] + (s[row1 + x1] - s[row1 + x0]) * tx
                value = <int> (top + (bot - top) * ty + 0.5)
                if value < 0:
                    value = 0
                elif value > 255:
                    value = 255
                o[out_row + ox] = <unsigned char> value
    finally:
        free(xs0)
        free(xs1)
        free(xst)
    return bytes(out)


def resample_nearest(bytes src, int width, int height, int out_w, int out_h):
    cdef const unsigned char[::1] s = src
    cdef double x_ratio = (<double> width) / out_w
    cdef double y_ratio = (<double> height) / out_h
    cdef int ox, oy, sx, sy
    cdef Py_ssize_t row, out_row
    out = bytearray(out_w * out_h)
    cdef unsigned char[::1] o = out
    cdef int* xs = <int*> malloc(out_w * sizeof(int))
    if xs == NULL:
        raise MemoryError()
    try:
        for ox in range(out_w):
            sx = <int> ((ox + 0.5) * x_ratio)
            if sx > width - 1:
                sx = width - 1
            xs[ox] = sx
        for oy in range(out_h):
            sy = <int> ((oy + 0.5) * y_ratio)
            if sy > height - 1:
                sy = height - 1
            row = sy * width
            out_row = oy * out_w
            for ox in range(out_w):
                o[out_row + ox] = s[row + xs[ox]]
    finally:
        free(xs)
    return bytes(out)
