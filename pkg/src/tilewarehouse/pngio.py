"""Minimal PNG and PGM codecs for 8-bit grayscale and 8-bit paletted rasters.

The warehouse stores tile blobs losslessly and compares them byte for byte,
so the encoder is deliberately small and deterministic: fixed zlib level,
filter type 0 on every scanline, no ancillary chunks.  The reader accepts
any non-interlaced 8-bit gray or paletted PNG (all five filter types), which
covers both our own output and files produced by common tools.
"""

from __future__ import annotations

import struct
import zlib

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

_COLOR_GRAY = 0
_COLOR_PALETTE = 3


class CodecError(ValueError):
    """Raised for malformed or unsupported image payloads."""


def _chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def write_png(width: int, height: int, pixels: bytes,
              palette: tuple[tuple[int, int, int], ...] | None = None) -> bytes:
    """Encode a row-major 8-bit buffer as a PNG (gray, or paletted when a
    palette is given).  Output bytes are deterministic for equal inputs."""
    if width <= 0 or height <= 0:
        raise CodecError("empty image")
    if len(pixels) != width * height:
        raise CodecError("pixel buffer does not match dimensions")
    color = _COLOR_GRAY if palette is None else _COLOR_PALETTE
    ihdr = struct.pack(">IIBBBBB", width, height, 8, color, 0, 0, 0)
    raw = bytearray()
    for y in range(height):
        raw.append(0)  # filter type: None
        raw += pixels[y * width:(y + 1) * width]
    out = bytearray(PNG_SIGNATURE)
    out += _chunk(b"IHDR", ihdr)
    if palette is not None:
        if not 1 <= len(palette) <= 256:
            raise CodecError("palette must have 1..256 entries")
        out += _chunk(b"PLTE", bytes(c for rgb in palette for c in rgb))
    out += _chunk(b"IDAT", zlib.compress(bytes(raw), 9))
    out += _chunk(b"IEND", b"")
    return bytes(out)


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa = abs(p - a)
    pb = abs(p - b)
    pc = abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(data: bytes, width: int, height: int) -> bytes:
    stride = width + 1
    if len(data) != stride * height:
        raise CodecError("decompressed scanline data has wrong length")
    out = bytearray(width * height)
    prev_start = -1
    for y in range(height):
        ftype = data[y * stride]
        line = data[y * stride + 1:(y + 1) * stride]
        start = y * width
        if ftype == 0:
            out[start:start + width] = line
        elif ftype == 1:  # Sub
            acc = 0
            for x in range(width):
                acc = (line[x] + (out[start + x - 1] if x else 0)) & 0xFF
                out[start + x] = acc
        elif ftype == 2:  # Up
            for x in range(width):
                up = out[prev_start + x] if y else 0
                out[start + x] = (line[x] + up) & 0xFF
        elif ftype == 3:  # Average
            for x in range(width):
                left = out[start + x - 1] if x else 0
                up = out[prev_start + x] if y else 0
                out[start + x] = (line[x] + (left + up) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            for x in range(width):
                left = out[start + x - 1] if x else 0
                up = out[prev_start + x] if y else 0
                ul = out[prev_start + x - 1] if (y and x) else 0
                out[start + x] = (line[x] + _paeth(left, up, ul)) & 0xFF
        else:
            raise CodecError(f"unknown PNG filter type {ftype}")
        prev_start = start
    return bytes(out)


def read_png(blob: bytes) -> tuple[int, int, bytes, tuple[tuple[int, int, int], ...] | None]:
    """Decode a PNG into (width, height, pixels, palette).  Only 8-bit
    non-interlaced grayscale and paletted images are supported."""
    if len(blob) < len(PNG_SIGNATURE) or not blob.startswith(PNG_SIGNATURE):
        raise CodecError("not a PNG stream")
    pos = len(PNG_SIGNATURE)
    width = height = -1
    color = -1
    palette: tuple[tuple[int, int, int], ...] | None = None
    idat = bytearray()
    seen_end = False
    while pos < len(blob):
        if pos + 8 > len(blob):
            raise CodecError("truncated chunk header")
        (length,) = struct.unpack(">I", blob[pos:pos + 4])
        tag = blob[pos + 4:pos + 8]
        payload = blob[pos + 8:pos + 8 + length]
        if len(payload) != length or pos + 12 + length > len(blob):
            raise CodecError("truncated chunk payload")
        (crc,) = struct.unpack(">I", blob[pos + 8 + length:pos + 12 + length])
        if zlib.crc32(tag + payload) & 0xFFFFFFFF != crc:
            raise CodecError(f"bad CRC in {tag!r} chunk")
        if tag == b"IHDR":
            width, height, depth, color, comp, filt, interlace = struct.unpack(
                ">IIBBBBB", payload)
            if depth != 8:
                raise CodecError(f"unsupported bit depth {depth}")
            if color not in (_COLOR_GRAY, _COLOR_PALETTE):
                raise CodecError(f"unsupported color type {color}")
            if comp or filt or interlace:
                raise CodecError("unsupported compression/filter/interlace mode")
        elif tag == b"PLTE":
            if length % 3:
                raise CodecError("palette length not a multiple of 3")
            palette = tuple(
                (payload[i], payload[i + 1], payload[i + 2])
                for i in range(0, length, 3)
            )
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            seen_end = True
            break
        pos += 12 + length
    if width < 0 or not seen_end:
        raise CodecError("missing IHDR or IEND")
    if color == _COLOR_PALETTE and palette is None:
        raise CodecError("paletted image without PLTE")
    if color == _COLOR_GRAY:
        palette = None
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise CodecError(f"corrupt image data: {exc}") from None
    pixels = _unfilter(raw, width, height)
    if palette is not None:
        limit = len(palette)
        if any(p >= limit for p in pixels):
            raise CodecError("pixel index outside palette")
    return width, height, pixels, palette


def write_pgm(width: int, height: int, pixels: bytes) -> bytes:
    """Binary PGM (P5, maxval 255)."""
    if len(pixels) != width * height:
        raise CodecError("pixel buffer does not match dimensions")
    return b"P5\n%d %d\n255\n" % (width, height) + pixels


def read_pgm(blob: bytes) -> tuple[int, int, bytes]:
    """Parse binary PGM (P5, maxval 255), tolerating comments."""
    if not blob.startswith(b"P5"):
        raise CodecError("not a binary PGM (P5) stream")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        token = blob[start:pos]
        if not token.isdigit():
            raise CodecError(f"bad PGM header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise CodecError(f"unsupported PGM maxval {maxval}")
    pixels = blob[pos:pos + width * height]
    if len(pixels) != width * height:
        raise CodecError("truncated PGM pixel data")
    return width, height, pixels
