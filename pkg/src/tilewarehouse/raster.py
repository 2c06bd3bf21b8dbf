"""Pixel operations on 8-bit rasters.

Two raster formats exist in the warehouse: continuous-tone grayscale
(``gray8``) and paletted (``indexed8``).  The no-data sentinel is the value
255 for gray8 and palette index 0 for indexed8; genuinely white source
pixels are indistinguishable from no-data, a known property of the merge
scheme.  Heavy per-pixel loops are delegated to the selected kernel
backend (see :mod:`tilewarehouse.kernels`).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import kernels, pngio
from .grid import TILE_SIDE

GRAY_BLANK = 255
INDEXED_BLANK = 0

FORMATS = ("gray8", "indexed8")


class RasterError(ValueError):
    pass


@dataclass(frozen=True)
class Raster:
    """Row-major 8-bit pixel grid, row 0 on top."""

    width: int
    height: int
    format: str
    pixels: bytes
    palette: tuple[tuple[int, int, int], ...] | None = None

    def __post_init__(self):
        if self.format not in FORMATS:
            raise RasterError(f"unknown raster format {self.format!r}")
        if self.width <= 0 or self.height <= 0:
            raise RasterError("raster dimensions must be positive")
        if len(self.pixels) != self.width * self.height:
            raise RasterError(
                f"pixel buffer length {len(self.pixels)} != {self.width}x{self.height}")
        if self.format == "indexed8":
            if not self.palette:
                raise RasterError("indexed8 raster requires a palette")
            if max(self.pixels) >= len(self.palette):
                raise RasterError("pixel index outside palette")
        elif self.palette is not None:
            raise RasterError("gray8 raster cannot carry a palette")

    @property
    def blank_value(self) -> int:
        return GRAY_BLANK if self.format == "gray8" else INDEXED_BLANK

    @classmethod
    def blank(cls, width: int, height: int, format: str = "gray8",
              palette=None) -> "Raster":
        value = GRAY_BLANK if format == "gray8" else INDEXED_BLANK
        return cls(width, height, format, bytes([value]) * (width * height),
                   tuple(palette) if palette else None)

    @classmethod
    def gray(cls, width: int, height: int, pixels: bytes) -> "Raster":
        return cls(width, height, "gray8", pixels)

    def row(self, y: int) -> bytes:
        return self.pixels[y * self.width:(y + 1) * self.width]

    def same_layout(self, other: "Raster") -> bool:
        return (self.width, self.height, self.format, self.palette) == (
            other.width, other.height, other.format, other.palette)


@dataclass(frozen=True)
class BlankStats:
    blank_count: int
    total: int

    @property
    def fully_blank(self) -> bool:
        return self.blank_count == self.total

    @property
    def has_blanks(self) -> bool:
        return self.blank_count > 0


def blankness(r: Raster) -> BlankStats:
    """Count no-data pixels; drives the overlap decision table."""
    return BlankStats(kernels.count_value(r.pixels, r.blank_value),
                      r.width * r.height)


def crop(r: Raster, x: int, y: int, width: int, height: int) -> Raster:
    if x < 0 or y < 0 or x + width > r.width or y + height > r.height:
        raise RasterError("crop window outside raster")
    rows = [r.pixels[(y + dy) * r.width + x:(y + dy) * r.width + x + width]
            for dy in range(height)]
    return Raster(width, height, r.format, b"".join(rows), r.palette)


def blit(dst: bytearray, dst_width: int, src: Raster, x: int, y: int) -> None:
    """Copy ``src`` into a raw destination buffer at (x, y), top-left origin."""
    for dy in range(src.height):
        start = (y + dy) * dst_width + x
        dst[start:start + src.width] = src.row(dy)


def pad_to_tile(r: Raster) -> Raster:
    """Pad to a full tile with blank pixels along the right and bottom edges."""
    if r.width > TILE_SIDE or r.height > TILE_SIDE:
        raise RasterError(f"raster exceeds tile size: {r.width}x{r.height}")
    if r.width == TILE_SIDE and r.height == TILE_SIDE:
        return r
    buf = bytearray([r.blank_value]) * (TILE_SIDE * TILE_SIDE)
    blit(buf, TILE_SIDE, r, 0, 0)
    return Raster(TILE_SIDE, TILE_SIDE, r.format, bytes(buf), r.palette)


def cut_tiles(scene: Raster) -> list[tuple[int, int, Raster]]:
    """Cut a scene into tiles left-to-right, top-to-bottom.

    Returns (col, row, tile) triples with (0, 0) the top-left tile; right and
    bottom partials are blank-padded so no input pixel is lost.
    """
    cols = -(-scene.width // TILE_SIDE)
    rows = -(-scene.height // TILE_SIDE)
    out = []
    for row in range(rows):
        y = row * TILE_SIDE
        tile_h = min(TILE_SIDE, scene.height - y)
        for col in range(cols):
            x = col * TILE_SIDE
            tile_w = min(TILE_SIDE, scene.width - x)
            out.append((col, row, pad_to_tile(crop(scene, x, y, tile_w, tile_h))))
    return out


def resample(r: Raster, src_res, dst_res) -> Raster:
    """Resample between ground resolutions (meters per pixel).

    Output dimensions are dim * src/dst rounded half up.  gray8 interpolates
    bilinearly; indexed8 picks the nearest source pixel so palette indices
    survive intact.  Equal resolutions return the input unchanged.
    """
    src = Fraction(src_res)
    dst = Fraction(dst_res)
    if src <= 0 or dst <= 0:
        raise RasterError("resolutions must be positive")
    if src == dst:
        return r
    ratio = src / dst
    out_w = int(r.width * ratio + Fraction(1, 2))
    out_h = int(r.height * ratio + Fraction(1, 2))
    if out_w <= 0 or out_h <= 0:
        raise RasterError("resample output would be empty")
    if r.format == "gray8":
        pixels = kernels.resample_bilinear(r.pixels, r.width, r.height, out_w, out_h)
    else:
        pixels = kernels.resample_nearest(r.pixels, r.width, r.height, out_w, out_h)
    return Raster(out_w, out_h, r.format, pixels, r.palette)


def merge_prefer_nonblank(new: Raster, old: Raster) -> Raster:
    """Pixelwise overlap merge: blanks yield, and where both buffers carry
    data the newly cut pixel wins."""
    if not new.same_layout(old):
        raise RasterError("merge requires identical dimensions, format, palette")
    pixels = kernels.merge_prefer_nonblank(new.pixels, old.pixels, new.blank_value)
    return Raster(new.width, new.height, new.format, pixels, new.palette)


def downsample_2x2(tl: Raster | None, tr: Raster | None,
                   bl: Raster | None, br: Raster | None,
                   format: str | None = None,
                   palette=None) -> Raster:
    """Aggregate four child tiles into their parent tile.

    Children are laid out as quadrants of a 2x-larger mosaic; missing ones
    contribute blank pixels.  gray8 averages each 2x2 block (round half up),
    indexed8 keeps the block's top-left pixel.  When all four children are
    absent the format must be supplied.
    """
    present = [t for t in (tl, tr, bl, br) if t is not None]
    for t in present:
        if t.width != TILE_SIDE or t.height != TILE_SIDE:
            raise RasterError("children must be full tiles")
    if present:
        first = present[0]
        if any(not t.same_layout(first) for t in present[1:]):
            raise RasterError("children disagree on format or palette")
        if format is not None and format != first.format:
            raise RasterError("explicit format contradicts children")
        format = first.format
        palette = first.palette
    elif format is None:
        raise RasterError("format required when all children are absent")
    palette = tuple(palette) if palette else None

    side = 2 * TILE_SIDE
    blank = GRAY_BLANK if format == "gray8" else INDEXED_BLANK
    mosaic = bytearray([blank]) * (side * side)
    for child, (ox, oy) in zip((tl, tr, bl, br),
                               ((0, 0), (TILE_SIDE, 0), (0, TILE_SIDE), (TILE_SIDE, TILE_SIDE))):
        if child is not None:
            blit(mosaic, side, child, ox, oy)
    if format == "gray8":
        pixels = kernels.downsample_mean(bytes(mosaic), side, side)
    else:
        pixels = kernels.downsample_nearest(bytes(mosaic), side, side)
    return Raster(TILE_SIDE, TILE_SIDE, format, pixels, palette)


def encode_tile(r: Raster) -> bytes:
    """Losslessly encode a full tile; decode_tile inverts this exactly."""
    if r.width != TILE_SIDE or r.height != TILE_SIDE:
        raise RasterError("only full tiles are stored")
    return pngio.write_png(r.width, r.height, r.pixels, r.palette)


def decode_tile(blob: bytes) -> Raster:
    try:
        width, height, pixels, palette = pngio.read_png(blob)
    except pngio.CodecError as exc:
        raise RasterError(f"undecodable tile blob: {exc}") from None
    format = "gray8" if palette is None else "indexed8"
    return Raster(width, height, format, pixels, palette)


def load_image(path, format: str) -> Raster:
    """Read an ingest image file: ``pgm`` (binary grayscale) or
    ``png-indexed`` (8-bit paletted PNG)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if format == "pgm":
        width, height, pixels = pngio.read_pgm(blob)
        return Raster(width, height, "gray8", pixels)
    if format == "png-indexed":
        width, height, pixels, palette = pngio.read_png(blob)
        if palette is None:
            raise RasterError(f"{path}: png-indexed file has no palette")
        return Raster(width, height, "indexed8", pixels, palette)
    raise RasterError(f"unknown ingest format {format!r}")
