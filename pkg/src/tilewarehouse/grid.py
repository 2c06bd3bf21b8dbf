"""Coordinate mathematics for the warehouse grid.

Everything here is a pure function over value types: scale/resolution
conversion, UTM <-> tile addressing, pyramid parent/child relations, UTM
zone arithmetic, and the transverse Mercator projection between geographic
and UTM coordinates.

Conventions, fixed once and used everywhere:

* A tile is addressed by the UTM coordinate of its *top-left* pixel divided
  by the tile extent in meters.  Because northing grows upward, tile (x, y)
  at extent E covers easting [x*E, (x+1)*E) and northing ((y-1)*E, y*E].
* A grid-aligned point is the top-left corner of exactly the tile it maps
  to, so x uses floor() and y uses ceil().
* Scales are integers 0..22; resolution in meters per pixel is exactly
  2**(scale - 10), kept as an exponent so the power-of-two invariant can
  never erode into float dust.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

TILE_SIDE = 200  # pixels per tile edge

MIN_SCALE = 0
MAX_SCALE = 22

# Accepted geographic band: standard UTM validity.  Southern-hemisphere
# coordinates (negative northing) are not supported by this warehouse.
MIN_LAT = -80.0
MAX_LAT = 84.0

QUADRANTS = ("tl", "tr", "bl", "br")


class GridError(ValueError):
    """Raised for out-of-domain coordinates or addressing requests."""


def _check_scale(scale: int) -> int:
    if not isinstance(scale, int) or isinstance(scale, bool):
        raise GridError(f"scale must be an integer, got {scale!r}")
    if not MIN_SCALE <= scale <= MAX_SCALE:
        raise GridError(f"scale {scale} outside [{MIN_SCALE}, {MAX_SCALE}]")
    return scale


@dataclass(frozen=True)
class Resolution:
    """Meters per pixel, exactly a power of two: 2**exponent."""

    exponent: int

    def __post_init__(self):
        if not MIN_SCALE - 10 <= self.exponent <= MAX_SCALE - 10:
            raise GridError(f"resolution exponent {self.exponent} out of range")

    @classmethod
    def from_meters(cls, meters) -> "Resolution":
        frac = Fraction(meters)
        if frac <= 0:
            raise GridError(f"resolution must be positive, got {meters!r}")
        exponent = frac.numerator.bit_length() - frac.denominator.bit_length()
        if Fraction(2) ** exponent != frac:
            raise GridError(f"resolution {meters!r} is not an exact power of two")
        return cls(exponent)

    @property
    def meters(self) -> Fraction:
        return Fraction(2) ** self.exponent

    def __float__(self) -> float:
        return float(self.meters)


def scale_of_resolution(res: Resolution) -> int:
    """Scale level for a resolution: log2(meters per pixel) + 10."""
    return _check_scale(res.exponent + 10)


def resolution_of_scale(scale: int) -> Resolution:
    """Exact inverse of scale_of_resolution."""
    return Resolution(_check_scale(scale) - 10)


def tile_extent_m(scale: int) -> Fraction:
    """Ground extent of one tile edge in meters (exact)."""
    return TILE_SIDE * resolution_of_scale(scale).meters


@dataclass(frozen=True)
class Theme:
    """A data source family: one projection kind, pixel format, and pyramid.

    ``base_scales`` lists the levels populated directly from ingest imagery
    (more than one for themes whose sources arrive at several resolutions);
    every other pyramid level is derived from the level one step below it.
    ``source_bindings`` routes a source resolution in meters to the base
    scale its imagery is cut into.
    """

    id: int
    name: str
    kind: str  # "projected" | "raw"
    pixel_format: str  # "gray8" | "indexed8"
    pyramid_levels: tuple[int, ...]
    base_scales: tuple[int, ...] = ()
    source_bindings: tuple[tuple[float, int], ...] = ()
    palette: tuple[tuple[int, int, int], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("projected", "raw"):
            raise GridError(f"unknown theme kind {self.kind!r}")
        if list(self.pyramid_levels) != sorted(set(self.pyramid_levels)):
            raise GridError("pyramid_levels must be strictly ascending")
        for level in self.pyramid_levels:
            _check_scale(level)
        if not self.base_scales:
            object.__setattr__(self, "base_scales", (self.pyramid_levels[0],))
        for base in self.base_scales:
            if base not in self.pyramid_levels:
                raise GridError(f"base scale {base} not in pyramid_levels")

    @property
    def base_scale(self) -> int:
        return min(self.base_scales)

    @property
    def top_scale(self) -> int:
        return self.pyramid_levels[-1]

    def is_base(self, scale: int) -> bool:
        return scale in self.base_scales

    def base_scale_for_source(self, resolution_m: float) -> int:
        """Base level an ingest image of the given resolution is cut into."""
        for src_res, scale in self.source_bindings:
            if math.isclose(src_res, float(resolution_m), rel_tol=1e-9):
                return scale
        return self.base_scale


@dataclass(frozen=True, order=True)
class TileAddress:
    """The five-part key identifying any tile in the warehouse."""

    theme: int
    scale: int
    scene: int
    x: int
    y: int

    def __post_init__(self):
        _check_scale(self.scale)
        if self.x < 0 or self.y < 0:
            raise GridError(f"negative tile coordinate in {self!r}")

    def key(self) -> tuple[int, int, int, int, int]:
        return (self.theme, self.scale, self.scene, self.x, self.y)


@dataclass(frozen=True)
class UtmCoord:
    """UTM position: zone plus meters east of the zone's false origin and
    north of the equator.  Northern hemisphere only."""

    zone: int
    easting: float
    northing: float

    def __post_init__(self):
        if not 1 <= self.zone <= 60:
            raise GridError(f"UTM zone {self.zone} outside [1, 60]")
        if self.northing < 0:
            raise GridError("negative northing: southern hemisphere unsupported")


@dataclass(frozen=True)
class GeoCoord:
    lat: float
    lon: float

    def __post_init__(self):
        if not MIN_LAT <= self.lat <= MAX_LAT:
            raise GridError(f"latitude {self.lat} outside [{MIN_LAT}, {MAX_LAT}]")
        if not -180.0 <= self.lon < 180.0:
            raise GridError(f"longitude {self.lon} outside [-180, 180)")


def tile_from_utm(utm: UtmCoord, theme: Theme, scale: int) -> TileAddress:
    """Address of the tile containing a UTM point.

    The scene is the UTM zone.  A point exactly on a grid line belongs to
    the tile having it as top-left corner (x floors, y ceils).
    """
    if theme.kind != "projected":
        raise GridError("raw themes have no UTM addressing")
    if utm.easting < 0:
        raise GridError("negative easting")
    extent = tile_extent_m(scale)
    x = math.floor(Fraction(utm.easting) / extent)
    y = math.ceil(Fraction(utm.northing) / extent)
    return TileAddress(theme.id, scale, utm.zone, x, y)


def utm_of_tile(addr: TileAddress, theme: Theme) -> UtmCoord:
    """Top-left corner of a tile in UTM meters."""
    if theme.kind != "projected":
        raise GridError("raw themes have no UTM addressing")
    extent = tile_extent_m(addr.scale)
    return UtmCoord(addr.scene, float(addr.x * extent), float(addr.y * extent))


def snap_to_grid(utm: UtmCoord, scale: int) -> UtmCoord:
    """Nearest grid-aligned top-left corner at or left/above the point:
    easting floors to a multiple of the tile extent, northing ceils."""
    extent = tile_extent_m(scale)
    easting = math.floor(Fraction(utm.easting) / extent) * extent
    northing = math.ceil(Fraction(utm.northing) / extent) * extent
    return UtmCoord(utm.zone, float(easting), float(northing))


def parent(addr: TileAddress, theme: Theme) -> TileAddress:
    """Tile one level coarser whose footprint contains this tile."""
    if addr.scale >= theme.top_scale:
        raise GridError(f"no parent above scale {addr.scale}")
    return TileAddress(
        addr.theme,
        addr.scale + 1,
        addr.scene,
        addr.x // 2,
        -(-addr.y // 2),  # ceil
    )


def children(addr: TileAddress, theme: Theme) -> list[tuple[TileAddress, str]]:
    """The four tiles one level finer, with their quadrant in the parent.

    Quadrant order is tl, tr, bl, br.  A bl/br child only exists for y >= 1;
    tiles on the y = 0 row of a coarser level have no bottom children (their
    would-be footprint lies below the northing origin).
    """
    if addr.scale <= min(theme.pyramid_levels):
        raise GridError(f"no children below scale {addr.scale}")
    out = []
    for quadrant in QUADRANTS:
        cx = 2 * addr.x + (1 if quadrant in ("tr", "br") else 0)
        cy = 2 * addr.y - (1 if quadrant in ("bl", "br") else 0)
        if cy < 0:
            continue
        out.append((TileAddress(addr.theme, addr.scale - 1, addr.scene, cx, cy), quadrant))
    return out


def utm_zone_of_lon(lon: float) -> int:
    """UTM zone for a longitude: 6-degree wedges numbered from the Date Line."""
    if not -180.0 <= lon < 180.0:
        raise GridError(f"longitude {lon} outside [-180, 180)")
    return min(60, max(1, int(math.floor((lon + 180.0) / 6.0)) + 1))


def zone_central_meridian(zone: int) -> float:
    if not 1 <= zone <= 60:
        raise GridError(f"UTM zone {zone} outside [1, 60]")
    return -183.0 + 6.0 * zone


# ---------------------------------------------------------------------------
# Transverse Mercator projection (WGS84 ellipsoid, standard UTM parameters).
#
# Series expansions follow the classic ellipsoidal formulation used by USGS
# software; truncation error is far below the 1 cm round-trip budget inside
# a zone's validity band.

_A = 6378137.0  # WGS84 semi-major axis
_F = 1.0 / 298.257223563
_E2 = _F * (2.0 - _F)
_E4 = _E2 * _E2
_E6 = _E4 * _E2
_EP2 = _E2 / (1.0 - _E2)
_K0 = 0.9996
_FALSE_EASTING = 500000.0

_MIN_VALID_EASTING = 100000.0
_MAX_VALID_EASTING = 900000.0

_M_COEF0 = 1.0 - _E2 / 4.0 - 3.0 * _E4 / 64.0 - 5.0 * _E6 / 256.0
_M_COEF2 = 3.0 * _E2 / 8.0 + 3.0 * _E4 / 32.0 + 45.0 * _E6 / 1024.0
_M_COEF4 = 15.0 * _E4 / 256.0 + 45.0 * _E6 / 1024.0
_M_COEF6 = 35.0 * _E6 / 3072.0


def _meridian_arc(phi: float) -> float:
    """Ellipsoidal distance from the equator to latitude phi (radians)."""
    return _A * (
        _M_COEF0 * phi
        - _M_COEF2 * math.sin(2.0 * phi)
        + _M_COEF4 * math.sin(4.0 * phi)
        - _M_COEF6 * math.sin(6.0 * phi)
    )


def latlon_to_utm(geo: GeoCoord, zone: int | None = None) -> UtmCoord:
    """Project a geographic coordinate to UTM.

    The zone defaults to the longitude's natural zone; passing one projects
    into that zone's grid instead (useful near zone seams).  Latitudes south
    of the equator are rejected: the warehouse is northern-hemisphere only.
    """
    if geo.lat < 0:
        raise GridError("southern-hemisphere latitudes unsupported")
    if zone is None:
        zone = utm_zone_of_lon(geo.lon)
    phi = math.radians(geo.lat)
    lam = math.radians(geo.lon)
    lam0 = math.radians(zone_central_meridian(zone))

    sin_phi = math.sin(phi)
    cos_phi = math.cos(phi)
    tan_phi = math.tan(phi)

    n = _A / math.sqrt(1.0 - _E2 * sin_phi * sin_phi)
    t = tan_phi * tan_phi
    c = _EP2 * cos_phi * cos_phi
    a = (lam - lam0) * cos_phi
    m = _meridian_arc(phi)

    a2 = a * a
    a3 = a2 * a
    a4 = a2 * a2
    a5 = a4 * a
    a6 = a4 * a2

    easting = _K0 * n * (
        a
        + (1.0 - t + c) * a3 / 6.0
        + (5.0 - 18.0 * t + t * t + 72.0 * c - 58.0 * _EP2) * a5 / 120.0
    ) + _FALSE_EASTING
    northing = _K0 * (
        m
        + n * tan_phi * (
            a2 / 2.0
            + (5.0 - t + 9.0 * c + 4.0 * c * c) * a4 / 24.0
            + (61.0 - 58.0 * t + t * t + 600.0 * c - 330.0 * _EP2) * a6 / 720.0
        )
    )
    return UtmCoord(zone, easting, northing)


def utm_to_latlon(utm: UtmCoord) -> GeoCoord:
    """Inverse projection.  Eastings must lie inside the zone validity band
    (100 km .. 900 km from the false origin)."""
    if not _MIN_VALID_EASTING <= utm.easting <= _MAX_VALID_EASTING:
        raise GridError(f"easting {utm.easting} outside zone validity band")
    x = utm.easting - _FALSE_EASTING
    m = utm.northing / _K0
    mu = m / (_A * _M_COEF0)

    e1 = (1.0 - math.sqrt(1.0 - _E2)) / (1.0 + math.sqrt(1.0 - _E2))
    e1_2 = e1 * e1
    e1_3 = e1_2 * e1
    e1_4 = e1_2 * e1_2
    phi1 = (
        mu
        + (3.0 * e1 / 2.0 - 27.0 * e1_3 / 32.0) * math.sin(2.0 * mu)
        + (21.0 * e1_2 / 16.0 - 55.0 * e1_4 / 32.0) * math.sin(4.0 * mu)
        + (151.0 * e1_3 / 96.0) * math.sin(6.0 * mu)
        + (1097.0 * e1_4 / 512.0) * math.sin(8.0 * mu)
    )

    sin_phi1 = math.sin(phi1)
    cos_phi1 = math.cos(phi1)
    tan_phi1 = math.tan(phi1)

    c1 = _EP2 * cos_phi1 * cos_phi1
    t1 = tan_phi1 * tan_phi1
    sin2 = 1.0 - _E2 * sin_phi1 * sin_phi1
    n1 = _A / math.sqrt(sin2)
    r1 = _A * (1.0 - _E2) / (sin2 * math.sqrt(sin2))
    d = x / (n1 * _K0)

    d2 = d * d
    d3 = d2 * d
    d4 = d2 * d2
    d5 = d4 * d
    d6 = d4 * d2

    phi = phi1 - (n1 * tan_phi1 / r1) * (
        d2 / 2.0
        - (5.0 + 3.0 * t1 + 10.0 * c1 - 4.0 * c1 * c1 - 9.0 * _EP2) * d4 / 24.0
        + (61.0 + 90.0 * t1 + 298.0 * c1 + 45.0 * t1 * t1 - 252.0 * _EP2 - 3.0 * c1 * c1)
        * d6
        / 720.0
    )
    lam = math.radians(zone_central_meridian(utm.zone)) + (
        d
        - (1.0 + 2.0 * t1 + c1) * d3 / 6.0
        + (5.0 - 2.0 * c1 + 28.0 * t1 - 3.0 * c1 * c1 + 8.0 * _EP2 + 24.0 * t1 * t1)
        * d5
        / 120.0
    ) / cos_phi1
    return GeoCoord(math.degrees(phi), math.degrees(lam))
