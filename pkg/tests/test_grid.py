"""Grid math: scale formulas, addressing, pyramid relations, projection."""

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilewarehouse import grid
from tilewarehouse.grid import (
    GeoCoord,
    GridError,
    Resolution,
    TileAddress,
    UtmCoord,
)
from tilewarehouse.themes import AERIAL, STRIP, TOPO


class TestScaleResolution:
    def test_formula_over_all_levels(self):
        for level in range(23):
            res = grid.resolution_of_scale(level)
            assert res.meters == Fraction(2) ** (level - 10)
            assert grid.scale_of_resolution(res) == level

    @pytest.mark.parametrize("meters,scale", [
        (1, 10),
        (4096, 22),
        (Fraction(1, 1024), 0),
        (2, 11),
    ])
    def test_known_points(self, meters, scale):
        assert grid.scale_of_resolution(Resolution.from_meters(meters)) == scale
        assert grid.resolution_of_scale(scale).meters == Fraction(meters)

    @pytest.mark.parametrize("bad", [0, -1, 3, 1.5, Fraction(3, 4), 8192])
    def test_rejects_non_powers(self, bad):
        with pytest.raises(GridError):
            Resolution.from_meters(bad)

    def test_scale_range_enforced(self):
        with pytest.raises(GridError):
            grid.resolution_of_scale(23)
        with pytest.raises(GridError):
            grid.resolution_of_scale(-1)


class TestTileAddressing:
    def test_worked_key(self):
        utm = UtmCoord(10, 553200, 4182600)
        addr = grid.tile_from_utm(utm, AERIAL, 10)
        assert (addr.scene, addr.x, addr.y) == (10, 2766, 20913)
        back = grid.utm_of_tile(addr, AERIAL)
        assert (back.zone, back.easting, back.northing) == (10, 553200.0, 4182600.0)

    def test_origin(self):
        addr = grid.tile_from_utm(UtmCoord(10, 0, 0), AERIAL, 10)
        assert (addr.x, addr.y) == (0, 0)
        assert grid.utm_of_tile(addr, AERIAL).easting == 0.0

    def test_interior_point_floor_ceil(self):
        # easting 401 is inside tile column 2; northing 399 is inside the
        # tile whose top edge is 400, i.e. row 2 under top-left anchoring.
        addr = grid.tile_from_utm(UtmCoord(10, 401, 399), AERIAL, 10)
        assert (addr.x, addr.y) == (2, 2)
        corner = grid.utm_of_tile(addr, AERIAL)
        assert corner.easting <= 401 < corner.easting + 200
        assert corner.northing - 200 < 399 <= corner.northing

    def test_scale11_tile_corner(self):
        addr = TileAddress(AERIAL.id, 11, 10, 3, 5)
        corner = grid.utm_of_tile(addr, AERIAL)
        assert (corner.easting, corner.northing) == (1200.0, 2000.0)

    def test_raw_theme_rejected(self):
        with pytest.raises(GridError):
            grid.tile_from_utm(UtmCoord(1, 0, 0), STRIP, 10)
        with pytest.raises(GridError):
            grid.utm_of_tile(TileAddress(STRIP.id, 10, 1, 0, 0), STRIP)

    @given(x=st.integers(0, 10**6), y=st.integers(0, 10**6),
           scale=st.integers(0, 22))
    def test_roundtrip_on_grid_points(self, x, y, scale):
        extent = grid.tile_extent_m(scale)
        utm = UtmCoord(10, float(x * extent), float(y * extent))
        addr = grid.tile_from_utm(utm, AERIAL, scale)
        assert (addr.x, addr.y) == (x, y)

    @given(e=st.floats(0, 10**7, allow_nan=False), n=st.floats(0, 10**7, allow_nan=False),
           scale=st.integers(5, 22))
    def test_point_always_inside_its_tile(self, e, n, scale):
        addr = grid.tile_from_utm(UtmCoord(10, e, n), AERIAL, scale)
        extent = grid.tile_extent_m(scale)
        assert addr.x * extent <= Fraction(e) < (addr.x + 1) * extent
        assert (addr.y - 1) * extent < Fraction(n) <= addr.y * extent or (n == 0 and addr.y == 0)


class TestSnapToGrid:
    def test_example(self):
        snapped = grid.snap_to_grid(UtmCoord(10, 553250, 4182550), 10)
        assert (snapped.easting, snapped.northing) == (553200.0, 4182600.0)

    def test_fixpoint(self):
        aligned = UtmCoord(10, 553200, 4182600)
        snapped = grid.snap_to_grid(aligned, 10)
        assert (snapped.easting, snapped.northing) == (553200.0, 4182600.0)

    def test_scale11_uses_400m_boundaries(self):
        snapped = grid.snap_to_grid(UtmCoord(10, 553250, 4182550), 11)
        assert snapped.easting % 400 == 0
        assert snapped.northing % 400 == 0
        assert (snapped.easting, snapped.northing) == (553200.0, 4182800.0)

    @given(e=st.floats(0, 10**7, allow_nan=False),
           n=st.floats(0, 10**7, allow_nan=False), scale=st.integers(0, 22))
    def test_idempotent_and_aligned(self, e, n, scale):
        extent = grid.tile_extent_m(scale)
        snapped = grid.snap_to_grid(UtmCoord(10, e, n), scale)
        assert Fraction(snapped.easting) % extent == 0
        assert Fraction(snapped.northing) % extent == 0
        assert snapped.easting <= e
        assert snapped.northing >= n
        again = grid.snap_to_grid(snapped, scale)
        assert (again.easting, again.northing) == (snapped.easting, snapped.northing)


class TestPyramidRelations:
    def test_parent_examples(self):
        a = TileAddress(1, 10, 10, 4, 4)
        assert grid.parent(a, AERIAL) == TileAddress(1, 11, 10, 2, 2)
        b = TileAddress(1, 10, 10, 5, 3)
        assert grid.parent(b, AERIAL) == TileAddress(1, 11, 10, 2, 2)
        origin = TileAddress(1, 10, 10, 0, 0)
        assert grid.parent(origin, AERIAL) == TileAddress(1, 11, 10, 0, 0)

    def test_parent_contains_child(self):
        child = TileAddress(1, 10, 10, 5, 3)
        parent = grid.parent(child, AERIAL)
        ce = grid.utm_of_tile(child, AERIAL)
        pe = grid.utm_of_tile(parent, AERIAL)
        child_extent = float(grid.tile_extent_m(10))
        parent_extent = float(grid.tile_extent_m(11))
        assert pe.easting <= ce.easting
        assert ce.easting + child_extent <= pe.easting + parent_extent
        assert pe.northing >= ce.northing
        assert ce.northing - child_extent >= pe.northing - parent_extent

    def test_children_example(self):
        addrs = grid.children(TileAddress(1, 11, 10, 2, 2), AERIAL)
        got = {q: (a.x, a.y) for a, q in addrs}
        assert got == {"tl": (4, 4), "tr": (5, 4), "bl": (4, 3), "br": (5, 3)}

    def test_children_example_low_row(self):
        addrs = grid.children(TileAddress(1, 11, 10, 0, 1), AERIAL)
        got = {q: (a.x, a.y) for a, q in addrs}
        assert got == {"tl": (0, 2), "tr": (1, 2), "bl": (0, 1), "br": (1, 1)}

    def test_top_and_base_guards(self):
        with pytest.raises(GridError):
            grid.parent(TileAddress(1, 16, 10, 0, 0), AERIAL)
        with pytest.raises(GridError):
            grid.children(TileAddress(1, 10, 10, 0, 0), AERIAL)

    @given(x=st.integers(0, 10**6), y=st.integers(1, 10**6),
           scale=st.integers(11, 16))
    @settings(max_examples=300)
    def test_parent_children_roundtrip(self, x, y, scale):
        addr = TileAddress(1, scale, 10, x, y)
        kids = grid.children(addr, AERIAL)
        assert len(kids) == 4
        for child, _ in kids:
            assert grid.parent(child, AERIAL) == addr

    @given(x=st.integers(0, 10**5), y=st.integers(1, 10**5), scale=st.integers(11, 16))
    @settings(max_examples=100)
    def test_children_partition_parent_footprint(self, x, y, scale):
        addr = TileAddress(1, scale, 10, x, y)
        extent = grid.tile_extent_m(scale)
        child_extent = grid.tile_extent_m(scale - 1)
        cells = set()
        for child, _ in grid.children(addr, AERIAL):
            corner = grid.utm_of_tile(child, AERIAL)
            cells.add((Fraction(corner.easting), Fraction(corner.northing)))
        e0 = x * extent
        n0 = y * extent
        expected = {
            (e0, n0), (e0 + child_extent, n0),
            (e0, n0 - child_extent), (e0 + child_extent, n0 - child_extent),
        }
        assert cells == expected


class TestZones:
    def test_west_coast(self):
        assert grid.utm_zone_of_lon(-122.4) == 10

    def test_date_line(self):
        assert grid.utm_zone_of_lon(-180.0) == 1

    def test_greenwich(self):
        assert grid.utm_zone_of_lon(0.0) == 31

    def test_out_of_range(self):
        with pytest.raises(GridError):
            grid.utm_zone_of_lon(180.0)
        with pytest.raises(GridError):
            grid.utm_zone_of_lon(-180.5)

    def test_central_meridian(self):
        assert grid.zone_central_meridian(10) == -123.0
        assert grid.zone_central_meridian(31) == 3.0


class TestProjection:
    def test_false_easting_at_equator(self):
        utm = grid.latlon_to_utm(GeoCoord(0.0, grid.zone_central_meridian(31)))
        assert utm.easting == pytest.approx(500000.0, abs=1e-6)
        assert utm.northing == pytest.approx(0.0, abs=1e-6)

    def test_published_vector(self):
        # Widely published WGS84 reference point (Toronto's CN Tower):
        # 43.642567 N, 79.387139 W -> zone 17, 630084 E, 4833439 N.
        utm = grid.latlon_to_utm(GeoCoord(43.642567, -79.387139))
        assert utm.zone == 17
        assert utm.easting == pytest.approx(630084.0, abs=1.0)
        assert utm.northing == pytest.approx(4833439.0, abs=1.0)

    def test_inverse_of_published_vector(self):
        geo = grid.utm_to_latlon(UtmCoord(17, 630084.0, 4833439.0))
        assert geo.lat == pytest.approx(43.642567, abs=2e-5)
        assert geo.lon == pytest.approx(-79.387139, abs=2e-5)

    def test_roundtrip_meters(self):
        import random

        rng = random.Random(7)
        for _ in range(1000):
            lat = rng.uniform(0.0, 84.0)
            lon = rng.uniform(-180.0, 179.999)
            utm = grid.latlon_to_utm(GeoCoord(lat, lon))
            if not 100000 <= utm.easting <= 900000:
                continue
            geo = grid.utm_to_latlon(utm)
            back = grid.latlon_to_utm(geo, zone=utm.zone)
            assert math.hypot(back.easting - utm.easting,
                              back.northing - utm.northing) < 0.01

    def test_southern_hemisphere_rejected(self):
        with pytest.raises(GridError):
            grid.latlon_to_utm(GeoCoord(-10.0, 0.0))

    def test_out_of_band_latitude_rejected(self):
        with pytest.raises(GridError):
            GeoCoord(85.0, 0.0)
        with pytest.raises(GridError):
            GeoCoord(-80.5, 0.0)

    def test_easting_validity_band(self):
        with pytest.raises(GridError):
            grid.utm_to_latlon(UtmCoord(10, 50000, 4000000))
        with pytest.raises(GridError):
            grid.utm_to_latlon(UtmCoord(10, 950000, 4000000))


class TestThemeTypes:
    def test_topo_source_bindings(self):
        assert TOPO.base_scale_for_source(2.5) == 11
        assert TOPO.base_scale_for_source(10.0) == 14
        assert TOPO.base_scale_for_source(25.0) == 16
        assert TOPO.base_scale == 11

    def test_aerial_defaults(self):
        assert AERIAL.base_scales == (10,)
        assert AERIAL.base_scale_for_source(1.0) == 10
        assert AERIAL.top_scale == 16

    def test_negative_tile_coords_rejected(self):
        with pytest.raises(GridError):
            TileAddress(1, 10, 10, -1, 0)

    def test_negative_northing_rejected(self):
        with pytest.raises(GridError):
            UtmCoord(10, 0, -5)
