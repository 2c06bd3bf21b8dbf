"""Gazetteer: snowflake import, synonym resolution, ranked search against a
brute-force oracle, and nearest-place captions."""

import math
import random
import re

import pytest

from tilewarehouse.gazetteer import (
    Gazetteer,
    GazetteerError,
    WINDS,
    haversine_km,
    initial_bearing_deg,
    wind_of_bearing,
)
from tilewarehouse.grid import GeoCoord, TileAddress


@pytest.fixture
def small(tmp_path) -> Gazetteer:
    rows = [
        "Examplia\tcountry\t\t\t",
        "Freedonia\tcountry\t\t\t",
        "Westmark\tstate\tExamplia\t\t",
        "Eastmark\tstate\tExamplia\t\t",
        "Sylvania\tstate\tFreedonia\t\t",
        "Springfield\tplace\tWestmark\t37.80\t-122.40",
        "Springfield\tplace\tSylvania\t41.10\t-100.00",
        "San Adrian\tplace\tWestmark\t37.70\t-122.30",
        "San Benito\tplace\tEastmark\t36.90\t-121.00",
        "Saltmarsh\tplace\tExamplia\t37.00\t-122.00",
        "Old Spring\talt_place\tSpringfield\t\t",
        "The Mark\talt_state\tWestmark\t\t",
        "Examland\talt_country\tExamplia\t\t",
    ]
    path = tmp_path / "places.tsv"
    path.write_text("\n".join(rows) + "\n", "utf-8")
    gaz = Gazetteer()
    report = gaz.import_places(path)
    assert report.rejected == []
    return gaz


class TestImport:
    def test_counts(self, small):
        assert len(small) == 5
        assert len(small.countries) == 2
        assert len(small.states) == 3

    def test_empty_file(self, tmp_path):
        path = tmp_path / "places.tsv"
        path.write_text("")
        report = Gazetteer().import_places(path)
        assert report.places == 0
        assert report.searchable_names == 0

    def test_three_places_two_synonyms_five_names(self, tmp_path):
        rows = [
            "Land\tcountry\t\t\t",
            "A\tplace\tLand\t10\t10",
            "B\tplace\tLand\t11\t11",
            "C\tplace\tLand\t12\t12",
            "A2\talt_place\tA\t\t",
            "B2\talt_place\tB\t\t",
        ]
        path = tmp_path / "p.tsv"
        path.write_text("\n".join(rows))
        gaz = Gazetteer()
        report = gaz.import_places(path)
        assert report.searchable_names == 5
        assert gaz.search_by_name("A2")[0].formal_name == "A"

    def test_rejected_rows_reported_with_line_numbers(self, tmp_path):
        rows = [
            "Land\tcountry\t\t\t",
            "Ghosttown\tplace\tNowhere\t10\t10",      # line 2: dangling parent
            "Orphan\talt_place\tMissing\t\t",          # line 3: dangling parent
            "Badline\tplace\tLand\tnot-a-number\t5",   # line 4: bad lat
            "X\tmystery\tLand\t1\t1",                  # line 5: unknown type
            "GoodTown\tplace\tLand\t20\t20",
        ]
        path = tmp_path / "p.tsv"
        path.write_text("\n".join(rows))
        gaz = Gazetteer()
        report = gaz.import_places(path)
        assert [line for line, _ in report.rejected] == [2, 3, 4, 5]
        assert report.places == 1


class TestSearch:
    def test_exact_formal_name_first(self, small):
        results = small.search_by_name("Springfield")
        assert results[0].formal_name == "Springfield"
        assert len(results) == 2  # both Springfields, deterministic order
        assert results[0].place_id < results[1].place_id

    def test_synonym_resolves_to_canonical(self, small):
        via_alt = small.search_by_name("Old Spring")
        assert via_alt and via_alt[0].formal_name == "Springfield"
        direct = small.search_by_name("Springfield")
        assert via_alt[0].place_id == direct[0].place_id

    def test_prefix_ranked_after_exact(self, small):
        results = small.search_by_name("San")
        names = [p.formal_name for p in results]
        assert names == ["San Adrian", "San Benito"]

    def test_case_insensitive(self, small):
        assert small.search_by_name("sPrIngFiElD") == small.search_by_name("Springfield")

    def test_state_filter(self, small):
        results = small.search_by_name("Springfield", state="Sylvania")
        assert len(results) == 1
        assert small.states[results[0].state_id].name == "Sylvania"

    def test_state_filter_via_alt_state(self, small):
        results = small.search_by_name("Springfield", state="The Mark")
        assert len(results) == 1
        assert small.states[results[0].state_id].name == "Westmark"

    def test_country_filter_via_alt(self, small):
        results = small.search_by_name("San", country="Examland")
        assert {p.formal_name for p in results} == {"San Adrian", "San Benito"}
        assert small.search_by_name("San", country="Freedonia") == []

    def test_empty_name_rejected(self, small):
        with pytest.raises(GazetteerError):
            small.search_by_name("")

    def test_no_match_is_empty(self, small):
        assert small.search_by_name("Zyzzogeton") == []


def random_corpus(tmp_path, n_places=400, seed=17):
    rng = random.Random(seed)
    lines = ["Examplia\tcountry\t\t\t", "Freedonia\tcountry\t\t\t"]
    states = []
    for i in range(6):
        country = "Examplia" if i % 2 else "Freedonia"
        name = f"State{i}"
        states.append(name)
        lines.append(f"{name}\tstate\t{country}\t\t")
    stems = ["Spring", "River", "Oak", "San ", "Fort ", "Lake ", "New ", "Mount "]
    names = []
    for i in range(n_places):
        name = f"{rng.choice(stems)}{chr(65 + i % 26)}{i}"
        names.append(name)
        state = rng.choice(states)
        lat = rng.uniform(0, 80)
        lon = rng.uniform(-179, 179)
        lines.append(f"{name}\tplace\t{state}\t{lat:.6f}\t{lon:.6f}")
    for i in range(0, n_places, 5):
        lines.append(f"Alt {names[i]}\talt_place\t{names[i]}\t\t")
    path = tmp_path / "corpus.tsv"
    path.write_text("\n".join(lines), "utf-8")
    gaz = Gazetteer()
    report = gaz.import_places(path)
    assert report.rejected == []
    return gaz


class TestSearchOracle:
    def test_matches_brute_force_filter(self, tmp_path):
        gaz = random_corpus(tmp_path)
        rng = random.Random(5)

        # independent oracle over the raw tables
        def oracle(query, state=None):
            q = query.casefold()
            name_of = {}
            for key, ids in gaz._place_names.items():
                for pid in ids:
                    rank = 0 if key == q else (1 if key.startswith(q) else None)
                    if rank is not None:
                        name_of[pid] = min(rank, name_of.get(pid, 1))
            out = []
            for pid, rank in name_of.items():
                place = gaz.places[pid]
                if state is not None:
                    if place.state_id is None:
                        continue
                    if gaz.states[place.state_id].name.casefold() != state.casefold():
                        continue
                out.append((rank, place.formal_name, pid))
            out.sort()
            return [pid for _, _, pid in out]

        queries = ["spring", "RIVER", "san ", "Oak", "fort q", "new", "zzz"]
        queries += [rng.choice(list(gaz.places.values())).formal_name for _ in range(30)]
        for query in queries:
            state = rng.choice([None, "State1", "State4"])
            got = [p.place_id for p in gaz.search_by_name(query, state=state)]
            assert got == oracle(query, state), f"query={query!r} state={state}"


class TestNearest:
    def test_exact_hit_distance_zero(self, small):
        place, km, wind = small.nearest_place(GeoCoord(37.80, -122.40))
        assert place.formal_name == "Springfield"
        assert km == 0.0

    def test_due_north_wind(self, tmp_path):
        path = tmp_path / "p.tsv"
        path.write_text("Land\tcountry\t\t\t\nSolo\tplace\tLand\t40.0\t-100.0\n")
        gaz = Gazetteer()
        gaz.import_places(path)
        place, km, wind = gaz.nearest_place(GeoCoord(41.0, -100.0))
        assert wind == "N"
        assert km == pytest.approx(111.19, abs=0.1)

    def test_all_16_winds_quantize(self):
        for i, wind in enumerate(WINDS):
            assert wind_of_bearing(i * 22.5) == wind
        assert wind_of_bearing(11.24) == "N"
        assert wind_of_bearing(11.26) == "NNE"
        assert wind_of_bearing(359.9) == "N"

    def test_argmin_matches_brute_force(self, tmp_path):
        gaz = random_corpus(tmp_path, n_places=300, seed=23)
        rng = random.Random(29)
        for _ in range(40):
            point = GeoCoord(rng.uniform(0, 80), rng.uniform(-179, 179))
            got_place, got_km, _ = gaz.nearest_place(point)
            best = min(gaz.places.values(),
                       key=lambda p: (haversine_km(p.lat, p.lon, point.lat, point.lon),
                                      p.place_id))
            assert got_place.place_id == best.place_id
            assert got_km == pytest.approx(
                haversine_km(best.lat, best.lon, point.lat, point.lon))

    def test_empty_gazetteer_errors(self):
        with pytest.raises(GazetteerError):
            Gazetteer().nearest_place(GeoCoord(10, 10))

    def test_caption_format(self, small):
        caption = small.caption(GeoCoord(37.95, -122.60))
        pattern = r"^\d+ Km (N|NNE|NE|ENE|E|ESE|SE|SSE|S|SSW|SW|WSW|W|WNW|NW|NNW) of .+"
        assert re.match(pattern, caption)
        assert caption.endswith("Springfield, Westmark, Examplia")

    def test_caption_without_state(self, tmp_path):
        path = tmp_path / "p.tsv"
        path.write_text("Land\tcountry\t\t\t\nSolo\tplace\tLand\t40.0\t-100.0\n")
        gaz = Gazetteer()
        gaz.import_places(path)
        assert gaz.caption(GeoCoord(40.0, -100.0)).endswith("Solo, Land")

    def test_bearing_oracle(self):
        # bearing from (0,0) due east is 90 degrees
        assert initial_bearing_deg(0, 0, 0, 1) == pytest.approx(90.0)
        assert initial_bearing_deg(0, 0, 1, 0) == pytest.approx(0.0)
        assert initial_bearing_deg(0, 0, 0, -1) == pytest.approx(270.0)

    def test_haversine_known_value(self):
        # one degree of latitude is ~111.19 km on the 6371 km sphere
        assert haversine_km(0, 0, 1, 0) == pytest.approx(
            math.pi * 6371.0 / 180.0, abs=1e-6)


class TestFamous:
    def test_insertion_order_and_targets(self, tmp_path):
        import json

        gaz = Gazetteer()
        path = tmp_path / "famous.json"
        path.write_text(json.dumps([
            {"label": "Great Falls", "theme": 1, "scale": 10, "scene": 10,
             "x": 2766, "y": 20913},
            {"label": "Somewhere", "lat": 37.5, "lon": -122.1},
        ]))
        assert gaz.load_famous(path) == 2
        famous = gaz.list_famous()
        assert [f.label for f in famous] == ["Great Falls", "Somewhere"]
        assert famous[0].target == TileAddress(1, 10, 10, 2766, 20913)
        assert famous[1].target == GeoCoord(37.5, -122.1)

    def test_empty(self):
        assert Gazetteer().list_famous() == []
