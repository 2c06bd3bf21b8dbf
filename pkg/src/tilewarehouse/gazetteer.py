"""Place-name directory: snowflake rows, name search, nearest-place captions.

The schema is a center ``Place`` table with synonym tables around it and
state/country parents, all loaded from a tab-separated file into memory.
After import, reads are lock-free; imports are single-writer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .grid import GeoCoord, GridError, TileAddress

EARTH_RADIUS_KM = 6371.0

WINDS = ("N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE",
         "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW")

ROW_TYPES = ("place", "alt_place", "state", "alt_state", "country", "alt_country")


class GazetteerError(RuntimeError):
    pass


@dataclass(frozen=True)
class Country:
    country_id: int
    name: str


@dataclass(frozen=True)
class State:
    state_id: int
    name: str
    country_id: int


@dataclass(frozen=True)
class Place:
    place_id: int
    formal_name: str
    state_id: int | None
    country_id: int
    lat: float
    lon: float


@dataclass(frozen=True)
class FamousPlace:
    label: str
    target: TileAddress | GeoCoord
    curated: bool = True


@dataclass
class ImportReport:
    places: int = 0
    alt_places: int = 0
    states: int = 0
    alt_states: int = 0
    countries: int = 0
    alt_countries: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)

    @property
    def searchable_names(self) -> int:
        return self.places + self.alt_places


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a spherical earth of radius 6371 km."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


def initial_bearing_deg(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Initial great-circle bearing from point 1 toward point 2, 0..360."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    x = math.sin(dl) * math.cos(p2)
    y = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    return (math.degrees(math.atan2(x, y)) + 360.0) % 360.0


def wind_of_bearing(bearing: float) -> str:
    """Quantize a bearing to the sixteen compass winds."""
    return WINDS[round(bearing / 22.5) % 16]


class Gazetteer:
    def __init__(self):
        self.countries: dict[int, Country] = {}
        self.states: dict[int, State] = {}
        self.places: dict[int, Place] = {}
        self.famous: list[FamousPlace] = []
        # lowercased name -> ids, formal and alternate names together
        self._place_names: dict[str, list[int]] = {}
        self._state_names: dict[str, list[int]] = {}
        self._country_names: dict[str, list[int]] = {}
        self._next_id = {"place": 1, "state": 1, "country": 1}

    def __len__(self) -> int:
        return len(self.places)

    # -- building -----------------------------------------------------------

    def _add_name(self, index: dict[str, list[int]], name: str, ident: int) -> None:
        index.setdefault(name.casefold(), []).append(ident)

    def add_country(self, name: str) -> Country:
        country = Country(self._next_id["country"], name)
        self._next_id["country"] += 1
        self.countries[country.country_id] = country
        self._add_name(self._country_names, name, country.country_id)
        return country

    def add_state(self, name: str, country: Country) -> State:
        state = State(self._next_id["state"], name, country.country_id)
        self._next_id["state"] += 1
        self.states[state.state_id] = state
        self._add_name(self._state_names, name, state.state_id)
        return state

    def add_place(self, name: str, lat: float, lon: float,
                  state: State | None = None, country: Country | None = None) -> Place:
        if state is not None:
            country_id = state.country_id
            state_id = state.state_id
        elif country is not None:
            country_id = country.country_id
            state_id = None
        else:
            raise GazetteerError(f"place {name!r} needs a state or country parent")
        place = Place(self._next_id["place"], name, state_id, country_id, lat, lon)
        self._next_id["place"] += 1
        self.places[place.place_id] = place
        self._add_name(self._place_names, name, place.place_id)
        return place

    def add_alt(self, kind: str, alt_name: str, parent_name: str) -> None:
        """Attach a synonym to an existing row, resolved by (any) name."""
        target = {"alt_place": (self._place_names,),
                  "alt_state": (self._state_names,),
                  "alt_country": (self._country_names,)}[kind][0]
        ids = target.get(parent_name.casefold())
        if not ids:
            raise GazetteerError(f"unknown parent {parent_name!r} for {kind}")
        target.setdefault(alt_name.casefold(), []).append(min(ids))

    def import_places(self, path: str | Path) -> ImportReport:
        """Load the tab-separated corpus.

        Columns: name, type, parent_name, lat, lon.  Types: place, alt_place,
        state, alt_state, country, alt_country.  Rows with dangling parents
        are rejected and reported with their line numbers.
        """
        report = ImportReport()
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) < 5:
                    report.rejected.append((line_no, "fewer than 5 columns"))
                    continue
                name, row_type, parent_name, lat_s, lon_s = (p.strip() for p in parts[:5])
                if not name:
                    report.rejected.append((line_no, "empty name"))
                    continue
                if row_type not in ROW_TYPES:
                    report.rejected.append((line_no, f"unknown type {row_type!r}"))
                    continue
                try:
                    if row_type == "country":
                        self.add_country(name)
                        report.countries += 1
                    elif row_type == "state":
                        country = self._lookup_country(parent_name)
                        if country is None:
                            raise GazetteerError(f"unknown country {parent_name!r}")
                        self.add_state(name, country)
                        report.states += 1
                    elif row_type == "place":
                        lat, lon = float(lat_s), float(lon_s)
                        state = self._lookup_state(parent_name)
                        if state is not None:
                            self.add_place(name, lat, lon, state=state)
                        else:
                            country = self._lookup_country(parent_name)
                            if country is None:
                                raise GazetteerError(
                                    f"unknown state/country {parent_name!r}")
                            self.add_place(name, lat, lon, country=country)
                        report.places += 1
                    else:
                        self.add_alt(row_type, name, parent_name)
                        if row_type == "alt_place":
                            report.alt_places += 1
                        elif row_type == "alt_state":
                            report.alt_states += 1
                        else:
                            report.alt_countries += 1
                except (GazetteerError, ValueError) as exc:
                    report.rejected.append((line_no, str(exc)))
        return report

    def _lookup_country(self, name: str) -> Country | None:
        ids = self._country_names.get(name.casefold())
        return self.countries[min(ids)] if ids else None

    def _lookup_state(self, name: str) -> State | None:
        ids = self._state_names.get(name.casefold())
        return self.states[min(ids)] if ids else None

    # -- famous places ---------------------------------------------------------

    def load_famous(self, path: str | Path) -> int:
        """Curated quick links, JSON: [{label, lat, lon} | {label, theme,
        scale, scene, x, y}]."""
        entries = json.loads(Path(path).read_text("utf-8"))
        for entry in entries:
            if "lat" in entry:
                target: TileAddress | GeoCoord = GeoCoord(entry["lat"], entry["lon"])
            else:
                target = TileAddress(entry["theme"], entry["scale"], entry["scene"],
                                     entry["x"], entry["y"])
            self.famous.append(FamousPlace(entry["label"], target))
        return len(self.famous)

    def list_famous(self) -> list[FamousPlace]:
        return list(self.famous)

    # -- search ------------------------------------------------------------------

    def search_by_name(self, name: str, state: str | None = None,
                       country: str | None = None) -> list[Place]:
        """Case-insensitive lookup over formal and alternate names.

        Exact matches rank before prefix matches; within a rank the order is
        (formal_name, place_id), so results are deterministic.
        """
        if not name:
            raise GazetteerError("empty search name")
        needle = name.casefold()
        state_ids = None
        if state:
            state_ids = set(self._state_names.get(state.casefold(), ()))
        country_ids = None
        if country:
            country_ids = set(self._country_names.get(country.casefold(), ()))

        ranked: dict[int, int] = {}
        for key, ids in self._place_names.items():
            if key == needle:
                rank = 0
            elif key.startswith(needle):
                rank = 1
            else:
                continue
            for pid in ids:
                ranked[pid] = min(rank, ranked.get(pid, 1))
        out = []
        for pid, rank in ranked.items():
            place = self.places[pid]
            if state_ids is not None and place.state_id not in state_ids:
                continue
            if country_ids is not None and place.country_id not in country_ids:
                continue
            out.append((rank, place.formal_name, place.place_id, place))
        out.sort(key=lambda item: item[:3])
        return [item[3] for item in out]

    def nearest_place(self, geo: GeoCoord) -> tuple[Place, float, str]:
        """Closest place by great-circle distance, plus the compass wind of
        the query point as seen from that place."""
        if not self.places:
            raise GazetteerError("gazetteer is empty")
        best = None
        best_km = math.inf
        for place in self.places.values():
            km = haversine_km(place.lat, place.lon, geo.lat, geo.lon)
            if km < best_km or (km == best_km and best and place.place_id < best.place_id):
                best, best_km = place, km
        bearing = initial_bearing_deg(best.lat, best.lon, geo.lat, geo.lon)
        return best, best_km, wind_of_bearing(bearing)

    def caption(self, geo: GeoCoord) -> str:
        """Human caption like "20 Km SW of Springfield, Stateline, Examplia"."""
        place, km, wind = self.nearest_place(geo)
        parts = [place.formal_name]
        if place.state_id is not None:
            parts.append(self.states[place.state_id].name)
        parts.append(self.countries[place.country_id].name)
        return f"{round(km)} Km {wind} of {', '.join(parts)}"

    def place_context(self, place: Place) -> tuple[str | None, str]:
        state = self.states[place.state_id].name if place.state_id is not None else None
        return state, self.countries[place.country_id].name


def load_directory(path: str | Path) -> Gazetteer:
    """Build a gazetteer from a directory holding ``places.tsv`` and an
    optional ``famous.json``."""
    path = Path(path)
    gaz = Gazetteer()
    places = path / "places.tsv"
    if places.exists():
        gaz.import_places(places)
    famous = path / "famous.json"
    if famous.exists():
        gaz.load_famous(famous)
    return gaz
