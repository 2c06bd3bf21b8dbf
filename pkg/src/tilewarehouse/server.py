"""HTTP service: tiles, page composition, search, coverage, metadata, jobs.

Stateless request handlers over the thread-safe store and gazetteer; each
endpoint makes a single batched store call.  Query parameters use the grid
key names throughout: T = theme, S = scene, Z = scale, X, Y.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import grid, themes
from .gazetteer import Gazetteer, load_directory
from .grid import GeoCoord, GridError, TileAddress
from .jobs import DuplicateMediaError, JobStore, parse_manifest
from .store import Store

PAGE_SIZES = {"small": (2, 3), "medium": (3, 4), "large": (4, 5)}

PAN_STEPS = {
    "n": (0, 1), "ne": (1, 1), "e": (1, 0), "se": (1, -1),
    "s": (0, -1), "sw": (-1, -1), "w": (-1, 0), "nw": (-1, 1),
}

_MIME = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".mjs": "application/javascript",
    ".css": "text/css",
    ".json": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


class BadRequest(ValueError):
    pass


def addr_json(addr: TileAddress | None) -> dict | None:
    if addr is None:
        return None
    return {"t": addr.theme, "s": addr.scene, "z": addr.scale,
            "x": addr.x, "y": addr.y}


def tile_url(addr: TileAddress) -> str:
    return (f"/tile?T={addr.theme}&S={addr.scene}&Z={addr.scale}"
            f"&X={addr.x}&Y={addr.y}")


def _addr_or_none(theme: int, scale: int, scene: int, x: int, y: int) -> TileAddress | None:
    if x < 0 or y < 0:
        return None
    return TileAddress(theme, scale, scene, x, y)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "tilewarehouse"

    # -- plumbing ------------------------------------------------------------

    def log_message(self, fmt, *args):
        if not getattr(self.server, "quiet", True):
            super().log_message(fmt, *args)

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _json(self, payload, status: int = 200) -> None:
        self._send(status, json.dumps(payload).encode("utf-8"),
                   "application/json; charset=utf-8")

    def _error(self, status: int, message: str) -> None:
        self._json({"error": message}, status=status)

    def _params(self) -> dict[str, str]:
        query = parse_qs(urlparse(self.path).query, keep_blank_values=True)
        return {k: v[0] for k, v in query.items()}

    @staticmethod
    def _int_param(params: dict, name: str) -> int:
        if name not in params:
            raise BadRequest(f"missing parameter {name}")
        try:
            return int(params[name])
        except ValueError:
            raise BadRequest(f"parameter {name} must be an integer") from None

    @staticmethod
    def _float_param(params: dict, name: str) -> float:
        if name not in params:
            raise BadRequest(f"missing parameter {name}")
        try:
            return float(params[name])
        except ValueError:
            raise BadRequest(f"parameter {name} must be a number") from None

    # -- routing ---------------------------------------------------------------

    def do_GET(self):
        route = urlparse(self.path).path
        try:
            if route == "/tile":
                self._get_tile()
            elif route == "/page":
                self._get_page()
            elif route == "/search":
                self._get_search()
            elif route == "/latlon":
                self._get_latlon()
            elif route == "/coverage":
                self._get_coverage()
            elif route == "/meta":
                self._get_meta()
            elif route == "/jobs":
                self._get_jobs()
            elif route == "/famous":
                self._get_famous()
            elif route == "/themes":
                self._get_themes()
            else:
                self._get_static(route)
        except (BadRequest, GridError) as exc:
            self._error(400, str(exc))
        except BrokenPipeError:
            pass

    def do_POST(self):
        route = urlparse(self.path).path
        try:
            if route == "/jobs":
                self._post_jobs()
            else:
                self._error(404, "not found")
        except BadRequest as exc:
            self._error(400, str(exc))

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- endpoints ------------------------------------------------------------

    def _addr_from_params(self, params) -> TileAddress:
        theme = self._int_param(params, "T")
        scene = self._int_param(params, "S")
        scale = self._int_param(params, "Z")
        x = self._int_param(params, "X")
        y = self._int_param(params, "Y")
        if x < 0 or y < 0:
            raise BadRequest("X and Y must be non-negative")
        return TileAddress(theme, scale, scene, x, y)

    def _get_tile(self):
        addr = self._addr_from_params(self._params())
        blob = self.server.store.get_visible_tile(addr)
        if blob is None:
            self._error(404, "no tile at address")
            return
        self._send(200, blob, "image/png")

    def _get_page(self):
        params = self._params()
        center = self._addr_from_params(params)
        size = params.get("size", "small")
        if size not in PAGE_SIZES:
            raise BadRequest(f"unknown page size {size!r}")
        try:
            theme = themes.get(center.theme)
        except KeyError as exc:
            raise BadRequest(str(exc)) from None
        rows, cols = PAGE_SIZES[size]
        t, z, s = center.theme, center.scale, center.scene

        def y_of_row(r: int) -> int:
            return center.y + (rows // 2) - r

        def x_of_col(c: int) -> int:
            return center.x + c - (cols - 1) // 2

        grid_addrs = [[_addr_or_none(t, z, s, x_of_col(c), y_of_row(r))
                       for c in range(cols)] for r in range(rows)]

        pan_targets = {}
        for wind, (dx, dy) in PAN_STEPS.items():
            pan_targets[wind] = _addr_or_none(t, z, s, center.x + dx, center.y + dy)

        zoom_in = zoom_out = None
        if z - 1 in theme.pyramid_levels:
            kids = dict((q, a) for a, q in grid.children(center, theme))
            zoom_in = kids.get("br") or kids.get("tl")
        if z + 1 in theme.pyramid_levels:
            zoom_out = grid.parent(center, theme)

        probes = [a for a in pan_targets.values() if a is not None]
        for extra in (zoom_in, zoom_out):
            if extra is not None:
                probes.append(extra)
        cells, alive, meta = self.server.store.page_lookup(
            t, z, s,
            (max(0, x_of_col(0)), x_of_col(cols - 1)),
            (max(0, y_of_row(rows - 1)), max(0, y_of_row(0))),
            probes=probes, meta_tag_of=center)

        def cell_json(addr: TileAddress | None) -> dict:
            available = addr is not None and (addr.x, addr.y) in cells
            return {
                "address": addr_json(addr),
                "available": available,
                "tile_url": tile_url(addr) if available else None,
            }

        caption = None
        if theme.kind == "projected":
            try:
                corner = grid.utm_of_tile(center, theme)
                extent = float(grid.tile_extent_m(z))
                mid = grid.utm_to_latlon(grid.UtmCoord(
                    s, corner.easting + extent / 2,
                    max(0.0, corner.northing - extent / 2)))
                caption = self.server.gazetteer.caption(mid)
            except Exception:
                caption = None

        payload = {
            "center": addr_json(center),
            "size": size,
            "rows": rows,
            "cols": cols,
            "grid": [[cell_json(a) for a in row] for row in grid_addrs],
            "pan": {
                wind: {
                    "address": addr_json(a),
                    "available": a is not None and a in alive,
                } for wind, a in pan_targets.items()
            },
            "zoom_in": {"address": addr_json(zoom_in),
                        "available": zoom_in is not None and zoom_in in alive},
            "zoom_out": {"address": addr_json(zoom_out),
                         "available": zoom_out is not None and zoom_out in alive},
            "caption": caption,
            "scale_bar_m": float(grid.tile_extent_m(z)),
            "source_logo_id": theme.name,
            "image_date": meta.acquisition_date if meta else None,
        }
        self._json(payload)

    def _get_search(self):
        params = self._params()
        name = params.get("place", "").strip()
        if not name:
            raise BadRequest("missing parameter place")
        theme = int(params["T"]) if "T" in params else None
        gaz: Gazetteer = self.server.gazetteer
        results = []
        for place in gaz.search_by_name(name, state=params.get("state") or None,
                                        country=params.get("country") or None)[:50]:
            tile = self.server.store.search_tiles_at(
                GeoCoord(place.lat, place.lon), theme)
            state, country = gaz.place_context(place)
            results.append({
                "place": {
                    "name": place.formal_name,
                    "state": state,
                    "country": country,
                    "lat": place.lat,
                    "lon": place.lon,
                },
                "tile": addr_json(tile),
            })
        self._json({"results": results})

    def _get_latlon(self):
        params = self._params()
        lat = self._float_param(params, "lat")
        lon = self._float_param(params, "lon")
        theme = int(params["T"]) if "T" in params else None
        geo = GeoCoord(lat, lon)  # raises GridError -> 400 for out-of-band
        tile = self.server.store.search_tiles_at(geo, theme)
        if tile is None:
            self._json({"error": "no coverage", "tile": None}, status=404)
            return
        self._json({"tile": addr_json(tile)})

    def _get_coverage(self):
        params = self._params()
        token = params.get("theme", "all")
        theme_id: int | None
        if token == "all":
            theme_id = None
        else:
            try:
                theme_id = int(token)
            except ValueError:
                try:
                    theme_id = themes.by_name(token).id
                except KeyError:
                    raise BadRequest(f"unknown theme {token!r}") from None
        try:
            ppd = int(params.get("ppd", "1"))
        except ValueError:
            raise BadRequest("ppd must be an integer") from None
        if ppd not in (1, 8, 48):
            raise BadRequest("ppd must be 1, 8, or 48")
        snapshot = self.server.store.coverage_snapshot(theme_id, ppd)
        self._send(200, snapshot.to_png(), "image/png")

    def _get_meta(self):
        params = self._params()
        tag = params.get("tag")
        if not tag:
            raise BadRequest("missing parameter tag")
        theme = int(params["T"]) if "T" in params else None
        meta = self.server.store.get_original_meta(theme, tag)
        if meta is None:
            self._error(404, f"no source image with tag {tag!r}")
            return
        self._json({
            "orig_meta_tag": meta.orig_meta_tag,
            "theme": meta.theme,
            "source_file": meta.source_file,
            "acquisition_date": meta.acquisition_date,
            "geo_bbox": meta.geo_bbox,
            "prod_status": meta.prod_status,
        })

    def _get_jobs(self):
        params = self._params()
        listing = self.server.jobstore.list_jobs(params.get("status"))
        self._json({
            "load_jobs": [{
                "job_id": j.job_id,
                "media_id": j.media_id,
                "source_path": j.source_path,
                "theme": j.theme,
                "kind": j.kind,
                "machine": j.machine,
                "program_version": j.program_version,
                "start_date": j.start_date,
                "status": j.status,
                "files_done": sorted(j.files_done),
            } for j in listing["load_jobs"]],
            "scale_jobs": [{
                "job_id": j.job_id,
                "theme": j.theme,
                "scene": j.scene,
                "base_scale": j.base_scale,
                "rect": [j.x_min, j.x_max, j.y_min, j.y_max],
                "watermark_seq": j.watermark_seq,
                "status": j.status,
            } for j in listing["scale_jobs"]],
        })

    def _post_jobs(self):
        length = int(self.headers.get("Content-Length") or 0)
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except ValueError:
            raise BadRequest("body must be JSON") from None
        manifest_path = body.get("manifest_path")
        if not manifest_path:
            raise BadRequest("body needs manifest_path")
        try:
            manifest = parse_manifest(manifest_path)
        except Exception as exc:
            raise BadRequest(f"bad manifest: {exc}") from None
        media_id = body.get("media_id") or manifest.media_id
        try:
            job = self.server.jobstore.create_load_job(
                manifest_path, media_id, manifest,
                start_seq=self.server.store.current_seq())
        except DuplicateMediaError as exc:
            self._error(409, str(exc))
            return
        self._json({"job_id": job.job_id, "media_id": job.media_id,
                    "status": job.status}, status=201)

    def _get_famous(self):
        out = []
        for fp in self.server.gazetteer.list_famous():
            if isinstance(fp.target, TileAddress):
                entry = {"label": fp.label, "tile": addr_json(fp.target)}
            else:
                tile = self.server.store.search_tiles_at(fp.target)
                entry = {"label": fp.label, "lat": fp.target.lat,
                         "lon": fp.target.lon, "tile": addr_json(tile)}
            out.append(entry)
        self._json({"famous": out})

    def _get_themes(self):
        self._json({"themes": [{
            "id": t.id,
            "name": t.name,
            "kind": t.kind,
            "pixel_format": t.pixel_format,
            "pyramid_levels": list(t.pyramid_levels),
            "base_scales": list(t.base_scales),
        } for t in themes.all_themes()]})

    def _get_static(self, route: str):
        ui_dir: Path | None = self.server.ui_dir
        if ui_dir is None:
            if route == "/":
                self._send(200, b"tilewarehouse is serving\n", "text/plain")
            else:
                self._error(404, "not found")
            return
        rel = route.lstrip("/") or "index.html"
        target = (ui_dir / rel).resolve()
        if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
            self._error(404, "not found")
            return
        mime = _MIME.get(target.suffix.lower(), "application/octet-stream")
        self._send(200, target.read_bytes(), mime)


class WarehouseServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], store: Store, jobstore: JobStore,
                 gazetteer: Gazetteer, ui_dir: str | Path | None = None,
                 quiet: bool = True):
        super().__init__(address, _Handler)
        self.store = store
        self.jobstore = jobstore
        self.gazetteer = gazetteer
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.quiet = quiet

    def serve_in_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def make_server(store_dir: str | Path, gazetteer_dir: str | Path | None = None,
                listen: str = "127.0.0.1:0", ui_dir: str | Path | None = None,
                quiet: bool = True) -> WarehouseServer:
    host, _, port = listen.rpartition(":")
    store = Store(store_dir)
    jobstore = JobStore(store_dir)
    gaz = load_directory(gazetteer_dir) if gazetteer_dir else Gazetteer()
    return WarehouseServer((host or "127.0.0.1", int(port)), store, jobstore,
                           gaz, ui_dir=ui_dir, quiet=quiet)
