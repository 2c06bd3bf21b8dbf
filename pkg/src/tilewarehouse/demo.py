"""Self-contained demo warehouse: synthesizes a small scene, loads it,
builds its pyramid, and writes a matching gazetteer.  Used by the
``seed-demo`` CLI command, the README quickstart, and the viewer's
end-to-end tests.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import grid, pngio
from .cutter import run_manifest
from .grid import UtmCoord
from .jobs import JobStore
from .scaler import Scaler
from .store import Store

DEMO_ZONE = 10
DEMO_EASTING = 553000.0
DEMO_NORTHING = 4183000.0
DEMO_SIZE = 800  # pixels at 1 m


def make_pattern(width: int, height: int, salt: int = 0) -> bytes:
    """Deterministic non-blank test pattern (values never hit 255)."""
    out = bytearray(width * height)
    for y in range(height):
        row = y * width
        for x in range(width):
            out[row + x] = (3 * x + 5 * y + ((x * y + salt) % 31)) % 255
    return bytes(out)


def seed_demo(store_dir: Path, gazetteer_dir: Path | None = None) -> dict:
    store_dir = Path(store_dir)
    src = store_dir / "demo-src"
    src.mkdir(parents=True, exist_ok=True)

    pgm = src / "scene.pgm"
    pgm.write_bytes(pngio.write_pgm(DEMO_SIZE, DEMO_SIZE,
                                    make_pattern(DEMO_SIZE, DEMO_SIZE)))
    manifest_path = src / "manifest.json"
    manifest_path.write_text(json.dumps({
        "media_id": "demo-0001",
        "theme": "aerial",
        "kind": "projected",
        "images": [{
            "file": "scene.pgm",
            "format": "pgm",
            "resolution_m": 1,
            "utm": {
                "zone": DEMO_ZONE,
                "top_left_easting": DEMO_EASTING,
                "top_left_northing": DEMO_NORTHING,
            },
            "acquisition_date": "1997-04-02",
        }],
    }, indent=2))

    store = Store(store_dir)
    jobstore = JobStore(store_dir)
    job = run_manifest(store, jobstore, manifest_path)
    Scaler(store, jobstore).run_once()

    center = {"t": 1, "s": DEMO_ZONE, "z": 10, "x": 2766, "y": 20913}

    gaz_info = None
    if gazetteer_dir is not None:
        gazetteer_dir = Path(gazetteer_dir)
        gazetteer_dir.mkdir(parents=True, exist_ok=True)
        mid = grid.utm_to_latlon(UtmCoord(
            DEMO_ZONE, DEMO_EASTING + DEMO_SIZE / 2, DEMO_NORTHING - DEMO_SIZE / 2))
        rows = [
            "Examplia\tcountry\t\t\t",
            "Westmark\tstate\tExamplia\t\t",
            f"Bayview\tplace\tWestmark\t{mid.lat:.6f}\t{mid.lon:.6f}",
            f"Port Doyle\tplace\tWestmark\t{mid.lat + 0.03:.6f}\t{mid.lon + 0.05:.6f}",
            f"Saltmarsh\tplace\tExamplia\t{mid.lat - 0.04:.6f}\t{mid.lon - 0.06:.6f}",
            "Old Bayview\talt_place\tBayview\t\t",
        ]
        (gazetteer_dir / "places.tsv").write_text("\n".join(rows) + "\n", "utf-8")
        (gazetteer_dir / "famous.json").write_text(json.dumps([
            {"label": "Bayview waterfront", "theme": 1, "scale": 10,
             "scene": DEMO_ZONE, "x": 2766, "y": 20913},
            {"label": "Port Doyle harbor", "lat": mid.lat + 0.03,
             "lon": mid.lon + 0.05},
        ], indent=2))
        gaz_info = str(gazetteer_dir)

    store.close()
    jobstore.close()
    return {
        "store": str(store_dir),
        "gazetteer": gaz_info,
        "load_job": job.job_id,
        "center": center,
        "hint": "tilewarehouse serve --store {} --gazetteer {}".format(
            store_dir, gaz_info or "<dir>"),
    }
