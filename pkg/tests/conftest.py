"""Shared fixtures and synthetic-data helpers."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from tilewarehouse import pngio
from tilewarehouse.jobs import JobStore
from tilewarehouse.raster import Raster
from tilewarehouse.store import Store


@pytest.fixture
def store(tmp_path) -> Store:
    s = Store(tmp_path / "wh")
    yield s
    s.close()


@pytest.fixture
def jobstore(tmp_path) -> JobStore:
    j = JobStore(tmp_path / "wh")
    yield j
    j.close()


def gray_raster(width: int, height: int, seed: int = 0, avoid_blank: bool = True) -> Raster:
    rng = random.Random(seed)
    top = 254 if avoid_blank else 255
    return Raster(width, height, "gray8",
                  bytes(rng.randint(0, top) for _ in range(width * height)))


def pattern_raster(width: int, height: int, salt: int = 0) -> Raster:
    """Deterministic, position-dependent, never-blank pixels."""
    buf = bytearray(width * height)
    for y in range(height):
        row = y * width
        for x in range(width):
            buf[row + x] = (x * 7 + y * 13 + salt) % 255
    return Raster(width, height, "gray8", bytes(buf))


def indexed_raster(width: int, height: int, palette, seed: int = 0,
                   avoid_blank: bool = True) -> Raster:
    rng = random.Random(seed)
    lo = 1 if avoid_blank else 0
    return Raster(width, height, "indexed8",
                  bytes(rng.randint(lo, len(palette) - 1) for _ in range(width * height)),
                  tuple(palette))


def write_pgm_file(path: Path, raster: Raster) -> None:
    path.write_bytes(pngio.write_pgm(raster.width, raster.height, raster.pixels))


def write_indexed_png_file(path: Path, raster: Raster) -> None:
    path.write_bytes(pngio.write_png(raster.width, raster.height,
                                     raster.pixels, raster.palette))


def write_manifest(path: Path, media_id: str, theme, kind: str, images: list[dict]) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    manifest = path / "manifest.json"
    manifest.write_text(json.dumps({
        "media_id": media_id,
        "theme": theme,
        "kind": kind,
        "images": images,
    }))
    return manifest


def projected_image_entry(file: str, resolution_m, zone: int, easting: float,
                          northing: float, date: str = "1998-06-24") -> dict:
    return {
        "file": file,
        "format": "pgm",
        "resolution_m": resolution_m,
        "acquisition_date": date,
        "utm": {
            "zone": zone,
            "top_left_easting": easting,
            "top_left_northing": northing,
        },
    }


def visible_state(store: Store, theme: int | None = None) -> dict[tuple, bytes]:
    """Map of every visible record's address key to its blob bytes."""
    return {rec.address.key(): rec.blob for rec in store.visible_tiles(theme)}
