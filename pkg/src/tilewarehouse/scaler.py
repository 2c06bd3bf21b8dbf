"""Pyramid builder: maintains the lower-resolution tiles above the base.

Driven by scale jobs: each job names a rectangle of base tiles and a
watermark sequence.  The builder walks the pyramid beneath every top-level
cell covering that rectangle and recomputes a tile exactly when some
descendant's insert sequence exceeds the watermark, so repeated runs settle
to zero writes and an interrupted run can simply be rerun (recomputation is
idempotent).  Missing children contribute blank quadrants.

Search records are published per top-level cell only after that cell's whole
line of descent is current, so a searchable tile is never ahead of its
pyramid.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import grid, themes
from .grid import Theme, TileAddress, UtmCoord
from .jobs import JobStore, ScaleJob
from .raster import Raster, decode_tile, downsample_2x2, encode_tile
from .store import ImageSearchRecord, StaleClaimError, Store, TileRecord


class ScalerError(RuntimeError):
    pass


@dataclass(frozen=True)
class PyramidPlan:
    """Derivation edges for a theme: each derived scale has exactly one
    source scale, and chains root at the theme's base scales."""

    theme: int
    edges: tuple[tuple[int, int], ...]  # (source_scale, derived_scale)
    search_scales: tuple[int, ...]

    def source_of(self, scale: int) -> int | None:
        for src, dst in self.edges:
            if dst == scale:
                return src
        return None

    def derived_of(self, scale: int) -> int | None:
        for src, dst in self.edges:
            if src == scale:
                return dst
        return None

    def chain_from(self, base_scale: int) -> list[int]:
        """Scales from a base level up to the top of its derivation chain."""
        chain = [base_scale]
        while True:
            nxt = self.derived_of(chain[-1])
            if nxt is None:
                break
            chain.append(nxt)
        return chain


def plan_for_theme(theme: Theme | int) -> PyramidPlan:
    """Derive the pyramid plan from the theme registration: every non-base
    level is computed from the level directly beneath it."""
    if isinstance(theme, int):
        theme = themes.get(theme)
    edges = []
    for level in theme.pyramid_levels:
        if theme.is_base(level):
            continue
        if level - 1 not in theme.pyramid_levels:
            raise ScalerError(
                f"theme {theme.name}: derived level {level} has no source level")
        edges.append((level - 1, level))
    return PyramidPlan(theme.id, tuple(edges), tuple(theme.pyramid_levels))


def _parent_rect(rect: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
    x_min, x_max, y_min, y_max = rect
    return (x_min // 2, x_max // 2, -(-y_min // 2), -(-y_max // 2))


class Scaler:
    """Executes scale jobs against one store.  ``checkpoint`` mirrors the
    cutter's crash-injection hook."""

    def __init__(self, store: Store, jobstore: JobStore, checkpoint=None):
        self.store = store
        self.jobs = jobstore
        self.checkpoint = checkpoint or (lambda stage, detail=None: None)

    # -- incremental refresh ---------------------------------------------------

    def run_scale_job(self, job: ScaleJob) -> dict[str, int]:
        """Build/refresh the pyramid over a claimed job's rectangle.

        Returns counters (tiles written, cells visited) for monitoring.
        """
        if job.status != "running":
            raise ScalerError(f"scale job {job.job_id} not claimed")
        theme = themes.get(job.theme)
        plan = plan_for_theme(theme)
        chain = plan.chain_from(job.base_scale)
        top_scale = chain[-1]
        rect = (job.x_min, job.x_max, job.y_min, job.y_max)
        for _ in range(top_scale - job.base_scale):
            rect = _parent_rect(rect)
        stats = {"written": 0, "cells": 0}
        for y in range(rect[3], rect[2] - 1, -1):
            for x in range(rect[0], rect[1] + 1):
                top = TileAddress(theme.id, top_scale, job.scene, x, y)
                self._refresh(top, theme, job.base_scale, job.watermark_seq, stats)
                stats["cells"] += 1
                if theme.kind == "projected":
                    self._publish_cell(top, theme, plan, chain)
                self.checkpoint("cell_done", (x, y))
                self.jobs.heartbeat_scale(job.job_id)
        self.jobs.complete_scale_job(job.job_id)
        self.checkpoint("job_done", job.job_id)
        return stats

    def _refresh(self, addr: TileAddress, theme: Theme, base_scale: int,
                 watermark: int, stats: dict) -> int:
        """Bring one pyramid node up to date; returns the maximum insert
        sequence in its subtree (0 when the subtree holds no tiles)."""
        if addr.scale == base_scale:
            rec = self.store.get_visible_record(addr)
            return rec.insert_seq if rec else 0
        child_addrs = grid.children(addr, theme)
        below = 0
        for child, _quadrant in child_addrs:
            below = max(below, self._refresh(child, theme, base_scale, watermark, stats))
        own = self.store.get_visible_record(addr)
        if below > watermark:
            seq = self._recompute(addr, theme, child_addrs)
            stats["written"] += 1
            return max(seq, below)
        return max(own.insert_seq if own else 0, below)

    def _recompute(self, addr: TileAddress, theme: Theme, child_addrs) -> int:
        """Rebuild one derived tile from its children and store it."""
        with self.store.write_claim(addr):
            while True:
                quadrant_tiles: dict[str, Raster | None] = {
                    "tl": None, "tr": None, "bl": None, "br": None}
                for child, quadrant in child_addrs:
                    blob = self.store.get_visible_tile(child)
                    if blob is not None:
                        quadrant_tiles[quadrant] = decode_tile(blob)
                tile = downsample_2x2(
                    quadrant_tiles["tl"], quadrant_tiles["tr"],
                    quadrant_tiles["bl"], quadrant_tiles["br"],
                    format=theme.pixel_format, palette=theme.palette)
                existing = self.store.get_visible_record(addr)
                tag = f"pyramid:{theme.name}"
                record = TileRecord(addr, True, tag, 0, encode_tile(tile))
                self.checkpoint("derived_tile", addr)
                try:
                    if existing is None:
                        return self.store.put_tile_txn(record, "insert_visible")
                    return self.store.put_tile_txn(
                        record, "replace_old", expect_seq=existing.insert_seq)
                except StaleClaimError:
                    continue

    # -- search publication -------------------------------------------------------

    def _publish_cell(self, top: TileAddress, theme: Theme, plan: PyramidPlan,
                      chain: list[int]) -> None:
        """Insert search records for every visible tile under a completed
        top-level cell, at the designated search scales."""
        for scale in chain:
            if scale not in plan.search_scales:
                continue
            span = 1 << (top.scale - scale)
            x_range = (top.x * span, (top.x + 1) * span - 1)
            y_range = ((top.y - 1) * span + 1, top.y * span)
            if y_range[0] < 0:
                y_range = (0, y_range[1])
            for rec in self.store.query_tiles(theme.id, scale, top.scene,
                                              x_range, y_range):
                self._publish_tile(rec.address, theme)
            self.checkpoint("published_scale", (top, scale))

    def _publish_tile(self, addr: TileAddress, theme: Theme) -> None:
        corner = grid.utm_of_tile(addr, theme)
        extent = float(grid.tile_extent_m(addr.scale))
        pts = [
            (corner.easting, corner.northing),
            (corner.easting + extent, corner.northing),
            (corner.easting, max(0.0, corner.northing - extent)),
            (corner.easting + extent, max(0.0, corner.northing - extent)),
        ]
        lats, lons = [], []
        for easting, northing in pts:
            geo = grid.utm_to_latlon(UtmCoord(addr.scene, easting, northing))
            lats.append(geo.lat)
            lons.append(geo.lon)
        self.store.put_search_record(ImageSearchRecord(
            addr, min(lats), min(lons), max(lats), max(lons)))

    # -- job loop ----------------------------------------------------------------

    def run_once(self, theme: int | None = None, scene: int | None = None,
                 stale_after: float | None = None) -> int:
        """Claim and run queued jobs until none remain; returns jobs run."""
        ran = 0
        while True:
            job = self.jobs.claim_scale_job(theme=theme, scene=scene,
                                            stale_after=stale_after)
            if job is None:
                return ran
            self.run_scale_job(job)
            ran += 1

    def watch(self, theme: int | None = None, scene: int | None = None,
              interval: float = 1.0, stale_after: float | None = 300.0,
              stop=None) -> None:
        """Poll the scale-job queue forever (or until ``stop()`` is true)."""
        while not (stop and stop()):
            if self.run_once(theme=theme, scene=scene, stale_after=stale_after) == 0:
                time.sleep(interval)


# -- ground-truth oracle ----------------------------------------------------------


def build_full_pyramid(store: Store, theme: Theme | int,
                       scene: int) -> dict[TileAddress, bytes]:
    """Recompute every derived tile of a scene from the visible base tiles,
    unconditionally and without writing: the ground truth the incremental
    builder must match byte for byte."""
    if isinstance(theme, int):
        theme = themes.get(theme)
    plan = plan_for_theme(theme)
    out: dict[TileAddress, bytes] = {}
    for base in theme.base_scales:
        chain = plan.chain_from(base)
        level_tiles: dict[tuple[int, int], Raster] = {}
        for rec in store.visible_tiles(theme.id):
            if rec.address.scale == base and rec.address.scene == scene:
                level_tiles[(rec.address.x, rec.address.y)] = decode_tile(rec.blob)
        for scale in chain[1:]:
            parents: dict[tuple[int, int], dict[str, Raster]] = {}
            for (x, y), tile in level_tiles.items():
                child = TileAddress(theme.id, scale - 1, scene, x, y)
                parent = grid.parent(child, theme)
                for cand, quadrant in grid.children(parent, theme):
                    if (cand.x, cand.y) == (x, y):
                        parents.setdefault((parent.x, parent.y), {})[quadrant] = tile
                        break
            next_level: dict[tuple[int, int], Raster] = {}
            for (x, y), quads in parents.items():
                tile = downsample_2x2(
                    quads.get("tl"), quads.get("tr"), quads.get("bl"), quads.get("br"),
                    format=theme.pixel_format, palette=theme.palette)
                next_level[(x, y)] = tile
                out[TileAddress(theme.id, scale, scene, x, y)] = encode_tile(tile)
            level_tiles = next_level
    return out
