"""Tile cutter: turns manifest imagery into base-scale tiles in the store.

Projected scenes are tiled image by image against the live store: each cut
tile is compared with whatever is already at its address using the blankness
decision table, merged when both sides are partial, and written through the
store's atomic replace.  Raw scenes are assembled and overlap-merged in a
staging area first, then inserted.

Every run is crash-resumable: completed input images are skipped via their
production status, and within the in-flight image any tile whose stored
record both postdates the job's start watermark and carries this image's
source tag has already been handled and is skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from . import grid, themes
from .grid import TILE_SIDE, Theme, TileAddress, UtmCoord
from .jobs import JobStore, LoadJob, Manifest, ManifestImage, parse_manifest
from .raster import (
    BlankStats,
    Raster,
    blankness,
    blit,
    crop,
    cut_tiles,
    decode_tile,
    encode_tile,
    load_image,
    merge_prefer_nonblank,
    resample,
)
from .store import StaleClaimError, Store, TileRecord

VERDICTS = ("insert_visible", "replace_old", "discard_new", "merge_then_replace")


class CutterError(RuntimeError):
    pass


@dataclass(frozen=True)
class CutDecision:
    verdict: str

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise CutterError(f"unknown verdict {self.verdict!r}")


def decide(new_blank: BlankStats, old_blank: BlankStats | None) -> CutDecision:
    """The four-row overlap decision table.

    No stored tile: insert.  New tile fully solid: replace.  New tile
    partial but stored tile solid: discard the new one.  Both partial:
    merge pixelwise, then replace.
    """
    if old_blank is None:
        return CutDecision("insert_visible")
    if new_blank.blank_count == 0:
        return CutDecision("replace_old")
    if old_blank.blank_count == 0:
        return CutDecision("discard_new")
    return CutDecision("merge_then_replace")


def _noop_checkpoint(stage: str, detail=None) -> None:
    return None


class Cutter:
    """Runs load jobs against one store.  ``checkpoint`` is called with a
    stage label before each externally visible step; tests inject crashes
    by raising from it."""

    def __init__(self, store: Store, jobstore: JobStore, checkpoint=None):
        self.store = store
        self.jobs = jobstore
        self.checkpoint = checkpoint or _noop_checkpoint
        self._image_dims: dict[str, tuple[int, int]] = {}

    @staticmethod
    def _tag(job: LoadJob, image: ManifestImage) -> str:
        # Media-qualified: different media may ship same-named files.
        return f"{job.media_id}/{image.file}"

    # -- shared tile write path ---------------------------------------------

    def _write_tile(self, addr: TileAddress, tile: Raster, tag: str,
                    job: LoadJob) -> str:
        """Apply the decision table at one address and commit the outcome.

        Returns the verdict applied, or "skipped" when the stored record
        shows this job already processed the address (resume path).
        """
        new_stats = blankness(tile)
        with self.store.write_claim(addr):
            while True:
                existing = self.store.get_visible_record(addr)
                if (existing is not None
                        and existing.insert_seq > job.start_seq
                        and existing.orig_meta_tag == tag):
                    return "skipped"
                old_stats = None
                if existing is not None:
                    old_raster = decode_tile(existing.blob)
                    old_stats = blankness(old_raster)
                verdict = decide(new_stats, old_stats).verdict
                self.checkpoint("tile", addr)
                try:
                    if verdict == "insert_visible":
                        record = TileRecord(addr, True, tag, 0, encode_tile(tile))
                        self.store.put_tile_txn(record, "insert_visible")
                    elif verdict == "replace_old":
                        record = TileRecord(addr, True, tag, 0, encode_tile(tile))
                        self.store.put_tile_txn(record, "replace_old",
                                                expect_seq=existing.insert_seq)
                    elif verdict == "discard_new":
                        return verdict
                    else:  # merge_then_replace
                        merged = merge_prefer_nonblank(tile, old_raster)
                        record = TileRecord(addr, True, tag, 0, encode_tile(merged))
                        self.store.put_tile_txn(record, "merged_replace",
                                                expect_seq=existing.insert_seq)
                    return verdict
                except StaleClaimError:
                    continue  # another writer slipped in: re-read and re-decide

    # -- projected scenes -----------------------------------------------------

    def cut_projected_image(self, job: LoadJob, theme: Theme,
                            image: ManifestImage, src_dir: Path) -> tuple[int, tuple]:
        """Tile one georeferenced image into the theme's base level.

        Returns (base_scale, (x_min, x_max, y_min, y_max)) covering every
        address the image maps onto.
        """
        if theme.kind != "projected":
            raise CutterError("projected cut on a raw theme")
        if image.utm_zone is None:
            raise CutterError(f"{image.file}: missing georeference")
        raster = load_image(src_dir / image.file, image.format)
        if raster.format != theme.pixel_format:
            raise CutterError(
                f"{image.file}: format {raster.format} != theme {theme.pixel_format}")

        base_scale = theme.base_scale_for_source(image.resolution_m)
        base_res = grid.resolution_of_scale(base_scale).meters
        raster = resample(raster, Fraction(image.resolution_m), base_res)

        origin = UtmCoord(image.utm_zone, image.top_left_easting,
                          image.top_left_northing)
        snapped = grid.snap_to_grid(origin, base_scale)
        left_pad = (Fraction(origin.easting) - Fraction(snapped.easting)) / base_res
        top_pad = (Fraction(snapped.northing) - Fraction(origin.northing)) / base_res
        if left_pad.denominator != 1 or top_pad.denominator != 1:
            raise CutterError(
                f"{image.file}: georeference is not aligned to whole pixels "
                f"at {float(base_res)} m")
        left_pad = int(left_pad)
        top_pad = int(top_pad)

        canvas_w = -(-(left_pad + raster.width) // TILE_SIDE) * TILE_SIDE
        canvas_h = -(-(top_pad + raster.height) // TILE_SIDE) * TILE_SIDE
        buf = bytearray([raster.blank_value]) * (canvas_w * canvas_h)
        blit(buf, canvas_w, raster, left_pad, top_pad)
        canvas = Raster(canvas_w, canvas_h, raster.format, bytes(buf), raster.palette)

        extent = grid.tile_extent_m(base_scale)
        x0 = int(Fraction(snapped.easting) / extent)
        y0 = int(Fraction(snapped.northing) / extent)
        rows = canvas_h // TILE_SIDE
        cols = canvas_w // TILE_SIDE
        tag = self._tag(job, image)
        for col, row, tile in cut_tiles(canvas):
            addr = TileAddress(theme.id, base_scale, image.utm_zone,
                               x0 + col, y0 - row)
            self._write_tile(addr, tile, tag, job)
        return base_scale, (x0, x0 + cols - 1, y0 - rows + 1, y0)

    def _paint_projected_coverage(self, theme: Theme, image: ManifestImage) -> None:
        # bbox of the source image footprint in geographic coordinates
        width_m = image.resolution_m * self._image_dims[image.file][0]
        height_m = image.resolution_m * self._image_dims[image.file][1]
        corners = [
            (image.top_left_easting, image.top_left_northing),
            (image.top_left_easting + width_m, image.top_left_northing),
            (image.top_left_easting, image.top_left_northing - height_m),
            (image.top_left_easting + width_m, image.top_left_northing - height_m),
        ]
        lats, lons = [], []
        for easting, northing in corners:
            geo = grid.utm_to_latlon(UtmCoord(image.utm_zone, easting, northing))
            lats.append(geo.lat)
            lons.append(geo.lon)
        self.store.coverage_paint(theme.id, min(lats), min(lons), max(lats), max(lons))

    # -- raw scenes -------------------------------------------------------------

    def _stage_raw_scene(self, theme: Theme, manifest: Manifest,
                         src_dir: Path) -> tuple[dict, int, int]:
        """Assemble the scene in memory: tiles keyed by (col, row), each the
        overlap-merge of every contributing image (later images win)."""
        base_res = grid.resolution_of_scale(theme.base_scale).meters
        staged: dict[tuple[int, int], tuple[Raster, str]] = {}
        scene_w = scene_h = 0
        loaded = []
        for image in manifest.images:
            raster = load_image(src_dir / image.file, image.format)
            if raster.format != theme.pixel_format:
                raise CutterError(
                    f"{image.file}: format {raster.format} != theme {theme.pixel_format}")
            raster = resample(raster, Fraction(image.resolution_m), base_res)
            if image.offset_left_px < 0 or image.offset_top_px < 0:
                raise CutterError(f"{image.file}: negative scene offset")
            loaded.append((image, raster))
            scene_w = max(scene_w, image.offset_left_px + raster.width)
            scene_h = max(scene_h, image.offset_top_px + raster.height)
        for image, raster in loaded:
            ox, oy = image.offset_left_px, image.offset_top_px
            col0 = ox // TILE_SIDE
            col1 = (ox + raster.width - 1) // TILE_SIDE
            row0 = oy // TILE_SIDE
            row1 = (oy + raster.height - 1) // TILE_SIDE
            for row in range(row0, row1 + 1):
                for col in range(col0, col1 + 1):
                    tx, ty = col * TILE_SIDE, row * TILE_SIDE
                    ix0 = max(ox, tx)
                    iy0 = max(oy, ty)
                    ix1 = min(ox + raster.width, tx + TILE_SIDE)
                    iy1 = min(oy + raster.height, ty + TILE_SIDE)
                    piece = crop(raster, ix0 - ox, iy0 - oy, ix1 - ix0, iy1 - iy0)
                    buf = bytearray([raster.blank_value]) * (TILE_SIDE * TILE_SIDE)
                    blit(buf, TILE_SIDE, piece, ix0 - tx, iy0 - ty)
                    incoming = Raster(TILE_SIDE, TILE_SIDE, raster.format,
                                      bytes(buf), raster.palette)
                    prior = staged.get((col, row))
                    if prior is None:
                        staged[(col, row)] = (incoming, image.file)
                    else:
                        staged[(col, row)] = (
                            merge_prefer_nonblank(incoming, prior[0]), image.file)
        return staged, scene_w, scene_h

    def cut_raw_scene(self, job: LoadJob, theme: Theme, manifest: Manifest,
                      src_dir: Path) -> tuple[int, tuple | None]:
        """Assemble, merge, and insert one raw scene; returns its scene id
        and touched rectangle (None when the manifest lists no images)."""
        if theme.kind != "raw":
            raise CutterError("raw cut on a projected theme")
        for image in manifest.images:
            self._upsert_meta(job, theme, image, status="tiling", pixel_bbox=True)
        staged, scene_w, scene_h = self._stage_raw_scene(theme, manifest, src_dir)
        if not staged:
            return job.scene_id or 0, None

        scene_id = job.scene_id
        if scene_id is None:
            scene_id = self.jobs.allocate_scene_id(theme.id)
            self.jobs.set_job_scene(job.job_id, scene_id)
            job.scene_id = scene_id

        rows = -(-scene_h // TILE_SIDE)
        cols = -(-scene_w // TILE_SIDE)
        self.checkpoint("raw_insert_begin", scene_id)
        for (col, row) in sorted(staged):
            tile, file = staged[(col, row)]
            addr = TileAddress(theme.id, theme.base_scale, scene_id, col, rows - row)
            self._write_tile(addr, tile, f"{job.media_id}/{file}", job)
        return scene_id, (0, cols - 1, 1, rows)

    # -- job driver ---------------------------------------------------------------

    def _upsert_meta(self, job: LoadJob, theme: Theme, image: ManifestImage,
                     status: str, pixel_bbox: bool = False) -> None:
        from .store import OriginalMeta

        if pixel_bbox:
            dims = self._image_dims.get(image.file)
            bbox = {"kind": "pixel", "left": image.offset_left_px,
                    "top": image.offset_top_px}
            if dims:
                bbox.update(width=dims[0], height=dims[1])
        else:
            dims = self._image_dims.get(image.file)
            bbox = {"kind": "utm", "zone": image.utm_zone,
                    "top_left_easting": image.top_left_easting,
                    "top_left_northing": image.top_left_northing}
            if dims:
                bbox.update(
                    width_m=dims[0] * image.resolution_m,
                    height_m=dims[1] * image.resolution_m)
        self.store.upsert_original_meta(OriginalMeta(
            orig_meta_tag=self._tag(job, image),
            theme=theme.id,
            source_file=image.file,
            acquisition_date=image.acquisition_date,
            geo_bbox=bbox,
            prod_status=status,
        ))

    def _measure_images(self, manifest: Manifest, src_dir: Path) -> None:
        self._image_dims = {}
        for image in manifest.images:
            raster = load_image(src_dir / image.file, image.format)
            self._image_dims[image.file] = (raster.width, raster.height)

    def run_load_job(self, job: LoadJob, manifest: Manifest, src_dir: Path) -> LoadJob:
        """Drive a load job to completion (idempotent re-entry on resume)."""
        theme = themes.get(manifest.theme)
        if job.status == "queued":
            self.jobs.set_load_status(job.job_id, "running")
        elif job.status != "running":
            raise CutterError(f"load job {job.job_id} is {job.status}")
        self._measure_images(manifest, src_dir)

        if theme.kind == "projected":
            for image in manifest.images:
                self.jobs.heartbeat_load(job.job_id)
                if image.file in job.files_done:
                    continue
                meta = self.store.get_original_meta(theme.id, self._tag(job, image))
                if meta is not None and meta.prod_status == "completed":
                    self.jobs.mark_file_done(job.job_id, image.file)
                    job.files_done.add(image.file)
                    continue
                self._upsert_meta(job, theme, image, status="tiling")
                base_scale, rect = self.cut_projected_image(job, theme, image, src_dir)
                self.checkpoint("image_tiled", image.file)
                self.jobs.enqueue_scale_job(theme.id, image.utm_zone, base_scale,
                                            rect, job.start_seq)
                self.checkpoint("scale_enqueued", image.file)
                self._paint_projected_coverage(theme, image)
                self.store.set_prod_status(theme.id, self._tag(job, image), "completed")
                self.checkpoint("image_completed", image.file)
                self.jobs.mark_file_done(job.job_id, image.file)
                job.files_done.add(image.file)
        else:
            pending = [im for im in manifest.images if im.file not in job.files_done]
            if pending:
                scene_id, rect = self.cut_raw_scene(job, theme, manifest, src_dir)
                self.checkpoint("scene_inserted", scene_id)
                if rect is not None:
                    self.jobs.enqueue_scale_job(theme.id, scene_id, theme.base_scale,
                                                rect, job.start_seq)
                self.checkpoint("scale_enqueued", scene_id)
                for image in manifest.images:
                    self._upsert_meta(job, theme, image, status="completed",
                                      pixel_bbox=True)
                for image in manifest.images:
                    if image.file not in job.files_done:
                        self.jobs.mark_file_done(job.job_id, image.file)
                        job.files_done.add(image.file)
        self.jobs.complete_load_job(job.job_id, manifest)
        return self.jobs.get_load_job(job.job_id)


def run_manifest(store: Store, jobstore: JobStore, manifest_path: str | Path,
                 checkpoint=None) -> LoadJob:
    """Create (or inherit) a load job for a manifest and run it."""
    manifest_path = Path(manifest_path)
    manifest = parse_and_check(manifest_path)
    job = jobstore.create_load_job(manifest_path, manifest.media_id, manifest,
                                   start_seq=store.current_seq())
    cutter = Cutter(store, jobstore, checkpoint)
    return cutter.run_load_job(job, manifest, manifest_path.parent)


def resume_job(store: Store, jobstore: JobStore, job_id: int,
               checkpoint=None) -> LoadJob:
    """Continue an interrupted run.

    A crashed-but-still-"running" job is simply re-entered.  An aborted job
    gets a successor created through the normal duplicate-aware path, which
    inherits its progress.
    """
    job = jobstore.get_load_job(job_id)
    manifest_path = Path(job.source_path)
    manifest = parse_and_check(manifest_path)
    if job.status == "aborted":
        job = jobstore.create_load_job(manifest_path, job.media_id, manifest,
                                       start_seq=store.current_seq())
        jobstore.set_load_status(job.job_id, "running")
        job = jobstore.get_load_job(job.job_id)
    elif job.status == "completed":
        return job
    cutter = Cutter(store, jobstore, checkpoint)
    return cutter.run_load_job(job, manifest, manifest_path.parent)


def parse_and_check(manifest_path: Path) -> Manifest:
    manifest = parse_manifest(manifest_path)
    theme = themes.get(manifest.theme)
    if theme.kind != manifest.kind:
        raise CutterError(
            f"manifest kind {manifest.kind!r} != theme {theme.name} kind {theme.kind!r}")
    return manifest
