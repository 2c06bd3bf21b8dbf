"""Cutter: decision table, projected and raw tiling against composite
oracles, order-insensitivity, and crash/resume equivalence."""

import random

import pytest

from tilewarehouse.cutter import Cutter, CutterError, decide, resume_job, run_manifest
from tilewarehouse.jobs import JobStore, parse_manifest
from tilewarehouse.raster import BlankStats, Raster, blankness, decode_tile, resample
from tilewarehouse.store import Store
from tilewarehouse.themes import TOPO_PALETTE

from conftest import (
    pattern_raster,
    projected_image_entry,
    visible_state,
    write_manifest,
    write_pgm_file,
)


def stats(blank: int, total: int = 40000) -> BlankStats:
    return BlankStats(blank, total)


class TestDecisionTable:
    def test_no_existing_tile(self):
        assert decide(stats(0), None).verdict == "insert_visible"
        assert decide(stats(40000), None).verdict == "insert_visible"

    def test_solid_new_replaces(self):
        assert decide(stats(0), stats(12)).verdict == "replace_old"
        assert decide(stats(0), stats(0)).verdict == "replace_old"

    def test_partial_new_vs_solid_old_discards(self):
        assert decide(stats(4000), stats(0)).verdict == "discard_new"

    def test_both_partial_merges(self):
        assert decide(stats(4000), stats(2000)).verdict == "merge_then_replace"

    def test_exhaustive_blankness_combinations(self):
        for new_blank in (0, 1, 39999, 40000):
            for old_blank in (None, 0, 1, 39999, 40000):
                verdict = decide(stats(new_blank),
                                 None if old_blank is None else stats(old_blank)).verdict
                if old_blank is None:
                    assert verdict == "insert_visible"
                elif new_blank == 0:
                    assert verdict == "replace_old"
                elif old_blank == 0:
                    assert verdict == "discard_new"
                else:
                    assert verdict == "merge_then_replace"


ZONE = 10
BASE_E = 553000  # aligned to 200 m
BASE_N = 4183000


def master_scene(size: int = 1000, salt: int = 0) -> Raster:
    return pattern_raster(size, size, salt=salt)


def crop_entry(tmp_path, master: Raster, name: str, px: int, py: int,
               w: int, h: int, res: float = 1) -> dict:
    """Cut a window out of the master and write it as an ingest image whose
    georeference places it back exactly where it came from."""
    from tilewarehouse.raster import crop

    piece = crop(master, px, py, w, h)
    write_pgm_file(tmp_path / name, piece)
    return projected_image_entry(name, res, ZONE, BASE_E + px, BASE_N - py)


def expected_tiles(images: list[tuple[Raster, int, int]], scale: int) -> dict:
    """Ground-truth composite: blit every (raster, easting, northing) onto a
    blank canvas over the union of each image's snapped tile rectangle and
    cut.  Only addresses covered by some image's own rectangle exist."""
    res = 2 ** (scale - 10)
    extent = 200 * res
    addrs = set()
    bounds = []
    for raster, e0, n0 in images:
        se = (e0 // extent) * extent
        sn = -(-n0 // extent) * extent
        cols = -(-((e0 - se) // res + raster.width) // 200)
        rows = -(-((sn - n0) // res + raster.height) // 200)
        x0, y0 = se // extent, sn // extent
        for c in range(cols):
            for r in range(rows):
                addrs.add((x0 + c, y0 - r))
        bounds.append((se, sn, cols, rows))
    min_e = min(b[0] for b in bounds)
    max_n = max(b[1] for b in bounds)
    max_e = max(b[0] + b[2] * extent for b in bounds)
    min_n = min(b[1] - b[3] * extent for b in bounds)
    width = (max_e - min_e) // res
    height = (max_n - min_n) // res
    canvas = bytearray([255]) * (width * height)
    for raster, e0, n0 in images:
        ox = (e0 - min_e) // res
        oy = (max_n - n0) // res
        for dy in range(raster.height):
            start = (oy + dy) * width + ox
            canvas[start:start + raster.width] = raster.row(dy)
    out = {}
    for x, y in addrs:
        ox = (x * extent - min_e) // res
        oy = (max_n - y * extent) // res
        tile = bytearray(200 * 200)
        for dy in range(200):
            start = (oy + dy) * width + ox
            tile[dy * 200:(dy + 1) * 200] = canvas[start:start + 200]
        out[(x, y)] = bytes(tile)
    return out


def load(tmp_path, store, jobstore, name, images, theme="aerial",
         kind="projected", checkpoint=None):
    manifest = write_manifest(tmp_path / name, name, theme, kind, images)
    return run_manifest(store, jobstore, manifest, checkpoint=checkpoint)


class TestProjectedCut:
    def test_single_image_matches_composite(self, tmp_path, store, jobstore):
        master = master_scene(600)
        src = tmp_path / "m1"
        src.mkdir()
        entry = crop_entry(src, master, "a.pgm", 0, 0, 600, 600)
        load(tmp_path, store, jobstore, "m1", [entry])

        want = expected_tiles([(master, BASE_E, BASE_N)], 10)
        got = {(r.address.x, r.address.y): decode_tile(r.blob).pixels
               for r in store.visible_tiles(1)}
        assert got == want

    def test_unaligned_origin_gets_padded(self, tmp_path, store, jobstore):
        master = master_scene(400)
        src = tmp_path / "m1"
        src.mkdir()
        # origin 70 m east / 130 m north of a grid corner
        piece_entry = crop_entry(src, master, "a.pgm", 0, 0, 400, 400)
        piece_entry["utm"]["top_left_easting"] = BASE_E + 70
        piece_entry["utm"]["top_left_northing"] = BASE_N - 130
        load(tmp_path, store, jobstore, "m1", [piece_entry])
        want = expected_tiles([(master, BASE_E + 70, BASE_N - 130)], 10)
        got = {(r.address.x, r.address.y): decode_tile(r.blob).pixels
               for r in store.visible_tiles(1)}
        assert got == want

    def test_tile_corners_are_multiples_of_extent(self, tmp_path, store, jobstore):
        src = tmp_path / "m1"
        src.mkdir()
        master = master_scene(500)
        entry = crop_entry(src, master, "a.pgm", 0, 0, 500, 500)
        entry["utm"]["top_left_easting"] = BASE_E + 70
        load(tmp_path, store, jobstore, "m1", [entry])
        for rec in store.visible_tiles(1):
            assert (rec.address.x * 200) % 200 == 0
            assert rec.address.scale == 10

    def test_overlap_agreeing_pixels_order_insensitive(self, tmp_path):
        master = master_scene(800)
        orders = [(0, 1), (1, 0)]
        states = []
        for i, order in enumerate(orders):
            root = tmp_path / f"run{i}"
            store = Store(root / "wh")
            jobstore = JobStore(root / "wh")
            src = root / "src"
            src.mkdir(parents=True)
            entries = [
                crop_entry(src, master, "a.pgm", 0, 0, 500, 800),
                crop_entry(src, master, "b.pgm", 300, 0, 500, 800),
            ]
            manifest = write_manifest(src, f"m{i}", "aerial", "projected",
                                      [entries[j] for j in order])
            run_manifest(store, jobstore, manifest)
            states.append(visible_state(store, 1))
            store.close()
            jobstore.close()
        assert states[0] == states[1]

    def test_final_mosaic_equals_single_image_composite(self, tmp_path, store, jobstore):
        master = master_scene(800)
        src = tmp_path / "m1"
        src.mkdir()
        entries = [
            crop_entry(src, master, "a.pgm", 0, 0, 500, 800),
            crop_entry(src, master, "b.pgm", 300, 0, 500, 800),
        ]
        load(tmp_path, store, jobstore, "m1", entries)
        want = expected_tiles([(master, BASE_E, BASE_N)], 10)
        got = {(r.address.x, r.address.y): decode_tile(r.blob).pixels
               for r in store.visible_tiles(1)}
        assert got == want

    def test_base_grid_alignment_across_scales(self, tmp_path, store, jobstore):
        """1 m tiles land on 200 m boundaries, 2 m base tiles on 400 m."""
        src = tmp_path / "m1"
        src.mkdir()
        aerial_entry = crop_entry(src, master_scene(400), "a.pgm", 0, 0, 400, 400)
        load(tmp_path, store, jobstore, "m1", [aerial_entry])
        for rec in store.visible_tiles(1):
            from tilewarehouse import grid, themes
            corner = grid.utm_of_tile(rec.address, themes.AERIAL)
            assert corner.easting % 200 == 0
            assert corner.northing % 200 == 0

        src2 = tmp_path / "m2"
        src2.mkdir()
        from tilewarehouse import pngio
        topo = Raster(400, 400, "indexed8",
                      bytes(random.Random(5).randint(1, 12) for _ in range(160000)),
                      TOPO_PALETTE)
        (src2 / "t.png").write_bytes(
            pngio.write_png(400, 400, topo.pixels, topo.palette))
        entry = {
            "file": "t.png", "format": "png-indexed", "resolution_m": 2.5,
            "utm": {"zone": ZONE, "top_left_easting": BASE_E,
                    "top_left_northing": BASE_N},
        }
        manifest = write_manifest(src2, "m2", "topo", "projected", [entry])
        run_manifest(store, jobstore, manifest)
        topo_tiles = [r for r in store.visible_tiles(2)]
        assert topo_tiles
        for rec in topo_tiles:
            from tilewarehouse import grid, themes
            assert rec.address.scale == 11
            corner = grid.utm_of_tile(rec.address, themes.TOPO)
            assert corner.easting % 400 == 0
            assert corner.northing % 400 == 0

    def test_non_pixel_aligned_georef_rejected(self, tmp_path, store, jobstore):
        src = tmp_path / "m1"
        src.mkdir()
        entry = crop_entry(src, master_scene(300), "a.pgm", 0, 0, 300, 300)
        entry["utm"]["top_left_easting"] = BASE_E + 0.5
        with pytest.raises(CutterError):
            load(tmp_path, store, jobstore, "m1", [entry])

    def test_resample_to_base_resolution(self, tmp_path, store, jobstore):
        """A 2 m source in a 1 m theme is upsampled before cutting."""
        src = tmp_path / "m1"
        src.mkdir()
        piece = pattern_raster(200, 200)
        write_pgm_file(src / "a.pgm", piece)
        entry = projected_image_entry("a.pgm", 2, ZONE, BASE_E, BASE_N)
        load(tmp_path, store, jobstore, "m1", [entry])
        got = visible_state(store, 1)
        assert len(got) == 4  # 400x400 at 1 m
        resampled = resample(piece, 2, 1)
        want = expected_tiles([(resampled, BASE_E, BASE_N)], 10)
        decoded = {(r.address.x, r.address.y): decode_tile(r.blob).pixels
                   for r in store.visible_tiles(1)}
        assert decoded == want


class TestRawCut:
    def _raw_entry(self, name, left, top, res=1):
        return {"file": name, "format": "pgm", "resolution_m": res,
                "offset": {"left_px": left, "top_px": top}}

    def test_y_decrements_from_row_count(self, tmp_path, store, jobstore):
        src = tmp_path / "m1"
        src.mkdir()
        write_pgm_file(src / "a.pgm", pattern_raster(400, 400))
        manifest = write_manifest(src, "m1", "strip", "raw",
                                  [self._raw_entry("a.pgm", 0, 0)])
        run_manifest(store, jobstore, manifest)
        got = {(r.address.x, r.address.y) for r in store.visible_tiles(3)}
        assert got == {(0, 1), (0, 2), (1, 1), (1, 2)}
        scene_ids = {r.address.scene for r in store.visible_tiles(3)}
        assert scene_ids == {1}

    def test_scene_counter_increments(self, tmp_path, store, jobstore):
        for i in range(2):
            src = tmp_path / f"m{i}"
            src.mkdir()
            write_pgm_file(src / "a.pgm", pattern_raster(250, 250, salt=i))
            manifest = write_manifest(src, f"m{i}", "strip", "raw",
                                      [self._raw_entry("a.pgm", 0, 0)])
            run_manifest(store, jobstore, manifest)
        scenes = {r.address.scene for r in store.visible_tiles(3)}
        assert scenes == {1, 2}

    def test_overlapping_images_match_composite(self, tmp_path, store, jobstore):
        master = pattern_raster(700, 400, salt=9)
        from tilewarehouse.raster import crop
        src = tmp_path / "m1"
        src.mkdir()
        write_pgm_file(src / "a.pgm", crop(master, 0, 0, 450, 400))
        write_pgm_file(src / "b.pgm", crop(master, 350, 0, 350, 400))
        manifest = write_manifest(src, "m1", "strip", "raw", [
            self._raw_entry("a.pgm", 0, 0),
            self._raw_entry("b.pgm", 350, 0),
        ])
        run_manifest(store, jobstore, manifest)

        rows = 2
        got = {}
        for rec in store.visible_tiles(3):
            col, row = rec.address.x, rows - rec.address.y
            got[(col, row)] = decode_tile(rec.blob).pixels
        # oracle: pad master to 800x400 with blanks, cut 4x2
        padded = bytearray([255]) * (800 * 400)
        for y in range(400):
            padded[y * 800:y * 800 + 700] = master.row(y)
        want = {}
        for row in range(2):
            for col in range(4):
                tile = bytearray(40000)
                for dy in range(200):
                    start = (row * 200 + dy) * 800 + col * 200
                    tile[dy * 200:(dy + 1) * 200] = padded[start:start + 200]
                want[(col, row)] = bytes(tile)
        assert got == want

    def test_empty_manifest_completes(self, tmp_path, store, jobstore):
        src = tmp_path / "m1"
        src.mkdir()
        manifest = write_manifest(src, "m1", "strip", "raw", [])
        job = run_manifest(store, jobstore, manifest)
        assert job.status == "completed"
        assert store.visible_tiles(3) == []


class TestConcurrentCutters:
    def test_two_cutters_same_theme_overlapping_edges(self, tmp_path, store, jobstore):
        """Two loads running in parallel on overlapping areas with agreeing
        pixels settle into the same mosaic as the ground-truth composite."""
        import threading

        master = master_scene(800, salt=13)
        sources = []
        for i, (px, w) in enumerate(((0, 500), (300, 500))):
            src = tmp_path / f"c{i}"
            src.mkdir()
            entry = crop_entry(src, master, "img.pgm", px, 0, w, 800)
            sources.append(write_manifest(src, f"cc-{i}", "aerial", "projected",
                                          [entry]))
        errors = []

        def run(manifest):
            try:
                run_manifest(store, jobstore, manifest)
            except Exception as exc:  # noqa: BLE001
                errors.append(exc)

        threads = [threading.Thread(target=run, args=(m,)) for m in sources]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []
        assert store.integrity_scan() == []
        want = expected_tiles([(master, BASE_E, BASE_N)], 10)
        got = {(r.address.x, r.address.y): decode_tile(r.blob).pixels
               for r in store.visible_tiles(1)}
        assert got == want


class Boom(Exception):
    pass


def make_killer(kill_at: int):
    """Checkpoint callback raising at the Nth invocation."""
    count = {"n": 0}

    def checkpoint(stage, detail=None):
        count["n"] += 1
        if count["n"] == kill_at:
            raise Boom(f"killed at checkpoint {kill_at} ({stage})")

    return checkpoint


class TestResume:
    def _scenario(self, root):
        master = master_scene(800, salt=4)
        src = root / "src"
        src.mkdir(parents=True)
        entries = [
            crop_entry(src, master, "a.pgm", 0, 0, 500, 800),
            crop_entry(src, master, "b.pgm", 300, 0, 500, 800),
        ]
        return write_manifest(src, "media-r", "aerial", "projected", entries)

    def _golden(self, tmp_path):
        root = tmp_path / "golden"
        store = Store(root / "wh")
        jobstore = JobStore(root / "wh")
        manifest = self._scenario(root)
        run_manifest(store, jobstore, manifest)
        state = visible_state(store)
        store.close()
        jobstore.close()
        return state

    @pytest.mark.parametrize("kill_at", [1, 3, 7, 12, 20, 33])
    def test_kill_and_resume_matches_uninterrupted(self, tmp_path, kill_at):
        golden = self._golden(tmp_path)

        root = tmp_path / f"kill{kill_at}"
        store = Store(root / "wh")
        jobstore = JobStore(root / "wh")
        manifest = self._scenario(root)
        events_run1 = []

        def recording_killer(stage, detail=None):
            events_run1.append((stage, detail))
            if len(events_run1) == kill_at:
                raise Boom("killed")

        try:
            run_manifest(store, jobstore, manifest, checkpoint=recording_killer)
            crashed = False
        except Boom:
            crashed = True
        if crashed:
            job_id = jobstore.list_load_jobs()[0].job_id
            events_run2 = []
            resume_job(store, jobstore, job_id,
                       checkpoint=lambda s, d=None: events_run2.append((s, d)))
            completed_run1 = {d for s, d in events_run1 if s == "image_completed"}
            retiled_run2 = {d for s, d in events_run2 if s == "image_tiled"}
            assert completed_run1.isdisjoint(retiled_run2), \
                "a completed source file was tiled again"
        assert visible_state(store) == golden
        assert store.integrity_scan() == []
        job = jobstore.list_load_jobs()[-1]
        assert job.status == "completed"
        store.close()
        jobstore.close()

    def test_kill_inside_store_txn(self, tmp_path):
        golden = self._golden(tmp_path)
        root = tmp_path / "txnkill"
        store = Store(root / "wh")
        jobstore = JobStore(root / "wh")
        manifest = self._scenario(root)
        calls = {"n": 0}

        def fault(stage):
            if stage == "after_insert":
                calls["n"] += 1
                if calls["n"] == 5:
                    raise Boom("killed mid-transaction")

        store.fault_hook = fault
        with pytest.raises(Boom):
            run_manifest(store, jobstore, manifest)
        store.fault_hook = None
        job_id = jobstore.list_load_jobs()[0].job_id
        resume_job(store, jobstore, job_id)
        assert visible_state(store) == golden
        assert store.integrity_scan() == []
        store.close()
        jobstore.close()

    def test_resume_completed_job_is_noop(self, tmp_path):
        root = tmp_path / "noop"
        store = Store(root / "wh")
        jobstore = JobStore(root / "wh")
        manifest = self._scenario(root)
        job = run_manifest(store, jobstore, manifest)
        before = visible_state(store)
        seq_before = store.current_seq()
        resumed = resume_job(store, jobstore, job.job_id)
        assert resumed.status == "completed"
        assert visible_state(store) == before
        assert store.current_seq() == seq_before
        store.close()
        jobstore.close()

    def test_aborted_job_resumes_via_successor(self, tmp_path):
        golden = self._golden(tmp_path)
        root = tmp_path / "abort"
        store = Store(root / "wh")
        jobstore = JobStore(root / "wh")
        manifest = self._scenario(root)
        with pytest.raises(Boom):
            run_manifest(store, jobstore, manifest, checkpoint=make_killer(9))
        job_id = jobstore.list_load_jobs()[0].job_id
        jobstore.set_load_status(job_id, "aborted")
        final = resume_job(store, jobstore, job_id)
        assert final.job_id != job_id
        assert final.status == "completed"
        assert visible_state(store) == golden
        store.close()
        jobstore.close()

    def test_scale_jobs_not_duplicated_for_completed_images(self, tmp_path):
        root = tmp_path / "sj"
        store = Store(root / "wh")
        jobstore = JobStore(root / "wh")
        manifest = self._scenario(root)
        # crash after first image fully completed (image_completed fires once
        # per image; kill right after the first one)
        events = []

        def killer(stage, detail=None):
            events.append(stage)
            if stage == "image_completed":
                raise Boom("killed")

        with pytest.raises(Boom):
            run_manifest(store, jobstore, manifest, checkpoint=killer)
        job_id = jobstore.list_load_jobs()[0].job_id
        resume_job(store, jobstore, job_id)
        scale_jobs = jobstore.list_scale_jobs()
        assert len(scale_jobs) == 2  # one per image, no duplicates
        store.close()
        jobstore.close()
