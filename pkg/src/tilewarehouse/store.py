"""Persistent tile warehouse.

Holds tile records keyed by (theme, scale, scene, x, y), per-source-image
metadata, place-search records, and coverage grids.  The contract that makes
online loading safe for concurrent readers:

* at most one *visible* record exists per address at any observable instant
  (enforced by a partial unique index);
* replacing a tile inserts the new record and flips the old one invisible
  inside a single atomic transaction, so a reader sees the old blob right up
  to the commit and the new blob after it, never a torn or absent state;
* every successful tile write draws a fresh value from a store-wide monotone
  insert sequence, which the pyramid builder uses as its change watermark.

Writers to the same address must hold that address's write claim (handed
out by :meth:`Store.write_claim`); writers to different addresses proceed
in parallel.  Cross-process conflicts are caught by re-validating the
expected predecessor sequence inside the transaction.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import pngio
from .dbcore import Database
from .grid import TILE_SIDE, GeoCoord, TileAddress
from .raster import decode_tile

PROD_STATUSES = ("pending", "tiling", "completed")
_PROD_ORDER = {name: i for i, name in enumerate(PROD_STATUSES)}

DECISIONS = ("insert_visible", "replace_old", "merged_replace")

COVERAGE_RESOLUTIONS = (1, 8, 48)


class StoreError(RuntimeError):
    pass


class ClaimError(StoreError):
    """Write attempted without holding the address's write claim."""


class StaleClaimError(StoreError):
    """The visible record changed under the caller; re-read and retry."""


@dataclass(frozen=True)
class TileRecord:
    address: TileAddress
    visible: bool
    orig_meta_tag: str
    insert_seq: int
    blob: bytes


@dataclass
class OriginalMeta:
    """Per-source-image row; its prod_status is the unit of load restart."""

    orig_meta_tag: str
    theme: int
    source_file: str
    acquisition_date: str | None = None
    geo_bbox: dict = field(default_factory=dict)
    prod_status: str = "pending"


@dataclass(frozen=True)
class ImageSearchRecord:
    address: TileAddress
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float


class CoverageMap:
    """World-spanning bit grid at 1, 8, or 48 cells per degree.

    Row 0 is the northernmost row; cell (row, col) covers
    lat [90 - (row+1)/ppd, 90 - row/ppd) x lon [-180 + col/ppd, +1/ppd).
    """

    def __init__(self, pixels_per_degree: int):
        if pixels_per_degree not in COVERAGE_RESOLUTIONS:
            raise StoreError(f"unsupported coverage resolution {pixels_per_degree}")
        self.ppd = pixels_per_degree
        self.width = 360 * pixels_per_degree
        self.height = 180 * pixels_per_degree
        self._bits = bytearray((self.width * self.height + 7) // 8)
        self._count = 0

    def _index(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise StoreError(f"coverage cell ({row}, {col}) out of range")
        return row * self.width + col

    def set_cell(self, row: int, col: int) -> None:
        i = self._index(row, col)
        mask = 1 << (i & 7)
        if not self._bits[i >> 3] & mask:
            self._bits[i >> 3] |= mask
            self._count += 1

    def get_cell(self, row: int, col: int) -> bool:
        i = self._index(row, col)
        return bool(self._bits[i >> 3] & (1 << (i & 7)))

    @property
    def count_set(self) -> int:
        return self._count

    def set_cells(self) -> set[tuple[int, int]]:
        out = set()
        width = self.width
        for byte_i, byte in enumerate(self._bits):
            if not byte:
                continue
            base = byte_i << 3
            for bit in range(8):
                if byte & (1 << bit):
                    i = base + bit
                    out.add((i // width, i % width))
        return out

    def paint_bbox(self, min_lat: float, min_lon: float,
                   max_lat: float, max_lon: float) -> None:
        """Set every cell whose interior overlaps the box (edge-touching
        neighbors stay clear, so an aligned 1x1 degree box fills one cell
        at one cell per degree)."""
        ppd = self.ppd
        col0 = max(0, math.floor((min_lon + 180.0) * ppd))
        col1 = min(self.width - 1, math.ceil((max_lon + 180.0) * ppd) - 1)
        row0 = max(0, math.floor((90.0 - max_lat) * ppd))
        row1 = min(self.height - 1, math.ceil((90.0 - min_lat) * ppd) - 1)
        for row in range(row0, row1 + 1):
            for col in range(col0, col1 + 1):
                self.set_cell(row, col)

    def to_png(self) -> bytes:
        """Render set cells dark on a light background."""
        pixels = bytearray(b"\xe8" * (self.width * self.height))
        width = self.width
        for byte_i, byte in enumerate(self._bits):
            if not byte:
                continue
            base = byte_i << 3
            for bit in range(8):
                if byte & (1 << bit):
                    pixels[base + bit] = 40
        return pngio.write_png(self.width, self.height, bytes(pixels))


class _Claim:
    __slots__ = ("lock", "owner", "holders")

    def __init__(self):
        self.lock = threading.Lock()
        self.owner: int | None = None
        self.holders = 0


_SCHEMA = """
CREATE TABLE IF NOT EXISTS counters(
  key TEXT PRIMARY KEY,
  value INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS tiles(
  theme INTEGER NOT NULL,
  scale INTEGER NOT NULL,
  scene INTEGER NOT NULL,
  x INTEGER NOT NULL,
  y INTEGER NOT NULL,
  visible INTEGER NOT NULL,
  orig_tag TEXT NOT NULL,
  seq INTEGER NOT NULL,
  blob BLOB NOT NULL,
  PRIMARY KEY(theme, scale, scene, x, y, seq)
);
CREATE UNIQUE INDEX IF NOT EXISTS tiles_one_visible
  ON tiles(theme, scale, scene, x, y) WHERE visible = 1;
CREATE TABLE IF NOT EXISTS orig_meta(
  theme INTEGER NOT NULL,
  tag TEXT NOT NULL,
  source_file TEXT NOT NULL,
  acquisition_date TEXT,
  bbox TEXT NOT NULL,
  prod_status TEXT NOT NULL,
  PRIMARY KEY(theme, tag)
);
CREATE TABLE IF NOT EXISTS search_records(
  theme INTEGER NOT NULL,
  scale INTEGER NOT NULL,
  scene INTEGER NOT NULL,
  x INTEGER NOT NULL,
  y INTEGER NOT NULL,
  min_lat REAL NOT NULL,
  min_lon REAL NOT NULL,
  max_lat REAL NOT NULL,
  max_lon REAL NOT NULL,
  seq INTEGER NOT NULL,
  PRIMARY KEY(theme, scale, scene, x, y)
);
CREATE TABLE IF NOT EXISTS coverage_rects(
  theme INTEGER NOT NULL,
  min_lat REAL NOT NULL,
  min_lon REAL NOT NULL,
  max_lat REAL NOT NULL,
  max_lon REAL NOT NULL,
  PRIMARY KEY(theme, min_lat, min_lon, max_lat, max_lon) ON CONFLICT IGNORE
);
"""


class Store:
    DB_NAME = "warehouse.db"

    def __init__(self, root: str | Path, create: bool = True):
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
        elif not (self.root / self.DB_NAME).exists():
            raise StoreError(f"no warehouse at {self.root}")
        self.db = Database(self.root / self.DB_NAME)
        self._claims: dict[tuple, _Claim] = {}
        self._claims_mu = threading.Lock()
        # Test instrumentation: called with a stage name at fixed points
        # inside put_tile_txn; an exception simulates a crash there.
        self.fault_hook = None
        self.db.conn().executescript(_SCHEMA)  # executescript autocommits
        with self.db.txn() as conn:
            conn.execute(
                "INSERT OR IGNORE INTO counters(key, value) VALUES('insert_seq', 0)")

    def close(self) -> None:
        self.db.close()

    # -- write claims ------------------------------------------------------

    def write_claim(self, addr: TileAddress):
        """Context manager serializing writers of one address in-process."""
        return _ClaimScope(self, addr.key())

    def _holds_claim(self, addr: TileAddress) -> bool:
        with self._claims_mu:
            claim = self._claims.get(addr.key())
        return claim is not None and claim.owner == threading.get_ident()

    # -- tiles -------------------------------------------------------------

    def _bump_seq(self, conn) -> int:
        cur = conn.execute(
            "UPDATE counters SET value = value + 1 WHERE key='insert_seq' "
            "RETURNING value")
        return cur.fetchone()[0]

    def current_seq(self) -> int:
        row = self.db.conn().execute(
            "SELECT value FROM counters WHERE key='insert_seq'").fetchone()
        return row[0]

    def _fault(self, stage: str) -> None:
        if self.fault_hook is not None:
            self.fault_hook(stage)

    def put_tile_txn(self, record: TileRecord, decision: str,
                     expect_seq: int | None = None) -> int:
        """Insert a tile record and make it the visible one, atomically.

        ``decision`` is insert_visible (no record may exist yet),
        replace_old, or merged_replace (a record must exist; its blob was
        merged into ``record`` by the caller).  ``expect_seq`` pins the
        predecessor: if another writer slipped in a different record the
        transaction aborts with StaleClaimError so the caller can re-read,
        re-decide, and retry.
        """
        if decision not in DECISIONS:
            raise StoreError(f"unknown decision {decision!r}")
        addr = record.address
        if not self._holds_claim(addr):
            raise ClaimError(f"write claim not held for {addr}")
        key = addr.key()
        with self.db.txn() as conn:
            self._fault("after_begin")
            row = conn.execute(
                "SELECT seq FROM tiles WHERE theme=? AND scale=? AND scene=? "
                "AND x=? AND y=? AND visible=1", key).fetchone()
            self._fault("after_check")
            if decision == "insert_visible":
                if row is not None:
                    raise StaleClaimError(f"{addr} already has a visible record")
            else:
                if row is None:
                    raise StaleClaimError(f"{addr} has no visible record to replace")
                if expect_seq is not None and row[0] != expect_seq:
                    raise StaleClaimError(
                        f"{addr} visible seq {row[0]} != expected {expect_seq}")
            seq = self._bump_seq(conn)
            if row is not None:
                # Old record's flip and the new insert commit atomically:
                # readers see the old blob until the commit, the new one after.
                conn.execute(
                    "UPDATE tiles SET visible=0 WHERE theme=? AND scale=? "
                    "AND scene=? AND x=? AND y=? AND visible=1", key)
            self._fault("after_flip")
            conn.execute(
                "INSERT INTO tiles(theme, scale, scene, x, y, visible, orig_tag, seq, blob) "
                "VALUES(?,?,?,?,?,1,?,?,?)",
                (*key, record.orig_meta_tag, seq, record.blob))
            self._fault("after_insert")
        self._fault("after_commit")
        return seq

    def get_visible_tile(self, addr: TileAddress) -> bytes | None:
        row = self.db.conn().execute(
            "SELECT blob FROM tiles WHERE theme=? AND scale=? AND scene=? "
            "AND x=? AND y=? AND visible=1", addr.key()).fetchone()
        return row[0] if row else None

    def get_visible_record(self, addr: TileAddress) -> TileRecord | None:
        row = self.db.conn().execute(
            "SELECT orig_tag, seq, blob FROM tiles WHERE theme=? AND scale=? "
            "AND scene=? AND x=? AND y=? AND visible=1", addr.key()).fetchone()
        if row is None:
            return None
        return TileRecord(addr, True, row[0], row[1], row[2])

    def query_tiles(self, theme: int, scale: int, scene: int,
                    x_range: tuple[int, int], y_range: tuple[int, int]) -> list[TileRecord]:
        """Visible records inside the inclusive rectangle, (y desc, x asc)."""
        if x_range[0] > x_range[1] or y_range[0] > y_range[1]:
            raise StoreError("malformed query rectangle")
        rows = self.db.conn().execute(
            "SELECT x, y, orig_tag, seq, blob FROM tiles "
            "WHERE theme=? AND scale=? AND scene=? AND visible=1 "
            "AND x BETWEEN ? AND ? AND y BETWEEN ? AND ? "
            "ORDER BY y DESC, x ASC",
            (theme, scale, scene, *x_range, *y_range)).fetchall()
        return [
            TileRecord(TileAddress(theme, scale, scene, x, y), True, tag, seq, blob)
            for x, y, tag, seq, blob in rows
        ]

    def records_at(self, addr: TileAddress) -> list[TileRecord]:
        """All records (visible and retained invisible) at an address."""
        rows = self.db.conn().execute(
            "SELECT visible, orig_tag, seq, blob FROM tiles WHERE theme=? "
            "AND scale=? AND scene=? AND x=? AND y=? ORDER BY seq", addr.key()).fetchall()
        return [TileRecord(addr, bool(v), tag, seq, blob) for v, tag, seq, blob in rows]

    def visible_tiles(self, theme: int | None = None) -> list[TileRecord]:
        sql = ("SELECT theme, scale, scene, x, y, orig_tag, seq, blob FROM tiles "
               "WHERE visible=1")
        args: tuple = ()
        if theme is not None:
            sql += " AND theme=?"
            args = (theme,)
        rows = self.db.conn().execute(sql + " ORDER BY theme, scale, scene, y DESC, x", args)
        return [
            TileRecord(TileAddress(t, s, sc, x, y), True, tag, seq, blob)
            for t, s, sc, x, y, tag, seq, blob in rows
        ]

    def purge_invisible(self, older_than_seq: int) -> int:
        """Admin GC: drop retained invisible records below a watermark."""
        with self.db.txn() as conn:
            cur = conn.execute(
                "DELETE FROM tiles WHERE visible=0 AND seq < ?", (older_than_seq,))
            return cur.rowcount

    # -- source-image metadata ----------------------------------------------

    def upsert_original_meta(self, meta: OriginalMeta) -> None:
        if meta.prod_status not in _PROD_ORDER:
            raise StoreError(f"unknown prod_status {meta.prod_status!r}")
        with self.db.txn() as conn:
            row = conn.execute(
                "SELECT prod_status FROM orig_meta WHERE theme=? AND tag=?",
                (meta.theme, meta.orig_meta_tag)).fetchone()
            status = meta.prod_status
            if row is not None and _PROD_ORDER[row[0]] > _PROD_ORDER[status]:
                status = row[0]  # never regress a recorded status
            conn.execute(
                "INSERT INTO orig_meta(theme, tag, source_file, acquisition_date, bbox, prod_status) "
                "VALUES(?,?,?,?,?,?) "
                "ON CONFLICT(theme, tag) DO UPDATE SET source_file=excluded.source_file, "
                "acquisition_date=excluded.acquisition_date, bbox=excluded.bbox, "
                "prod_status=?",
                (meta.theme, meta.orig_meta_tag, meta.source_file,
                 meta.acquisition_date, json.dumps(meta.geo_bbox, sort_keys=True),
                 status, status))

    def set_prod_status(self, theme: int, tag: str, status: str) -> None:
        if status not in _PROD_ORDER:
            raise StoreError(f"unknown prod_status {status!r}")
        with self.db.txn() as conn:
            row = conn.execute(
                "SELECT prod_status FROM orig_meta WHERE theme=? AND tag=?",
                (theme, tag)).fetchone()
            if row is None:
                raise StoreError(f"unknown orig_meta tag {tag!r}")
            if _PROD_ORDER[status] < _PROD_ORDER[row[0]]:
                raise StoreError(
                    f"prod_status may not move backward ({row[0]} -> {status})")
            conn.execute(
                "UPDATE orig_meta SET prod_status=? WHERE theme=? AND tag=?",
                (status, theme, tag))

    def get_original_meta(self, theme: int | None, tag: str) -> OriginalMeta | None:
        if theme is None:
            row = self.db.conn().execute(
                "SELECT theme, source_file, acquisition_date, bbox, prod_status "
                "FROM orig_meta WHERE tag=? ORDER BY theme LIMIT 1", (tag,)).fetchone()
            if row is None:
                return None
            theme, source_file, date, bbox, status = row
        else:
            row = self.db.conn().execute(
                "SELECT source_file, acquisition_date, bbox, prod_status "
                "FROM orig_meta WHERE theme=? AND tag=?", (theme, tag)).fetchone()
            if row is None:
                return None
            source_file, date, bbox, status = row
        return OriginalMeta(tag, theme, source_file, date, json.loads(bbox), status)

    def list_original_meta(self, theme: int) -> list[OriginalMeta]:
        rows = self.db.conn().execute(
            "SELECT tag, source_file, acquisition_date, bbox, prod_status "
            "FROM orig_meta WHERE theme=? ORDER BY tag", (theme,)).fetchall()
        return [OriginalMeta(tag, theme, sf, date, json.loads(bbox), status)
                for tag, sf, date, bbox, status in rows]

    # -- search records -----------------------------------------------------

    def put_search_record(self, rec: ImageSearchRecord) -> None:
        addr = rec.address
        with self.db.txn() as conn:
            seq = self._bump_seq(conn)
            conn.execute(
                "INSERT INTO search_records(theme, scale, scene, x, y, "
                "min_lat, min_lon, max_lat, max_lon, seq) VALUES(?,?,?,?,?,?,?,?,?,?) "
                "ON CONFLICT(theme, scale, scene, x, y) DO UPDATE SET "
                "min_lat=excluded.min_lat, min_lon=excluded.min_lon, "
                "max_lat=excluded.max_lat, max_lon=excluded.max_lon, seq=excluded.seq",
                (*addr.key(), rec.min_lat, rec.min_lon, rec.max_lat, rec.max_lon, seq))

    def search_tiles_at(self, geo: GeoCoord, theme: int | None = None) -> TileAddress | None:
        """Finest search-published tile whose footprint contains the point;
        ties (overlapping scenes) go to the most recently published record."""
        sql = ("SELECT theme, scale, scene, x, y FROM search_records "
               "WHERE min_lat<=? AND max_lat>=? AND min_lon<=? AND max_lon>=?")
        args: list = [geo.lat, geo.lat, geo.lon, geo.lon]
        if theme is not None:
            sql += " AND theme=?"
            args.append(theme)
        sql += " ORDER BY scale ASC, seq DESC LIMIT 1"
        row = self.db.conn().execute(sql, args).fetchone()
        return TileAddress(*row) if row else None

    # -- coverage -----------------------------------------------------------

    def coverage_paint(self, theme: int, min_lat: float, min_lon: float,
                       max_lat: float, max_lon: float) -> None:
        if min_lat > max_lat or min_lon > max_lon:
            raise StoreError("malformed coverage bbox")
        with self.db.txn() as conn:
            conn.execute(
                "INSERT INTO coverage_rects(theme, min_lat, min_lon, max_lat, max_lon) "
                "VALUES(?,?,?,?,?)", (theme, min_lat, min_lon, max_lat, max_lon))

    def coverage_snapshot(self, theme: int | None, pixels_per_degree: int) -> CoverageMap:
        """Rasterize painted boxes; ``theme=None`` is the all-themes union."""
        grid = CoverageMap(pixels_per_degree)
        sql = "SELECT min_lat, min_lon, max_lat, max_lon FROM coverage_rects"
        args: tuple = ()
        if theme is not None:
            sql += " WHERE theme=?"
            args = (theme,)
        for min_lat, min_lon, max_lat, max_lon in self.db.conn().execute(sql, args):
            grid.paint_bbox(min_lat, min_lon, max_lat, max_lon)
        return grid

    # -- integrity -----------------------------------------------------------

    def integrity_scan(self, deep: bool = True) -> list[str]:
        """Consistency check; returns human-readable problems (empty = OK)."""
        problems: list[str] = []
        conn = self.db.conn()
        for row in conn.execute(
                "SELECT theme, scale, scene, x, y, COUNT(*) FROM tiles WHERE visible=1 "
                "GROUP BY theme, scale, scene, x, y HAVING COUNT(*) > 1"):
            problems.append(f"multiple visible records at {row[:5]}")
        for row in conn.execute(
                "SELECT seq, COUNT(*) FROM tiles GROUP BY seq HAVING COUNT(*) > 1"):
            problems.append(f"duplicate insert_seq {row[0]}")
        top = conn.execute("SELECT MAX(seq) FROM tiles").fetchone()[0] or 0
        if top > self.current_seq():
            problems.append("insert_seq counter behind stored records")
        for row in conn.execute(
                "SELECT theme, tag, prod_status FROM orig_meta"):
            if row[2] not in _PROD_ORDER:
                problems.append(f"meta {row[1]} has unknown prod_status {row[2]}")
        for row in conn.execute(
                "SELECT s.theme, s.scale, s.scene, s.x, s.y FROM search_records s "
                "LEFT JOIN tiles t ON t.theme=s.theme AND t.scale=s.scale "
                "AND t.scene=s.scene AND t.x=s.x AND t.y=s.y AND t.visible=1 "
                "WHERE t.theme IS NULL"):
            problems.append(f"search record without visible tile at {row}")
        if deep:
            for theme, scale, scene, x, y, blob in conn.execute(
                    "SELECT theme, scale, scene, x, y, blob FROM tiles WHERE visible=1"):
                try:
                    tile = decode_tile(blob)
                except Exception as exc:
                    problems.append(f"undecodable blob at {(theme, scale, scene, x, y)}: {exc}")
                    continue
                if (tile.width, tile.height) != (TILE_SIDE, TILE_SIDE):
                    problems.append(
                        f"blob at {(theme, scale, scene, x, y)} is "
                        f"{tile.width}x{tile.height}, not a full tile")
        return problems

    # -- batched page lookup --------------------------------------------------

    def page_lookup(self, theme: int, scale: int, scene: int,
                    x_range: tuple[int, int], y_range: tuple[int, int],
                    probes: list[TileAddress] = (),
                    meta_tag_of: TileAddress | None = None):
        """One-shot snapshot for page composition: visible cells in a
        rectangle, existence probes at other scales, and the center tile's
        source metadata, all from a single consistent read transaction."""
        with self.db.txn(immediate=False) as conn:
            cells = {
                (x, y): (tag, seq)
                for x, y, tag, seq in conn.execute(
                    "SELECT x, y, orig_tag, seq FROM tiles WHERE theme=? AND scale=? "
                    "AND scene=? AND visible=1 AND x BETWEEN ? AND ? AND y BETWEEN ? AND ?",
                    (theme, scale, scene, *x_range, *y_range))
            }
            alive = set()
            for addr in probes:
                row = conn.execute(
                    "SELECT 1 FROM tiles WHERE theme=? AND scale=? AND scene=? "
                    "AND x=? AND y=? AND visible=1", addr.key()).fetchone()
                if row:
                    alive.add(addr)
            meta = None
            if meta_tag_of is not None:
                row = conn.execute(
                    "SELECT orig_tag FROM tiles WHERE theme=? AND scale=? AND scene=? "
                    "AND x=? AND y=? AND visible=1", meta_tag_of.key()).fetchone()
                if row:
                    mrow = conn.execute(
                        "SELECT source_file, acquisition_date, bbox, prod_status "
                        "FROM orig_meta WHERE theme=? AND tag=?",
                        (theme, row[0])).fetchone()
                    if mrow:
                        meta = OriginalMeta(row[0], theme, mrow[0], mrow[1],
                                            json.loads(mrow[2]), mrow[3])
        return cells, alive, meta


class _ClaimScope:
    def __init__(self, store: Store, key: tuple):
        self._store = store
        self._key = key

    def __enter__(self):
        with self._store._claims_mu:
            claim = self._store._claims.setdefault(self._key, _Claim())
            claim.holders += 1
        claim.lock.acquire()
        claim.owner = threading.get_ident()
        self._claim = claim
        return self

    def __exit__(self, *exc):
        claim = self._claim
        claim.owner = None
        claim.lock.release()
        with self._store._claims_mu:
            claim.holders -= 1
            if claim.holders == 0:
                self._store._claims.pop(self._key, None)
        return False
