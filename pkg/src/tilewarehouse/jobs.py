"""Load management: persistent job state machines and the ingest manifest.

A LoadJob tracks one ingest run over a manifest of source images; its
files_done set plus each image's production status make the run restartable
without ever tiling a file twice.  A ScaleJob is the durable signal that a
rectangle of freshly cut base tiles needs its pyramid (re)built; workers
claim jobs atomically so no two builders pick up the same one.

All state transitions commit before the corresponding work begins.
"""

from __future__ import annotations

import json
import socket
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, themes
from .dbcore import Database
from .grid import Theme
from .store import Store

LOAD_STATUSES = ("queued", "running", "completed", "aborted")
SCALE_STATUSES = ("queued", "running", "completed")


class JobError(RuntimeError):
    pass


class DuplicateMediaError(JobError):
    """The media id was already loaded to completion."""


class ManifestError(JobError):
    pass


# -- ingest manifest ---------------------------------------------------------


@dataclass(frozen=True)
class ManifestImage:
    file: str
    format: str  # "pgm" | "png-indexed"
    resolution_m: float
    acquisition_date: str | None = None
    # projected scenes: georeference of the image's top-left pixel
    utm_zone: int | None = None
    top_left_easting: float | None = None
    top_left_northing: float | None = None
    # raw scenes: placement in scene pixels at the theme base resolution
    offset_left_px: int | None = None
    offset_top_px: int | None = None


@dataclass(frozen=True)
class Manifest:
    media_id: str
    theme: int
    kind: str
    images: tuple[ManifestImage, ...]

    def file_names(self) -> list[str]:
        return [img.file for img in self.images]


def parse_manifest(path: str | Path) -> Manifest:
    """Parse and validate a scene manifest (JSON, see README for the schema)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestError(f"unreadable manifest {path}: {exc}") from None
    for key in ("media_id", "theme", "kind", "images"):
        if key not in doc:
            raise ManifestError(f"manifest missing field {key!r}")
    if doc["kind"] not in ("projected", "raw"):
        raise ManifestError(f"unknown kind {doc['kind']!r}")
    theme = doc["theme"]
    if isinstance(theme, str):
        try:
            theme = themes.by_name(theme).id
        except KeyError as exc:
            raise ManifestError(str(exc)) from None
    images = []
    for i, entry in enumerate(doc["images"]):
        for key in ("file", "format", "resolution_m"):
            if key not in entry:
                raise ManifestError(f"images[{i}] missing field {key!r}")
        if entry["format"] not in ("pgm", "png-indexed"):
            raise ManifestError(f"images[{i}] has unknown format {entry['format']!r}")
        utm = entry.get("utm")
        offset = entry.get("offset")
        if doc["kind"] == "projected":
            if not utm:
                raise ManifestError(f"images[{i}]: projected image needs a utm block")
            for key in ("zone", "top_left_easting", "top_left_northing"):
                if key not in utm:
                    raise ManifestError(f"images[{i}].utm missing {key!r}")
        else:
            if not offset or "left_px" not in offset or "top_px" not in offset:
                raise ManifestError(f"images[{i}]: raw image needs offset.left_px/top_px")
        images.append(ManifestImage(
            file=entry["file"],
            format=entry["format"],
            resolution_m=float(entry["resolution_m"]),
            acquisition_date=entry.get("acquisition_date"),
            utm_zone=utm["zone"] if utm else None,
            top_left_easting=float(utm["top_left_easting"]) if utm else None,
            top_left_northing=float(utm["top_left_northing"]) if utm else None,
            offset_left_px=int(offset["left_px"]) if offset else None,
            offset_top_px=int(offset["top_px"]) if offset else None,
        ))
    return Manifest(str(doc["media_id"]), int(theme), doc["kind"], tuple(images))


# -- job rows -----------------------------------------------------------------


@dataclass
class LoadJob:
    job_id: int
    source_path: str
    media_id: str
    theme: int
    kind: str
    machine: str
    program_version: str
    start_date: str
    status: str
    start_seq: int
    scene_id: int | None = None
    heartbeat: float = 0.0
    files_done: set[str] = field(default_factory=set)


@dataclass
class ScaleJob:
    job_id: int
    theme: int
    scene: int
    base_scale: int
    x_min: int
    x_max: int
    y_min: int
    y_max: int
    watermark_seq: int
    status: str
    claimed_by: str | None = None
    heartbeat: float | None = None


_SCHEMA = """
CREATE TABLE IF NOT EXISTS load_jobs(
  job_id INTEGER PRIMARY KEY AUTOINCREMENT,
  source_path TEXT NOT NULL,
  media_id TEXT NOT NULL,
  theme INTEGER NOT NULL,
  kind TEXT NOT NULL,
  machine TEXT NOT NULL,
  program_version TEXT NOT NULL,
  start_date TEXT NOT NULL,
  status TEXT NOT NULL,
  start_seq INTEGER NOT NULL,
  scene_id INTEGER,
  heartbeat REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS load_files(
  job_id INTEGER NOT NULL,
  file TEXT NOT NULL,
  PRIMARY KEY(job_id, file)
);
CREATE TABLE IF NOT EXISTS scale_jobs(
  job_id INTEGER PRIMARY KEY AUTOINCREMENT,
  theme INTEGER NOT NULL,
  scene INTEGER NOT NULL,
  base_scale INTEGER NOT NULL,
  x_min INTEGER NOT NULL,
  x_max INTEGER NOT NULL,
  y_min INTEGER NOT NULL,
  y_max INTEGER NOT NULL,
  watermark_seq INTEGER NOT NULL,
  status TEXT NOT NULL,
  claimed_by TEXT,
  heartbeat REAL
);
CREATE TABLE IF NOT EXISTS scene_counters(
  theme INTEGER PRIMARY KEY,
  value INTEGER NOT NULL
);
"""

_LOAD_COLS = ("job_id, source_path, media_id, theme, kind, machine, "
              "program_version, start_date, status, start_seq, scene_id, heartbeat")
_SCALE_COLS = ("job_id, theme, scene, base_scale, x_min, x_max, y_min, y_max, "
               "watermark_seq, status, claimed_by, heartbeat")


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class JobStore:
    """Job tables live in the same database file as the warehouse, so scene
    counters and job state share the store's transactional guarantees."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.db = Database(self.root / Store.DB_NAME)
        self.db.conn().executescript(_SCHEMA)  # executescript autocommits

    def close(self) -> None:
        self.db.close()

    # -- load jobs ----------------------------------------------------------

    def create_load_job(self, source_path: str | Path, media_id: str,
                        manifest: Manifest, start_seq: int,
                        machine: str | None = None) -> LoadJob:
        """Register a new ingest run.

        A media id that already completed is refused (duplicate tape/CD
        protection).  Earlier aborted or crashed runs of the same media are
        inherited: their files_done, start watermark, and any allocated
        scene id carry over so nothing is processed twice.
        """
        machine = machine or socket.gethostname()
        with self.db.txn() as conn:
            prior = conn.execute(
                f"SELECT {_LOAD_COLS} FROM load_jobs WHERE media_id=? ORDER BY job_id",
                (media_id,)).fetchall()
            inherited_files: set[str] = set()
            scene_id = None
            for row in prior:
                if row[8] == "completed":
                    raise DuplicateMediaError(
                        f"media {media_id!r} already loaded by job {row[0]}")
                start_seq = min(start_seq, row[9])
                if row[10] is not None:
                    scene_id = row[10]
                for (name,) in conn.execute(
                        "SELECT file FROM load_files WHERE job_id=?", (row[0],)):
                    inherited_files.add(name)
            cur = conn.execute(
                "INSERT INTO load_jobs(source_path, media_id, theme, kind, machine, "
                "program_version, start_date, status, start_seq, scene_id, heartbeat) "
                "VALUES(?,?,?,?,?,?,?,?,?,?,?)",
                (str(source_path), media_id, manifest.theme, manifest.kind, machine,
                 __version__, _utcnow(), "queued", start_seq, scene_id, time.time()))
            job_id = cur.lastrowid
            conn.executemany(
                "INSERT OR IGNORE INTO load_files(job_id, file) VALUES(?,?)",
                [(job_id, name) for name in inherited_files])
        return self.get_load_job(job_id)

    def get_load_job(self, job_id: int) -> LoadJob:
        row = self.db.conn().execute(
            f"SELECT {_LOAD_COLS} FROM load_jobs WHERE job_id=?", (job_id,)).fetchone()
        if row is None:
            raise JobError(f"no load job {job_id}")
        files = {name for (name,) in self.db.conn().execute(
            "SELECT file FROM load_files WHERE job_id=?", (job_id,))}
        return LoadJob(*row[:10], scene_id=row[10], heartbeat=row[11], files_done=files)

    def set_load_status(self, job_id: int, status: str) -> None:
        if status not in LOAD_STATUSES:
            raise JobError(f"unknown load status {status!r}")
        with self.db.txn() as conn:
            row = conn.execute(
                "SELECT status FROM load_jobs WHERE job_id=?", (job_id,)).fetchone()
            if row is None:
                raise JobError(f"no load job {job_id}")
            current = row[0]
            allowed = {
                "queued": {"queued", "running", "aborted"},
                "running": {"running", "completed", "aborted"},
                "completed": {"completed"},
                "aborted": {"aborted"},
            }[current]
            if status not in allowed:
                raise JobError(f"illegal load status transition {current} -> {status}")
            conn.execute(
                "UPDATE load_jobs SET status=?, heartbeat=? WHERE job_id=?",
                (status, time.time(), job_id))

    def heartbeat_load(self, job_id: int) -> None:
        with self.db.txn() as conn:
            conn.execute("UPDATE load_jobs SET heartbeat=? WHERE job_id=?",
                         (time.time(), job_id))

    def mark_file_done(self, job_id: int, file: str) -> None:
        with self.db.txn() as conn:
            row = conn.execute(
                "SELECT status FROM load_jobs WHERE job_id=?", (job_id,)).fetchone()
            if row is None or row[0] != "running":
                raise JobError(f"load job {job_id} is not running")
            conn.execute(
                "INSERT OR IGNORE INTO load_files(job_id, file) VALUES(?,?)",
                (job_id, file))

    def complete_load_job(self, job_id: int, manifest: Manifest) -> None:
        done = self.get_load_job(job_id).files_done
        missing = set(manifest.file_names()) - done
        if missing:
            raise JobError(f"load job {job_id} missing files: {sorted(missing)}")
        self.set_load_status(job_id, "completed")

    def set_job_scene(self, job_id: int, scene_id: int) -> None:
        with self.db.txn() as conn:
            conn.execute("UPDATE load_jobs SET scene_id=? WHERE job_id=?",
                         (scene_id, job_id))

    def allocate_scene_id(self, theme: Theme | int) -> int:
        """Next raw scene number for a theme: a durable, strictly increasing
        count of scenes inserted."""
        theme_id = theme.id if isinstance(theme, Theme) else theme
        with self.db.txn() as conn:
            conn.execute(
                "INSERT OR IGNORE INTO scene_counters(theme, value) VALUES(?, 0)",
                (theme_id,))
            cur = conn.execute(
                "UPDATE scene_counters SET value = value + 1 WHERE theme=? RETURNING value",
                (theme_id,))
            return cur.fetchone()[0]

    # -- scale jobs ----------------------------------------------------------

    def enqueue_scale_job(self, theme: int, scene: int, base_scale: int,
                          rect: tuple[int, int, int, int],
                          watermark_seq: int) -> ScaleJob:
        x_min, x_max, y_min, y_max = rect
        if x_min > x_max or y_min > y_max:
            raise JobError(f"empty scale rectangle {rect}")
        with self.db.txn() as conn:
            cur = conn.execute(
                "INSERT INTO scale_jobs(theme, scene, base_scale, x_min, x_max, "
                "y_min, y_max, watermark_seq, status) VALUES(?,?,?,?,?,?,?,?,'queued')",
                (theme, scene, base_scale, x_min, x_max, y_min, y_max, watermark_seq))
            job_id = cur.lastrowid
        return self.get_scale_job(job_id)

    def get_scale_job(self, job_id: int) -> ScaleJob:
        row = self.db.conn().execute(
            f"SELECT {_SCALE_COLS} FROM scale_jobs WHERE job_id=?", (job_id,)).fetchone()
        if row is None:
            raise JobError(f"no scale job {job_id}")
        return ScaleJob(*row)

    def claim_scale_job(self, theme: int | None = None, scene: int | None = None,
                        claimer: str | None = None,
                        stale_after: float | None = None) -> ScaleJob | None:
        """Atomically flip one queued job to running and return it.

        Concurrent claimers never receive the same job.  With
        ``stale_after`` set, running jobs whose heartbeat is older than that
        many seconds are also eligible (crashed-worker recovery).
        """
        claimer = claimer or f"{socket.gethostname()}:{time.monotonic_ns()}"
        where = "status='queued'"
        args: list = []
        if stale_after is not None:
            where = "(status='queued' OR (status='running' AND heartbeat < ?))"
            args.append(time.time() - stale_after)
        if theme is not None:
            where += " AND theme=?"
            args.append(theme)
        if scene is not None:
            where += " AND scene=?"
            args.append(scene)
        with self.db.txn() as conn:
            row = conn.execute(
                f"SELECT job_id FROM scale_jobs WHERE {where} ORDER BY job_id LIMIT 1",
                args).fetchone()
            if row is None:
                return None
            conn.execute(
                "UPDATE scale_jobs SET status='running', claimed_by=?, heartbeat=? "
                "WHERE job_id=?", (claimer, time.time(), row[0]))
            job_id = row[0]
        return self.get_scale_job(job_id)

    def heartbeat_scale(self, job_id: int) -> None:
        with self.db.txn() as conn:
            conn.execute("UPDATE scale_jobs SET heartbeat=? WHERE job_id=?",
                         (time.time(), job_id))

    def complete_scale_job(self, job_id: int) -> None:
        with self.db.txn() as conn:
            row = conn.execute(
                "SELECT status FROM scale_jobs WHERE job_id=?", (job_id,)).fetchone()
            if row is None:
                raise JobError(f"no scale job {job_id}")
            if row[0] != "running":
                raise JobError(f"scale job {job_id} is {row[0]}, not running")
            conn.execute(
                "UPDATE scale_jobs SET status='completed', heartbeat=? WHERE job_id=?",
                (time.time(), job_id))

    # -- admin listing --------------------------------------------------------

    def list_load_jobs(self, status: str | None = None) -> list[LoadJob]:
        sql = f"SELECT {_LOAD_COLS} FROM load_jobs"
        args: tuple = ()
        if status is not None:
            sql += " WHERE status=?"
            args = (status,)
        rows = self.db.conn().execute(sql + " ORDER BY job_id", args).fetchall()
        jobs = []
        for row in rows:
            files = {name for (name,) in self.db.conn().execute(
                "SELECT file FROM load_files WHERE job_id=?", (row[0],))}
            jobs.append(LoadJob(*row[:10], scene_id=row[10], heartbeat=row[11],
                                files_done=files))
        return jobs

    def list_scale_jobs(self, status: str | None = None,
                        theme: int | None = None) -> list[ScaleJob]:
        sql = f"SELECT {_SCALE_COLS} FROM scale_jobs"
        clauses = []
        args: list = []
        if status is not None:
            clauses.append("status=?")
            args.append(status)
        if theme is not None:
            clauses.append("theme=?")
            args.append(theme)
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        rows = self.db.conn().execute(sql + " ORDER BY job_id", args).fetchall()
        return [ScaleJob(*row) for row in rows]

    def list_jobs(self, status: str | None = None) -> dict:
        """Combined summary for the admin surface."""
        return {
            "load_jobs": self.list_load_jobs(status),
            "scale_jobs": self.list_scale_jobs(status),
        }
