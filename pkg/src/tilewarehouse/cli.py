"""Command-line entry points.

Subcommands:
  cut            run an ingest manifest against a store (exit 0 complete,
                 2 resumable abort, 3 duplicate media)
  resume         continue an interrupted load job
  scale          build pyramids; --once drains the queue, --watch polls it
  serve          HTTP server for tiles/pages/search/coverage/jobs
  fsck           store integrity scan (exit 0 = consistent)
  jobs           list load and scale jobs
  import-places  validate a gazetteer corpus and install it
  seed-demo      build a small self-contained demo warehouse
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from . import themes
from .cutter import CutterError, resume_job, run_manifest
from .gazetteer import Gazetteer
from .jobs import DuplicateMediaError, JobStore, ManifestError
from .scaler import Scaler
from .store import Store


def _cmd_cut(args) -> int:
    store = Store(args.store)
    jobstore = JobStore(args.store)
    try:
        job = run_manifest(store, jobstore, args.manifest)
    except DuplicateMediaError as exc:
        print(f"duplicate media: {exc}", file=sys.stderr)
        return 3
    except (ManifestError, CutterError) as exc:
        print(f"cut failed: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted; job is resumable", file=sys.stderr)
        return 2
    print(f"load job {job.job_id} completed "
          f"({len(job.files_done)} file(s), media {job.media_id})")
    return 0


def _cmd_resume(args) -> int:
    store = Store(args.store)
    jobstore = JobStore(args.store)
    try:
        job = resume_job(store, jobstore, args.job)
    except (ManifestError, CutterError) as exc:
        print(f"resume failed: {exc}", file=sys.stderr)
        return 2
    print(f"load job {job.job_id} now {job.status}")
    return 0


def _cmd_scale(args) -> int:
    store = Store(args.store)
    jobstore = JobStore(args.store)
    scaler = Scaler(store, jobstore)
    if args.watch:
        scaler.watch(theme=args.theme, scene=args.zone, interval=args.interval)
        return 0
    ran = scaler.run_once(theme=args.theme, scene=args.zone)
    print(f"ran {ran} scale job(s)")
    return 0


def _cmd_serve(args) -> int:
    from .server import make_server

    server = make_server(args.store, gazetteer_dir=args.gazetteer,
                         listen=args.listen, ui_dir=args.ui, quiet=not args.verbose)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}/")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_fsck(args) -> int:
    store = Store(args.store, create=False)
    problems = store.integrity_scan(deep=not args.shallow)
    for problem in problems:
        print(problem)
    print(f"{'consistent' if not problems else f'{len(problems)} problem(s)'}")
    return 0 if not problems else 1


def _cmd_jobs(args) -> int:
    jobstore = JobStore(args.store)
    listing = jobstore.list_jobs(args.status)
    for j in listing["load_jobs"]:
        print(f"load  #{j.job_id:<4} {j.status:<10} media={j.media_id} "
              f"theme={j.theme} files_done={len(j.files_done)}")
    for j in listing["scale_jobs"]:
        print(f"scale #{j.job_id:<4} {j.status:<10} theme={j.theme} scene={j.scene} "
              f"base={j.base_scale} rect=({j.x_min},{j.x_max},{j.y_min},{j.y_max})")
    return 0


def _cmd_import_places(args) -> int:
    gaz = Gazetteer()
    report = gaz.import_places(args.file)
    print(f"places={report.places} alt_places={report.alt_places} "
          f"states={report.states} countries={report.countries}")
    for line_no, reason in report.rejected:
        print(f"rejected line {line_no}: {reason}", file=sys.stderr)
    if args.gazetteer:
        dest = Path(args.gazetteer)
        dest.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(args.file, dest / "places.tsv")
        print(f"installed to {dest / 'places.tsv'}")
    return 0 if not report.rejected else 1


def _cmd_seed_demo(args) -> int:
    from .demo import seed_demo

    info = seed_demo(Path(args.store), Path(args.gazetteer) if args.gazetteer else None)
    print(json.dumps(info, indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tilewarehouse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cut", help="run an ingest manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--store", required=True)
    p.set_defaults(func=_cmd_cut)

    p = sub.add_parser("resume", help="resume an interrupted load job")
    p.add_argument("--job", type=int, required=True)
    p.add_argument("--store", required=True)
    p.set_defaults(func=_cmd_resume)

    p = sub.add_parser("scale", help="build image pyramids")
    p.add_argument("--theme", type=int, default=None)
    p.add_argument("--zone", type=int, default=None,
                   help="restrict to one scene/zone")
    p.add_argument("--store", required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--once", action="store_true", default=True)
    mode.add_argument("--watch", action="store_true")
    p.add_argument("--interval", type=float, default=1.0)
    p.set_defaults(func=_cmd_scale)

    p = sub.add_parser("serve", help="serve tiles and pages over HTTP")
    p.add_argument("--store", required=True)
    p.add_argument("--gazetteer", default=None)
    p.add_argument("--listen", default="127.0.0.1:8080")
    p.add_argument("--ui", default=None, help="static viewer directory")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("fsck", help="store integrity scan")
    p.add_argument("--store", required=True)
    p.add_argument("--shallow", action="store_true",
                   help="skip blob decode checks")
    p.set_defaults(func=_cmd_fsck)

    p = sub.add_parser("jobs", help="list jobs")
    p.add_argument("--store", required=True)
    p.add_argument("--status", default=None)
    p.set_defaults(func=_cmd_jobs)

    p = sub.add_parser("import-places", help="validate/install a gazetteer corpus")
    p.add_argument("--file", required=True)
    p.add_argument("--gazetteer", default=None)
    p.set_defaults(func=_cmd_import_places)

    p = sub.add_parser("seed-demo", help="build a small demo warehouse")
    p.add_argument("--store", required=True)
    p.add_argument("--gazetteer", default=None)
    p.set_defaults(func=_cmd_seed_demo)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
