"""Shared SQLite plumbing for the warehouse and job stores.

One ``Database`` owns a file path and hands each thread its own connection
(WAL journal, full synchronous, generous busy timeout) so many readers can
proceed while writers commit.  Connections of finished threads are reclaimed
into a free pool rather than leaked, which matters under thread-per-request
HTTP serving.  Write transactions use BEGIN IMMEDIATE to take the write lock
up front, keeping multi-statement updates atomic across processes as well as
threads.
"""

from __future__ import annotations

import sqlite3
import threading
from contextlib import contextmanager
from pathlib import Path

BUSY_TIMEOUT_S = 60.0


class Database:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._local = threading.local()
        self._by_thread: dict[int, sqlite3.Connection] = {}
        self._free: list[sqlite3.Connection] = []
        self._mu = threading.Lock()

    def _new_conn(self) -> sqlite3.Connection:
        # check_same_thread off: a connection is only ever used by the one
        # thread holding it in _by_thread, but may be adopted by a new
        # thread after its previous owner exits.
        conn = sqlite3.connect(
            self.path,
            timeout=BUSY_TIMEOUT_S,
            isolation_level=None,  # explicit transaction control
            check_same_thread=False,
        )
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA synchronous=FULL")
        conn.execute("PRAGMA foreign_keys=ON")
        return conn

    def conn(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            return conn
        tid = threading.get_ident()
        with self._mu:
            conn = self._by_thread.get(tid)
            if conn is None:
                alive = {t.ident for t in threading.enumerate()}
                for dead in [t for t in self._by_thread if t not in alive]:
                    self._free.append(self._by_thread.pop(dead))
                if self._free:
                    conn = self._free.pop()
                    if conn.in_transaction:  # previous owner died mid-txn
                        conn.execute("ROLLBACK")
                else:
                    conn = self._new_conn()
                self._by_thread[tid] = conn
        self._local.conn = conn
        return conn

    @contextmanager
    def txn(self, immediate: bool = True):
        """Atomic transaction scope; rolls back on any exception."""
        conn = self.conn()
        conn.execute("BEGIN IMMEDIATE" if immediate else "BEGIN")
        try:
            yield conn
        except BaseException:
            conn.execute("ROLLBACK")
            raise
        else:
            conn.execute("COMMIT")

    def close(self) -> None:
        with self._mu:
            conns = list(self._by_thread.values()) + self._free
            self._by_thread.clear()
            self._free.clear()
        for conn in conns:
            try:
                conn.close()
            except sqlite3.Error:
                pass
        self._local = threading.local()
