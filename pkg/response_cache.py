import os
import sqlite3
import logging
from datetime import datetime, timezone
from typing import Optional, Any

import simplejson as json

logger = logging.getLogger(__name__)


class ResponseCache:
    """sqlite-backed store of raw carbon-intensity API payloads.

    One row per (region, chunk) request; a cached chunk is never fetched again.
    """

    def __init__(self, cache_dir: str):
        self.cache_dir = cache_dir
        os.makedirs(cache_dir, exist_ok=True)
        self.db_path = os.path.join(cache_dir, "responses.db")
        self._initialize_db()

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def _initialize_db(self):
        """Create the responses table if it doesn't exist."""
        conn = self._connect()
        try:
            conn.executescript("""
            CREATE TABLE IF NOT EXISTS responses (
                region_id INTEGER NOT NULL,
                chunk_from TEXT NOT NULL,
                chunk_to TEXT NOT NULL,
                payload TEXT NOT NULL,
                fetched_at TEXT NOT NULL,
                PRIMARY KEY (region_id, chunk_from, chunk_to)
            );
            """)
            conn.commit()
        finally:
            conn.close()

    def get(self, region_id: int, chunk_from: str, chunk_to: str) -> Optional[Any]:
        """Return the cached payload for a chunk, or None."""
        conn = self._connect()
        try:
            row = conn.execute(
                "SELECT payload FROM responses WHERE region_id = ? AND chunk_from = ? AND chunk_to = ?",
                (region_id, chunk_from, chunk_to),
            ).fetchone()
        except sqlite3.Error as e:
            logger.warning(f"Cache read failed for region {region_id} {chunk_from}: {e}")
            return None
        finally:
            conn.close()
        if row is None:
            return None
        return json.loads(row["payload"])

    def put(self, region_id: int, chunk_from: str, chunk_to: str, payload: Any) -> bool:
        """Store a payload. Returns True if the write succeeded."""
        conn = self._connect()
        try:
            conn.execute(
                "INSERT OR REPLACE INTO responses (region_id, chunk_from, chunk_to, payload, fetched_at) "
                "VALUES (?, ?, ?, ?, ?)",
                (
                    region_id,
                    chunk_from,
                    chunk_to,
                    json.dumps(payload),
                    datetime.now(timezone.utc).isoformat(),
                ),
            )
            conn.commit()
            return True
        except sqlite3.Error as e:
            logger.warning(f"Cache write failed for region {region_id} {chunk_from}: {e}")
            return False
        finally:
            conn.close()

    def count(self) -> int:
        conn = self._connect()
        try:
            return conn.execute("SELECT COUNT(*) FROM responses").fetchone()[0]
        finally:
            conn.close()
