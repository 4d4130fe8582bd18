"""
Run Registry for the Kelvin-Voigt Beam Laboratory
Keeps a sqlite history of pipeline runs and the artifacts each one wrote
"""

import json
import logging
import sqlite3
from pathlib import Path
from typing import Dict, Optional

import pandas as pd

logger = logging.getLogger(__name__)


class RunRegistry:
    """sqlite log of runs (one row per pipeline invocation) and their artifacts"""

    def __init__(self, db_path: str = "outputs/beam_lab_runs.db"):
        self.db_path = db_path
        Path(db_path).parent.mkdir(parents=True, exist_ok=True)
        self.setup_database()

    def setup_database(self):
        """Create the runs and artifacts tables"""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        try:
            cursor.execute("PRAGMA foreign_keys = ON")

            cursor.execute(
                """
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    command TEXT NOT NULL,
                    output_dir TEXT NOT NULL,
                    exit_code INTEGER NOT NULL,
                    wall_time REAL,
                    config TEXT, -- JSON object
                    summary TEXT, -- JSON object
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            """
            )

            cursor.execute(
                """
                CREATE TABLE IF NOT EXISTS artifacts (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    name TEXT NOT NULL,
                    sha256 TEXT NOT NULL,
                    bytes INTEGER NOT NULL,
                    FOREIGN KEY (run_id) REFERENCES runs (id),
                    UNIQUE(run_id, name)
                )
            """
            )

            cursor.execute("CREATE INDEX IF NOT EXISTS idx_runs_command ON runs(command)")
            conn.commit()

        except Exception as e:
            logger.error(f"Error creating run registry tables: {e}")
            conn.rollback()
            raise
        finally:
            conn.close()

    def record_run(self, manifest: Dict, exit_code: int) -> int:
        """Store one manifest; returns the run id"""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        try:
            cursor.execute(
                """
                INSERT INTO runs (command, output_dir, exit_code, wall_time, config, summary)
                VALUES (?, ?, ?, ?, ?, ?)
            """,
                (
                    manifest.get("command"),
                    manifest.get("output_dir", ""),
                    exit_code,
                    manifest.get("wall_time"),
                    json.dumps(manifest.get("inputs", {}), sort_keys=True, default=str),
                    json.dumps(manifest.get("summary", {}), sort_keys=True, default=str),
                ),
            )
            run_id = cursor.lastrowid

            for artifact in manifest.get("artifacts", []):
                cursor.execute(
                    """
                    INSERT OR REPLACE INTO artifacts (run_id, name, sha256, bytes)
                    VALUES (?, ?, ?, ?)
                """,
                    (run_id, artifact["name"], artifact["sha256"], artifact["bytes"]),
                )

            conn.commit()
            return run_id

        except Exception as e:
            logger.error(f"Error recording run: {e}")
            conn.rollback()
            raise
        finally:
            conn.close()

    def get_runs(self, command: Optional[str] = None, limit: int = 100) -> pd.DataFrame:
        """Most recent runs first"""
        conn = sqlite3.connect(self.db_path)
        query = "SELECT id, command, output_dir, exit_code, wall_time, created_at FROM runs"
        params = []
        if command:
            query += " WHERE command = ?"
            params.append(command)
        query += " ORDER BY id DESC LIMIT ?"
        params.append(limit)

        df = pd.read_sql_query(query, conn, params=params)
        conn.close()
        return df

    def get_artifacts(self, run_id: int) -> pd.DataFrame:
        conn = sqlite3.connect(self.db_path)
        df = pd.read_sql_query(
            "SELECT name, sha256, bytes FROM artifacts WHERE run_id = ? ORDER BY name", conn, params=(run_id,)
        )
        conn.close()
        return df

    def get_database_stats(self) -> Dict:
        """Run counts per command and failure count"""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        stats = {}

        try:
            for table in ("runs", "artifacts"):
                cursor.execute(f"SELECT COUNT(*) FROM {table}")
                stats[f"{table}_count"] = cursor.fetchone()[0]

            cursor.execute("SELECT COUNT(*) FROM runs WHERE exit_code != 0")
            stats["failed_runs"] = cursor.fetchone()[0]

            cursor.execute("SELECT command, COUNT(*) FROM runs GROUP BY command")
            stats["runs_by_command"] = dict(cursor.fetchall())

        except Exception as e:
            logger.error(f"Error getting run registry stats: {e}")
        finally:
            conn.close()

        return stats
