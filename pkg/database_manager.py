"""
Database Manager for the interleave-tune run registry
Indexes training/eval runs and their benchmark metrics for side-by-side
condition comparisons. Artifacts themselves stay in the run directories.
"""

import sqlite3
import json
from typing import Dict, List, Optional

import pandas as pd

from shard_eval import TABLE_COLUMNS


class DatabaseManager:
    """Manages the SQLite registry of runs and evaluation metrics"""

    def __init__(self, db_path: str = "interleave_runs.db"):
        """Initialize database manager

        Args:
            db_path: Path to SQLite database file
        """
        self.db_path = str(db_path)
        self.init_database()

    def init_database(self):
        """Initialize database with required tables"""
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()

            # Runs table - one row per trained / evaluated condition
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    run_id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_name TEXT NOT NULL,
                    stage TEXT NOT NULL,
                    format TEXT NOT NULL,
                    seed INTEGER NOT NULL,
                    checkpoint_path TEXT,
                    created_date TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    parameters TEXT,  -- JSON of the effective config
                    notes TEXT,
                    UNIQUE(run_name, stage, format)
                )
            """)

            # Eval metrics table - one row per relation task of a run
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS eval_metrics (
                    metric_id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    relation TEXT NOT NULL,
                    tp INTEGER,
                    fp INTEGER,
                    tn INTEGER,
                    fn INTEGER,
                    unparsed_count INTEGER,
                    accuracy REAL,
                    precision REAL,
                    recall REAL,
                    f1 REAL,
                    calculated_date TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    FOREIGN KEY (run_id) REFERENCES runs (run_id),
                    UNIQUE(run_id, relation)
                )
            """)

            conn.commit()

    def create_run(self,
                   run_name: str,
                   stage: str,
                   fmt: str,
                   seed: int,
                   checkpoint_path: str = None,
                   parameters: Dict = None,
                   notes: str = None) -> int:
        """Register a run

        Re-registering the same name/stage/format keeps its run_id, updates
        the row and drops the metrics stored for the previous registration.

        Returns:
            run_id: ID of the registered run
        """
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()

            parameters_json = json.dumps(parameters, sort_keys=True) if parameters else None

            cursor.execute("""
                INSERT INTO runs
                (run_name, stage, format, seed, checkpoint_path, parameters, notes)
                VALUES (?, ?, ?, ?, ?, ?, ?)
                ON CONFLICT(run_name, stage, format) DO UPDATE SET
                    seed = excluded.seed,
                    checkpoint_path = excluded.checkpoint_path,
                    parameters = excluded.parameters,
                    notes = excluded.notes,
                    created_date = CURRENT_TIMESTAMP
            """, (run_name, stage, fmt, seed,
                  str(checkpoint_path) if checkpoint_path else None, parameters_json, notes))

            cursor.execute("SELECT run_id FROM runs WHERE run_name = ? AND stage = ? AND format = ?",
                           (run_name, stage, fmt))
            run_id = cursor.fetchone()[0]
            cursor.execute("DELETE FROM eval_metrics WHERE run_id = ?", (run_id,))
            conn.commit()

            return run_id

    def store_eval_metrics(self, run_id: int, report):
        """Store a MetricsReport's per-relation numbers for a run"""
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()

            rows = [("identity", None, None, None, None, None,
                     report.identity_accuracy, None, None, None)]
            for relation in ("synonym", "hypernym"):
                m = getattr(report, relation)
                rows.append((relation, m.tp, m.fp, m.tn, m.fn, m.unparsed_count,
                             m.accuracy, m.precision, m.recall, m.f1))

            for row in rows:
                cursor.execute("""
                    INSERT OR REPLACE INTO eval_metrics
                    (run_id, relation, tp, fp, tn, fn, unparsed_count,
                     accuracy, precision, recall, f1)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                """, (run_id,) + row)

            conn.commit()

    def get_runs(self, stage: str = None) -> pd.DataFrame:
        """Get registered runs with optional stage filtering"""
        with sqlite3.connect(self.db_path) as conn:
            query = "SELECT * FROM runs"
            params = []

            if stage:
                query += " WHERE stage = ?"
                params = [stage]

            query += " ORDER BY run_id"

            return pd.read_sql_query(query, conn, params=params)

    def get_metrics_by_run(self, run_id: int) -> pd.DataFrame:
        """Get all metric rows for a specific run"""
        with sqlite3.connect(self.db_path) as conn:
            return pd.read_sql_query("""
                SELECT * FROM eval_metrics WHERE run_id = ? ORDER BY relation
            """, conn, params=(run_id,))

    def get_condition_comparison(self, run_ids: Optional[List[int]] = None) -> pd.DataFrame:
        """One row per run, columns shaped like the results table (percentages)"""
        with sqlite3.connect(self.db_path) as conn:
            query = """
                SELECT r.run_id, r.run_name, r.stage, r.format, m.relation,
                       m.accuracy, m.precision, m.recall, m.f1
                FROM runs r
                JOIN eval_metrics m ON m.run_id = r.run_id
            """
            params = []
            if run_ids:
                query += " WHERE r.run_id IN (%s)" % ",".join("?" * len(run_ids))
                params = list(run_ids)
            query += " ORDER BY r.run_id, m.relation"

            long_df = pd.read_sql_query(query, conn, params=params)

        if long_df.empty:
            return pd.DataFrame(columns=["run_name", "stage", "format"] + TABLE_COLUMNS)

        rows = []
        for run_id, group in long_df.groupby("run_id", sort=True):
            by_relation = group.set_index("relation")
            first = group.iloc[0]

            def metric(relation, column):
                if relation not in by_relation.index:
                    return float("nan")
                return round(100.0 * float(by_relation.loc[relation, column]), 2)

            rows.append({
                "run_id": run_id,
                "run_name": first["run_name"],
                "stage": first["stage"],
                "format": first["format"],
                "Identity Acc": metric("identity", "accuracy"),
                "Syno. Acc": metric("synonym", "accuracy"),
                "Hyper. Acc": metric("hypernym", "accuracy"),
                "Syno. P": metric("synonym", "precision"),
                "Hyper. P": metric("hypernym", "precision"),
                "Syno. R": metric("synonym", "recall"),
                "Hyper. R": metric("hypernym", "recall"),
                "Syno. F1": metric("synonym", "f1"),
                "Hyper. F1": metric("hypernym", "f1"),
            })
        return pd.DataFrame(rows).set_index("run_id")
