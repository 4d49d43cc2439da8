"""
Repository for persisting experiment runs and their trial records.
"""
import json
import logging
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

try:
    import aiosqlite
    AIOSQLITE_AVAILABLE = True
except ImportError:
    AIOSQLITE_AVAILABLE = False

from src.experiment import ExperimentSpec, TrialRecord

logger = logging.getLogger(__name__)

CREATE_RUNS = """
CREATE TABLE IF NOT EXISTS runs (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    created_at TEXT NOT NULL,
    algorithm TEXT NOT NULL,
    shape TEXT NOT NULL,
    seed INTEGER NOT NULL,
    trials INTEGER NOT NULL,
    spec TEXT NOT NULL
);
"""

CREATE_TRIALS = """
CREATE TABLE IF NOT EXISTS trials (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_id INTEGER NOT NULL REFERENCES runs(id),
    beta INTEGER NOT NULL,
    trial INTEGER NOT NULL,
    seed TEXT NOT NULL,
    success INTEGER NOT NULL,
    s1 INTEGER,
    t_act INTEGER,
    residue_inf REAL,
    value REAL,
    support INTEGER,
    verified INTEGER,
    error TEXT,
    wall_time REAL
);
"""


class TrialRepository:
    def __init__(self, db_path: str = "chaninc_results.db"):
        self.db_path = db_path
        if not AIOSQLITE_AVAILABLE:
            raise RuntimeError("Database configuration error: the aiosqlite driver is not available.")
        logger.debug(f"TrialRepository initialized at {db_path}")

    async def create_tables(self) -> bool:
        try:
            async with aiosqlite.connect(self.db_path) as db:
                await db.execute(CREATE_RUNS)
                await db.execute(CREATE_TRIALS)
                await db.commit()
            return True
        except Exception as e:
            logger.error(f"Error creating result tables: {e}", exc_info=True)
            return False

    async def store_run(self, spec: ExperimentSpec, records: Sequence[TrialRecord]) -> Optional[int]:
        """Store the experiment parameters and all trial records; returns the new run id."""
        try:
            async with aiosqlite.connect(self.db_path) as db:
                cursor = await db.execute(
                    "INSERT INTO runs (created_at, algorithm, shape, seed, trials, spec) VALUES (?, ?, ?, ?, ?, ?)",
                    (
                        datetime.now(timezone.utc).isoformat(),
                        spec.algorithm,
                        "x".join(str(v) for v in spec.shape),
                        spec.seed,
                        spec.trials,
                        json.dumps(spec.to_dict()),
                    ),
                )
                run_id = cursor.lastrowid
                await db.executemany(
                    "INSERT INTO trials (run_id, beta, trial, seed, success, s1, t_act, residue_inf, value, "
                    "support, verified, error, wall_time) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    [
                        (run_id, r.beta, r.trial, str(r.seed), int(r.success), r.s1, r.t_act, r.residue_inf,
                         r.value, r.support, int(r.verified), r.error, r.wall_time)
                        for r in records
                    ],
                )
                await db.commit()
                logger.info(f"Stored run {run_id} with {len(records)} trials")
                return run_id
        except Exception as e:
            logger.error(f"Error storing experiment run: {e}", exc_info=True)
            return None

    async def get_trials(self, run_id: int) -> List[TrialRecord]:
        records: List[TrialRecord] = []
        try:
            async with aiosqlite.connect(self.db_path) as db:
                db.row_factory = aiosqlite.Row
                async with db.execute(
                    "SELECT r.algorithm, t.* FROM trials t JOIN runs r ON r.id = t.run_id "
                    "WHERE t.run_id = ? ORDER BY t.beta, t.trial",
                    (run_id,),
                ) as cursor:
                    rows = await cursor.fetchall()
            for row in rows:
                records.append(TrialRecord(
                    beta=row["beta"],
                    trial=row["trial"],
                    seed=int(row["seed"]),
                    algorithm=row["algorithm"],
                    success=bool(row["success"]),
                    s1=row["s1"],
                    t_act=row["t_act"],
                    residue_inf=_nan_if_none(row["residue_inf"]),
                    value=_nan_if_none(row["value"]),
                    support=row["support"],
                    verified=bool(row["verified"]),
                    error=row["error"] or "",
                    wall_time=row["wall_time"] or 0.0,
                ))
        except Exception as e:
            logger.error(f"Error reading trials for run {run_id}: {e}", exc_info=True)
        return records

    async def list_runs(self) -> List[Dict[str, Any]]:
        runs: List[Dict[str, Any]] = []
        try:
            async with aiosqlite.connect(self.db_path) as db:
                db.row_factory = aiosqlite.Row
                async with db.execute("SELECT id, created_at, algorithm, shape, seed, trials FROM runs ORDER BY id") as cursor:
                    rows = await cursor.fetchall()
                    runs = [dict(row) for row in rows]
        except Exception as e:
            logger.error(f"Error listing runs: {e}", exc_info=True)
        return runs


def _nan_if_none(value) -> float:
    return float('nan') if value is None else float(value)
