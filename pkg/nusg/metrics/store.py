from pathlib import Path
from typing import List, Optional
import datetime
import logging

from sqlalchemy import Engine, create_engine, text

from .report import MetricsReport

logger = logging.getLogger(__name__)


_SCHEMA = """
CREATE TABLE IF NOT EXISTS report (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    tag TEXT,
    model TEXT NOT NULL,
    recall REAL NOT NULL,
    precision REAL NOT NULL,
    miou REAL NOT NULL,
    mae REAL NOT NULL,
    f1 REAL NOT NULL,
    params_mb REAL,
    flops_g REAL,
    inference_s REAL,
    inserted_at TEXT NOT NULL
)
"""


class ResultStore(object):
    """
    SQLite history of report rows.

    Repeated evaluations accumulate here so a comparison can be drawn over
    every architecture and baseline scored so far. `tag` groups rows of one
    experiment.
    """

    db: Engine

    def __init__(self, path: str | Path):
        self.db = create_engine(f"sqlite:///{path}")
        with self.db.begin() as conn:
            conn.execute(text(_SCHEMA))

    def add(self, row: MetricsReport, tag: Optional[str] = None) -> int:
        now = datetime.datetime.now()

        with self.db.begin() as conn:
            res = conn.execute(
                text("""
                INSERT INTO report (
                    tag, model, recall, precision, miou, mae, f1,
                    params_mb, flops_g, inference_s, inserted_at
                )
                VALUES (
                    :tag, :model, :recall, :precision, :miou, :mae, :f1,
                    :params_mb, :flops_g, :inference_s, :now
                )
                RETURNING id
                """),
                {**row.todict(), "tag": tag, "now": now.isoformat()},
            )

            inserted = res.first()
            if inserted is None:
                raise ValueError("failed to get id of inserted row")

        logger.info(f"stored report row for {row.model} (id {inserted.id})")
        return inserted.id

    def rows(self, tag: Optional[str] = None) -> List[MetricsReport]:
        """
        Stored rows in insertion order, optionally only those with `tag`.
        """

        with self.db.connect() as conn:
            res = conn.execute(
                text("""
                SELECT r.model, r.recall, r.precision, r.miou, r.mae, r.f1,
                       r.params_mb, r.flops_g, r.inference_s
                FROM report r
                WHERE :tag IS NULL OR r.tag = :tag
                ORDER BY r.id
                """),
                {"tag": tag},
            )
            return [MetricsReport.fromdict(row._asdict()) for row in res]

    def close(self) -> None:
        self.db.dispose()
