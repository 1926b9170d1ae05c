# database/init_db.py
import argparse

from sqlalchemy import text
from sqlalchemy.engine import Engine

from database.db import get_engine

# One statement per entry: SQLite executes a single statement per call.
SCHEMA_SQL = [
    """
    CREATE TABLE IF NOT EXISTS result_rows (
      experiment   TEXT NOT NULL,
      cell_key     TEXT NOT NULL,
      basin_id     TEXT NOT NULL,
      metric       TEXT NOT NULL,
      replicate    INTEGER NOT NULL,
      label        TEXT NOT NULL,
      method       TEXT NOT NULL,
      k            TEXT NOT NULL,
      seed         INTEGER NOT NULL,
      value        DOUBLE PRECISION NULL,
      wall_time    DOUBLE PRECISION NOT NULL,
      completed_at TEXT NOT NULL,
      PRIMARY KEY (experiment, cell_key, basin_id, metric, replicate)
    )
    """,
    """
    CREATE INDEX IF NOT EXISTS idx_result_rows_cell
      ON result_rows (experiment, cell_key)
    """,
    """
    CREATE TABLE IF NOT EXISTS cells (
      experiment   TEXT NOT NULL,
      cell_key     TEXT NOT NULL,
      n_rows       INTEGER NOT NULL,
      PRIMARY KEY (experiment, cell_key)
    )
    """,
]


def init_schema(eng: Engine) -> None:
    with eng.begin() as conn:
        for stmt in SCHEMA_SQL:
            conn.execute(text(stmt))


def main():
    parser = argparse.ArgumentParser(description="Create the result-log tables.")
    parser.add_argument("--url", default=None, help="database URL (default: DATABASE_URL)")
    args = parser.parse_args()
    init_schema(get_engine(args.url))
    print("✅ Result log initialised: result_rows and cells are ready.")


if __name__ == "__main__":
    main()
