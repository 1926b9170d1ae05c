# database/db.py
import os
from pathlib import Path
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from dotenv import load_dotenv

# Load .env once, globally
load_dotenv()


def get_engine(db_url: Optional[str] = None) -> Engine:
    db_url = db_url or os.getenv("DATABASE_URL")
    if not db_url:
        raise RuntimeError("No result database configured: pass a URL or set DATABASE_URL.")

    connect_args = {}
    if db_url.startswith("sqlite:///"):
        Path(db_url[len("sqlite:///"):]).parent.mkdir(parents=True, exist_ok=True)
        # cells finish on worker threads; writes stay on the main thread
        connect_args["check_same_thread"] = False
    else:
        sslmode = os.getenv("PGSSLMODE")
        if sslmode:
            connect_args["sslmode"] = sslmode

    return create_engine(
        db_url,
        pool_pre_ping=True,
        connect_args=connect_args,
    )
