import logging
from os import getenv

from dotenv import load_dotenv

load_dotenv(override=True)

logger = logging.getLogger(__name__)


class Config:
    """Toolkit settings read from the environment (or a .env file)"""

    CODE_VERSION = "0.1.0"
    SCHEMA_VERSION = 1

    # Logging
    LOG_LEVEL = getenv("SHEQ_LOG_LEVEL", "INFO")
    LOG_DIR: str | None = getenv("SHEQ_LOG_DIR", "logs") or None

    # Monte Carlo
    WORKERS = int(getenv("SHEQ_WORKERS", "1"))
    CHUNK_SIZE = int(getenv("SHEQ_CHUNK_SIZE", "256"))  # replicates per task
    DEFAULT_SEED = int(getenv("SHEQ_DEFAULT_SEED", "20240917"))
    BUDGET_SECONDS = float(getenv("SHEQ_BUDGET_SECONDS", "600"))

    # Exact simulation is O(N^3) to factor, so N is capped unless overridden
    MAX_N = int(getenv("SHEQ_MAX_N", "8192"))

    # Output
    OUTPUT_DIR = getenv("SHEQ_OUTPUT_DIR", "reports")
    SNAPSHOT_EVERY = int(getenv("SHEQ_SNAPSHOT_EVERY", "0"))  # 0 disables field dumps

    @classmethod
    def validate(cls):
        """Validate configuration ranges"""
        if cls.WORKERS < 1:
            raise ValueError("SHEQ_WORKERS must be at least 1")
        if cls.CHUNK_SIZE < 1:
            raise ValueError("SHEQ_CHUNK_SIZE must be at least 1")
        if cls.MAX_N < 1:
            raise ValueError("SHEQ_MAX_N must be at least 1")
        if cls.SNAPSHOT_EVERY < 0:
            raise ValueError("SHEQ_SNAPSHOT_EVERY must be non-negative")

        logger.debug(
            "Configuration validated",
            extra={
                "workers": cls.WORKERS,
                "chunk_size": cls.CHUNK_SIZE,
                "max_n": cls.MAX_N,
                "default_seed": cls.DEFAULT_SEED,
            },
        )
        return True
