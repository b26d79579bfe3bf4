import logging

import numpy as np
import pytest

from src.core.config import Config


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Logs and snapshots go to the test's tmp dir; root handlers are restored afterwards."""
    monkeypatch.setattr(Config, "LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setattr(Config, "OUTPUT_DIR", str(tmp_path / "reports"))
    monkeypatch.setattr(Config, "WORKERS", 1)
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
