from pathlib import Path
import sys

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from sofic_dim.parallel import THREADS_ENV  # noqa: E402


@pytest.fixture(autouse=True)
def _bounded_threads(monkeypatch) -> None:
    monkeypatch.setenv(THREADS_ENV, "2")
