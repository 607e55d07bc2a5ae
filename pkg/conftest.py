# conftest.py
import pytest


@pytest.fixture(autouse=True)
def _isolated_env(tmp_path, monkeypatch):
    # keep logs out of the checkout and ignore a developer's .env overrides
    monkeypatch.setenv("LANEPATCH_LOG_PATH", str(tmp_path / "logs" / "lanepatch.jsonl"))
    monkeypatch.setenv("LANEPATCH_LOG_LEVEL", "debug")
    monkeypatch.setenv("LANEPATCH_THREADS", "1")
