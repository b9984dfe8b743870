import os
from pathlib import Path

import pytest

from flock.catalog import CatalogStore
from flock.mock import MockProvider
from flock.provider import ProviderRegistry
from flock.runtime import InferenceRuntime, PredictionCache
from flock.session import EngineSession

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = Path(__file__).parent / "corpus"


@pytest.fixture(scope="session")
def registry():
    return ProviderRegistry.load()


@pytest.fixture
def catalog(tmp_path):
    return CatalogStore(tmp_path / "local.json", global_path=tmp_path / "global.json")


@pytest.fixture
def make_runtime(tmp_path, registry):
    """Factory: a runtime over a fresh cache and a configurable mock."""

    def build(mock=None, **mock_kwargs):
        provider = mock or MockProvider(registry, **mock_kwargs)
        cache = PredictionCache(tmp_path / "cache")
        return InferenceRuntime({"mock": provider}, cache), provider

    return build


@pytest.fixture
def make_session(tmp_path, registry):
    """Factory: a full session in a throwaway workspace."""

    counter = {"n": 0}

    def build(mock=None, load_fixtures=(), **mock_kwargs):
        counter["n"] += 1
        ws = tmp_path / f"ws{counter['n']}"
        ws.mkdir()
        provider = mock or MockProvider(registry, **mock_kwargs)
        session = EngineSession(
            workspace=ws,
            mock=provider,
            global_catalog_path=ws / "global-catalog.json",
        )
        for name in load_fixtures:
            session.load_table(FIXTURES / f"{name}.csv")
        return session

    return build


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when == "call" and "test_acceptance" in rep.nodeid:
                lines.append((rep.nodeid.split("::")[-1], outcome == "passed"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, ok in sorted(lines):
            terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}")


@pytest.fixture(autouse=True)
def _no_ambient_cache_dir(monkeypatch):
    monkeypatch.delenv("FLOCK_CACHE_DIR", raising=False)
    monkeypatch.delenv("FLOCK_GLOBAL_CATALOG", raising=False)
