import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from apnea_monitor.cli import simulated_chunks  # noqa: E402
from apnea_monitor.config import MonitorConfig  # noqa: E402
from apnea_monitor.pipeline import Pipeline  # noqa: E402
from apnea_monitor.store import Session, SessionWriter  # noqa: E402

SEED = 7
SIX_HOURS = 6 * 3600


def record_session(path, profile, duration_s, seed=SEED, config=None, chunks=None):
    """Simulate inline into a finalized session; returns (Session, result, seconds)."""
    config = config or MonitorConfig()
    writer = SessionWriter.create(path, config, profile)
    pipe = Pipeline(config, writer)
    t0 = time.perf_counter()
    for chunk in chunks if chunks is not None else simulated_chunks(profile, duration_s, seed, config):
        pipe.feed(chunk)
    result = pipe.finish()
    elapsed = time.perf_counter() - t0
    writer.close()
    return Session(path), result, elapsed


class SixHourSessions:
    """Lazily recorded six-hour fixture sessions, shared across the run."""

    def __init__(self, root: Path) -> None:
        self.root = root
        self._cache = {}

    def __getitem__(self, name):
        if name not in self._cache:
            self._cache[name] = record_session(self.root / name, name, SIX_HOURS)
        return self._cache[name]


@pytest.fixture(scope="session")
def six_hour(tmp_path_factory):
    return SixHourSessions(tmp_path_factory.mktemp("six_hour"))


@pytest.fixture(scope="session")
def short_session(tmp_path_factory):
    """A 20 minute person-4 session (snoring, desaturations, R-wave anomalies)."""
    path = tmp_path_factory.mktemp("short") / "person-4"
    return record_session(path, "person-4", 1200)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} {detail}")
