import sys
import time
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(FIXTURES))

from roadbench.scenario import load_scenario  # noqa: E402


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return FIXTURES / "corpus"


@pytest.fixture(scope="session")
def urban_path() -> Path:
    return FIXTURES / "urban_crossing.rbs"


@pytest.fixture(scope="session")
def corpus_scenario():
    def get(name: str):
        return load_scenario(FIXTURES / "corpus" / f"{name}.rbs")
    return get



@pytest.fixture(scope="session")
def corpus_suite():
    """Single-worker run of the whole fixture corpus, shared by every test that needs it."""
    from roadbench.harness import run_suite

    start = time.perf_counter()
    report = run_suite(FIXTURES / "corpus", workers=1, seed=0)
    report.elapsed_s = time.perf_counter() - start
    return report


@pytest.fixture(scope="session")
def corpus_run(corpus_suite):
    by_id = {r.scenario_id: r for r in corpus_suite.records}
    return by_id.__getitem__


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
