import json
from pathlib import Path

import pytest

from mathclean.corpus import Corpus, Record, Source
from mathclean.synth import load_bundled

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def cases() -> dict:
    """Worked noisy/clean record pairs (question, answer dicts keyed by case name)."""
    return json.loads((FIXTURES / "worked_cases.json").read_text(encoding="utf-8"))


def as_record(obj: dict, rid: str, source: Source = Source.SEED) -> Record:
    return Record(rid, obj["question"], obj["answer"], source)


@pytest.fixture(scope="session")
def clean_1000() -> Corpus:
    return load_bundled("clean_1000.jsonl")


@pytest.fixture(scope="session")
def sample_seed() -> Corpus:
    return load_bundled("sample_seed.jsonl")


@pytest.fixture(scope="session")
def sample_crawl() -> Corpus:
    return load_bundled("sample_crawl.jsonl", Source.CRAWL)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    import mathclean

    return Path(mathclean.__file__).parent / "data"


# one PASS/FAIL line per acceptance criterion, printed after the run
_criteria: dict[int, tuple[str, str]] = {}
_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}


def pytest_runtest_logreport(report):
    marker = getattr(report, "_acceptance", None)
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker
    status = "FAIL" if report.failed else "SKIP" if report.skipped else "PASS"
    prev = _criteria.get(number, (title, "PASS"))[1]
    _criteria[number] = (title, max(prev, status, key=_RANK.get))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("acceptance")
    if m is not None:
        outcome.get_result()._acceptance = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"{status} criterion {number}: {title}")
