import re

import pytest

from mrc.corpus import build_foo_corpus, minuit_corpus

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    n, title = marker.args
    failed = call.excinfo is not None
    if call.when == "setup" and not failed:
        return
    prev = _CRITERIA.get(n)
    status = "FAIL" if failed or (prev and prev[1] == "FAIL") else "PASS"
    _CRITERIA[n] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {title}")


@pytest.fixture
def foo_corpus(tmp_path):
    return build_foo_corpus(tmp_path / "foo")


@pytest.fixture
def minuit(tmp_path):
    return minuit_corpus(tmp_path / "minuit")


def strip_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()
