import io
from pathlib import Path

import pytest

from tlsfeat.capture import PcapWriter

DATA = Path(__file__).parent / "data"
CERT_DIR = DATA / "certs"


def pcap_bytes(frames, **kw) -> bytes:
    buf = io.BytesIO()
    w = PcapWriter(buf, **kw)
    for ts, frame in frames:
        w.write(ts, frame)
    return buf.getvalue()


@pytest.fixture
def write_frames(tmp_path):
    """Write ``(ts_ns, frame)`` pairs to a pcap in tmp_path and return its path."""
    counter = iter(range(10**6))

    def _write(frames, name=None, **kw):
        path = tmp_path / (name or f"cap{next(counter)}.pcap")
        path.write_bytes(pcap_bytes(frames, **kw))
        return path

    return _write


# one pass/fail line per acceptance criterion at the end of the run
_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        if n not in _CRITERIA or _CRITERIA[n][1] == "PASS":
            _CRITERIA[n] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")
