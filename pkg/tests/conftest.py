"""Acceptance reporting: one PASS/FAIL line per criterion in the terminal summary."""
import re

import pytest

CRITERIA = {
    1: "gradient correctness",
    2: "entropy coder round trip and length",
    3: "codec rate sweep",
    4: "bias metric oracle",
    5: "Frechet distance",
    6: "SSIM / PSNR",
    7: "classifier protocol and label grouping",
    8: "rate-bias trend with distortion parity",
    9: "blur ablation",
    10: "end-to-end determinism",
}

_outcomes = {}
_notes = {}


def _criterion(nodeid):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", nodeid)
    return int(m.group(1)) if m else None


def pytest_runtest_logreport(report):
    n = _criterion(report.nodeid)
    if n is None:
        return
    if report.failed:
        _outcomes[n] = "FAIL"
    elif report.when == "call" and report.passed:
        _outcomes.setdefault(n, "PASS")


@pytest.fixture
def note(request):
    """Record a measured value shown next to the criterion's PASS/FAIL line."""
    n = _criterion(request.node.nodeid)

    def add(text):
        _notes.setdefault(n, []).append(text)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in _outcomes:
            continue
        line = f"{_outcomes[n]} criterion {n}: {CRITERIA[n]}"
        if _notes.get(n):
            line += " (" + "; ".join(_notes[n]) + ")"
        terminalreporter.write_line(line)
