"""Shared fixtures and the acceptance-criteria report.

Heavy artifacts (meta checkpoints, trained baselines) are produced once
per session and cached on disk under acceptance_artifacts/; every
artifact is a deterministic function of (code, seed), so a cached copy
is bitwise what a fresh run would produce. Delete the directory to force
full retraining.
"""

from pathlib import Path

import pytest

ARTIFACTS_DIR = Path(__file__).resolve().parent.parent / "acceptance_artifacts"

_RESULTS = {}


def record_criterion(name, passed, detail=""):
    _RESULTS[name] = (passed, detail)


@pytest.fixture(scope="session")
def artifacts_dir():
    ARTIFACTS_DIR.mkdir(exist_ok=True)
    return ARTIFACTS_DIR


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(_RESULTS):
        passed, detail = _RESULTS[name]
        status = "PASS" if passed else "FAIL"
        line = f"{name}: {status}"
        if detail:
            line += f"  ({detail})"
        tr.write_line(line)
