import warnings

import pytest

from etpa.cli import cmd_validate
from etpa.validation import two_level_fixture

ACCEPTANCE_LINES: list[str] = []


def record_criterion(label: str, passed: bool, detail: str) -> None:
    """Remember a one-line verdict for the terminal summary and fail loudly if needed."""
    line = f"{'PASS' if passed else 'FAIL'}  criterion {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def level():
    return two_level_fixture()


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


@pytest.fixture(scope="session")
def validate_reports(tmp_path_factory):
    """Two default ``validate`` runs and one with a 1e-14 tolerance, as (exit code, bytes)."""
    root = tmp_path_factory.mktemp("validate")
    out = {}
    for name, tol in (("first", None), ("second", None), ("tight", 1e-14)):
        path = root / f"{name}.json"
        code = cmd_validate(tol=tol, seed=7, output=path)
        out[name] = (code, path.read_bytes())
    return out
