import json
from importlib import resources

import pytest

from atomcat.model import SystemConfig

ACCEPTANCE_LINES: list[str] = []


def bundled(name: str) -> SystemConfig:
    text = resources.files("atomcat").joinpath("configs", f"{name}.json").read_text()
    return SystemConfig.from_dict(json.loads(text))


@pytest.fixture(scope="session")
def fig2() -> SystemConfig:
    return bundled("fig2")


@pytest.fixture(scope="session")
def fig3() -> SystemConfig:
    return bundled("fig3")


@pytest.fixture
def report_acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
