import os

import pytest

# filled by tests/test_acceptance.py, one (number, ok, line) per criterion
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_dir(tmp_path_factory):
    """Campaign directory shared by the training criteria.

    Point ``MUTRL_ACCEPTANCE_CACHE`` at a directory to reuse trained agents
    across pytest sessions.
    """
    path = os.environ.get("MUTRL_ACCEPTANCE_CACHE")
    if path:
        os.makedirs(path, exist_ok=True)
        return path
    return str(tmp_path_factory.mktemp("acceptance"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
