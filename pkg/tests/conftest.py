import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import DETAILS, RESULTS  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
    terminalreporter.section("acceptance check details")
    for line in RESULTS:
        terminalreporter.write_line(line.split("  ")[0])
        for detail in DETAILS.get(line, ()):
            terminalreporter.write_line(detail)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240611)
