import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import criteria

    if criteria.LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(criteria.LINES):
            terminalreporter.write_line(criteria.LINES[number])
