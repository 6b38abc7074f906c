import contextlib
import time

import numpy as np
import pytest

from s2wat.config import preset
from s2wat.model import S2WAT

CRITERIA_LINES = []


@pytest.fixture
def criterion():
    """Context manager that records a PASS/FAIL line for an acceptance criterion."""

    @contextlib.contextmanager
    def record(number, title):
        start = time.perf_counter()
        notes = []
        try:
            yield notes
        except BaseException:
            line = f"criterion {number:>2} FAIL  {title}  ({time.perf_counter() - start:.1f}s) {' '.join(notes)}"
            CRITERIA_LINES.append(line)
            print(line)
            raise
        line = f"criterion {number:>2} PASS  {title}  ({time.perf_counter() - start:.1f}s) {' '.join(notes)}"
        CRITERIA_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def desk_model():
    return S2WAT.initialize(preset("desk").model_config(), seed=0)
