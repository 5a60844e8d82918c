import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def _mnist_or_none():
    from compdl.dataio import load_dataset

    try:
        return load_dataset("mnist", "train"), load_dataset("mnist", "test")
    except (OSError, ValueError):
        return None


@pytest.fixture(scope="session")
def mnist():
    data = _mnist_or_none()
    if data is None:
        pytest.skip("MNIST IDX files not found (set COMPDL_DATA_DIR)")
    return data


ACCEPTANCE_LINES = []


def record(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
