import os

import numpy as np
import pytest

from qplr import datakit

# acceptance results, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def record(number: int, status: str, detail: str) -> None:
    ACCEPTANCE[number] = (status, detail)
    print(f"criterion {number}: {status} - {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mnist_dir():
    """Directory holding MNIST IDX files, or None when absent."""
    root = datakit.resolve_data_dir(None)
    if root is None or not root.exists():
        return None
    if datakit.find_idx_pair(root, "mnist", "train") and datakit.find_idx_pair(root, "mnist", "test"):
        return root
    return None


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status} - {detail}")
