import numpy as np
import pytest

from noisepu.dataset import make_synthetic_blobs, split_clean_noisy

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_partition():
    ds = make_synthetic_blobs(3, 100, 4, 6.0, seed=3)
    return split_clean_noisy(ds, 15, seed=3)
