import numpy as np
import pytest

from materio.substrate import crafted_substrate, make_substrate
from materio.sweep import enumerate_configs, run_sweep

# criterion number -> PASS/FAIL line, filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[k])


def dft_oracle(x):
    """Direct O(N^2) discrete Fourier transform magnitudes."""
    x = np.asarray(x, dtype=float)
    n = x.size
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return np.abs(basis @ x)


def square_bits(f, fs, n):
    """Square wave sampled like the simulator: high in the first half period, phase 0 at k=0."""
    k = np.arange(n)
    return (np.mod(k * f, fs) < fs / 2).astype(np.uint8)


@pytest.fixture(scope="session")
def threshold_log():
    """Small seeded sweep of the crafted threshold dish (4 pins, 2 frequencies)."""
    configs = enumerate_configs(4, [500.0, 2500.0], seed=3)
    return run_sweep(crafted_substrate("threshold", 4), configs, seed=3, label="threshold")


@pytest.fixture(scope="session")
def agar_log5():
    configs = enumerate_configs(5, [250.0, 500.0, 1000.0, 2500.0], seed=2)
    return run_sweep(make_substrate("AgarOnly", 5, 2), configs, seed=2, label="AgarOnly")


@pytest.fixture(scope="session")
def physarum_log5():
    configs = enumerate_configs(5, [250.0, 500.0, 1000.0, 2500.0], seed=4)
    return run_sweep(make_substrate("PhysarumAgar", 5, 7), configs, seed=4, label="PhysarumAgar")
