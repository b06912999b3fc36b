import math

import numpy as np
import pytest

from torus_entropy.dynamics import Cover, TorusMap

CAT = [[2, 1], [1, 1]]
LOG_LAMBDA = math.log((3 + math.sqrt(5)) / 2)

# A two-symbol roof with no arithmetic coincidences between partial sums.
GENERIC_ROOF = [[0.3014142135623731, 0.2982679491924311],
                [0.4977639320225002, 0.4973542486889354]]


@pytest.fixture
def cat():
    return TorusMap.linear(CAT)


@pytest.fixture
def perturbed():
    return TorusMap.perturbed(CAT, [(1, 1.0, 0.0), (2, 0.0, 0.5)], 0.002)


@pytest.fixture
def strips2():
    return Cover.strips(2, halo=0.05, eta=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


# Acceptance verdicts, printed one line per criterion after the run.
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, title, checks, seconds):
        failed = [name for name, ok in checks if not ok]
        ACCEPTANCE[number] = (title, not failed, failed, seconds)
        line = f"criterion {number} {'PASS' if not failed else 'FAIL'}: {title} ({seconds:.1f} s)"
        print(line)
        assert not failed, f"{line}; failed checks: {failed}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, failed, seconds = ACCEPTANCE[number]
        terminalreporter.write_line(f"{number}. {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.1f} s)")
        for name in failed:
            terminalreporter.write_line(f"     failed: {name}")
