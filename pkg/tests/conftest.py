import numpy as np
import pytest

from online_alloc import WorstCaseSpec, build_worst_case, random_linear_instance

_CRITERIA = []


def record_criterion(label: str, passed: bool, detail: str) -> str:
    line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
    _CRITERIA.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_worst_case():
    return build_worst_case(WorstCaseSpec(2, 20, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def random_instances():
    return [random_linear_instance(30, 3, 2, 0.6, seed) for seed in range(4)]
