from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import strategies as st

from planroute.equilibrium import Partition

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
FIXTURES = Path(__file__).resolve().parent / "fixtures"

_criteria_lines = []


def partition_from_weights(weights):
    total = sum(weights)
    return Partition(tuple(Fraction(w, total) for w in weights))


@st.composite
def partitions(draw, min_size=1, max_size=20, max_weight=100):
    weights = draw(st.lists(st.integers(1, max_weight), min_size=min_size, max_size=max_size))
    return partition_from_weights(weights)


@pytest.fixture
def criterion():
    """Record a one-line pass/fail verdict for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(line)
        _criteria_lines.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criteria_lines:
            terminalreporter.write_line(line)
