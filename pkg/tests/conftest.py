import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from portqueue.model import SystemTopology, TrafficSpec  # noqa: E402


@pytest.fixture
def mm1():
    return SystemTopology.from_rates([[[1.0]]]), TrafficSpec(0.5, 1)


@pytest.fixture
def two_by_two():
    # subsystem 1: ports with 2 and 3 berths; subsystem 2: one port with 1 berth
    topo = SystemTopology.from_rates([[[1.0, 1.0], [0.5, 0.7, 0.8]], [[2.0]]])
    return topo, TrafficSpec(0.9, 2)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
