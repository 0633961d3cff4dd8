import math

import pytest
from hypothesis import given, strategies as st

from portqueue.errors import DuplicateLabel, EmptyTopology, IndexOutOfRange, InvalidDegree, NonPositiveRate
from portqueue.model import (
    BerthSpec, ErlangService, PortSpec, SubsystemSpec, SystemTopology, TrafficSpec, flatten, validate_topology,
)

rates = st.floats(min_value=0.01, max_value=100.0)
topologies = st.lists(st.lists(st.lists(rates, min_size=1, max_size=5), min_size=1, max_size=4),
                      min_size=1, max_size=4).map(SystemTopology.from_rates)


def test_minimal_topology_accepted():
    topo = validate_topology(SystemTopology.from_rates([[[1.0]]]))
    assert topo.subsystem_count == 1
    assert topo.total_berths == 1


def test_empty_port_rejected():
    topo = SystemTopology((SubsystemSpec((PortSpec(()),)),))
    with pytest.raises(EmptyTopology) as exc:
        validate_topology(topo)
    assert exc.value.path == "subsystems[0].ports[0].berth_rates"


@pytest.mark.parametrize("topo", [
    SystemTopology(()),
    SystemTopology((SubsystemSpec(()),)),
])
def test_empty_levels_rejected(topo):
    with pytest.raises(EmptyTopology):
        validate_topology(topo)


def test_negative_rate_rejected():
    topo = SystemTopology.from_rates([[[1.0, -0.5]]])
    with pytest.raises(NonPositiveRate) as exc:
        validate_topology(topo)
    assert exc.value.path == "subsystems[0].ports[0].berth_rates[1]"


@pytest.mark.parametrize("bad", [0.0, math.nan, math.inf])
def test_degenerate_rates_rejected(bad):
    with pytest.raises(NonPositiveRate):
        validate_topology(SystemTopology.from_rates([[[bad]]]))


def test_duplicate_labels():
    dup_ports = SystemTopology((SubsystemSpec((PortSpec.from_rates([1], "a"), PortSpec.from_rates([1], "a"))),))
    with pytest.raises(DuplicateLabel):
        validate_topology(dup_ports)
    dup_subs = SystemTopology((SubsystemSpec((PortSpec.from_rates([1]),), "x"),
                               SubsystemSpec((PortSpec.from_rates([1]),), "x")))
    with pytest.raises(DuplicateLabel):
        validate_topology(dup_subs)
    # same port label in different subsystems is fine
    ok = SystemTopology((SubsystemSpec((PortSpec.from_rates([1], "a"),)),
                         SubsystemSpec((PortSpec.from_rates([1], "a"),))))
    validate_topology(ok)


def test_auto_labels():
    topo = SystemTopology.from_rates([[[1.0], [1.0]], [[1.0]]])
    assert [topo.port_label(i, j) for i, j, _ in flatten(topo)] == ["s1.p1", "s1.p2", "s2.p1"]
    assert topo.subsystem_label(2) == "s2"


def test_flatten_order():
    assert [(i, j) for i, j, _ in flatten(SystemTopology.from_rates([[[1], [2]]]))] == [(1, 1), (1, 2)]
    assert [(i, j) for i, j, _ in flatten(SystemTopology.from_rates([[[1]], [[2]]]))] == [(1, 1), (2, 1)]


def test_port_index_checks():
    topo = SystemTopology.from_rates([[[1.0]]])
    with pytest.raises(IndexOutOfRange):
        topo.port(1, 2)
    with pytest.raises(IndexOutOfRange):
        topo.port(0, 1)


@given(topologies)
def test_flatten_is_deterministic_bijection(topo):
    validate_topology(topo)
    flat = flatten(topo)
    assert flat == flatten(topo)
    assert len(flat) == sum(topo.port_counts)
    assert len({(i, j) for i, j, _ in flat}) == len(flat)
    assert all(topo.port(i, j) is p for i, j, p in flat)
    assert topo.total_berths == sum(p.size for _, _, p in flat)


def test_traffic_validation():
    with pytest.raises(NonPositiveRate):
        TrafficSpec(0.0, 1)
    with pytest.raises(InvalidDegree):
        TrafficSpec(1.0, 0)
    with pytest.raises(InvalidDegree):
        TrafficSpec(1.0, 1.5)


def test_erlang_service_moments():
    assert ErlangService(2.0, 1).variation_coefficient == 1.0
    assert ErlangService(2.0, 4).variation_coefficient == 0.5
    e = ErlangService(3.0, 4)
    assert e.variance == pytest.approx(9.0 / 4)
    # Var = E[G^2] - E[G]^2
    assert e.second_moment - e.mean_service_time ** 2 == pytest.approx(e.variance)
    cs = [ErlangService(1.0, n).variation_coefficient for n in range(1, 20)]
    assert all(a > b for a, b in zip(cs, cs[1:]))


def test_types_are_immutable():
    b = BerthSpec(1.0)
    with pytest.raises(AttributeError):
        b.service_rate = 2.0
