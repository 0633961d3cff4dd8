import pytest
import yaml
from hypothesis import given, settings, strategies as st

from portqueue.config import DEFAULT_SHIP_COUNT, parse_config
from portqueue.errors import ConfigSyntaxError, NonPositiveRate, SchemaError, ValidationError

MINIMAL = """
# M/M/1
traffic: {arrival_rate: 0.5, erlang_degree: 1}
subsystems:
  - ports:
      - berth_rates: [1.0]
"""

FULL = """
traffic:
  arrival_rate: 1.5
  erlang_degree: 4
routing: split
subsystems:
  - label: north
    ports:
      - label: quay-a
        berth_rates: [1.0, 2]
      - berth_rates: [0.5]
  - ports:
      - label: "b, east"
        berth_rates: [3.0]
simulation:
  horizon: 500.0
  warmup_fraction: 0.2
  replications: 3
  batch_count: 10
  seed: 123
  confidence_intervals: true
"""


def test_minimal():
    cfg = parse_config(MINIMAL)
    assert cfg.traffic.arrival_rate == 0.5 and cfg.traffic.erlang_degree == 1
    assert cfg.topology.total_berths == 1
    assert cfg.simulation is None
    assert cfg.routing == "eq3"
    assert cfg.digest.startswith("sha256:")


def test_full_document():
    cfg = parse_config(FULL)
    assert cfg.routing == "split"
    assert cfg.topology.port_label(1, 1) == "quay-a"
    assert cfg.topology.port_label(1, 2) == "s1.p2"
    assert cfg.topology.subsystem_label(1) == "north"
    assert cfg.topology.port(1, 1).rates == (1.0, 2.0)
    sim = cfg.simulation
    assert (sim.horizon, sim.ship_count, sim.warmup_fraction, sim.replications, sim.batch_count, sim.seed) == \
        (500.0, None, 0.2, 3, 10, 123)
    assert sim.routing == "split"


def test_json_is_accepted():
    cfg = parse_config('{"traffic": {"arrival_rate": 2}, "subsystems": [{"ports": [{"berth_rates": [3]}]}]}')
    assert cfg.traffic.arrival_rate == 2.0


def test_simulation_defaults():
    cfg = parse_config(MINIMAL + "simulation: {seed: 4}\n")
    assert cfg.simulation.ship_count == DEFAULT_SHIP_COUNT
    assert cfg.simulation.horizon is None


def test_missing_arrival_rate():
    with pytest.raises(SchemaError) as exc:
        parse_config("traffic: {erlang_degree: 1}\nsubsystems: [{ports: [{berth_rates: [1.0]}]}]\n")
    assert exc.value.path == "traffic.arrival_rate"


def test_negative_berth_rate_path():
    with pytest.raises(NonPositiveRate) as exc:
        parse_config("traffic: {arrival_rate: 0.5}\nsubsystems: [{ports: [{berth_rates: [1.0, -2.0]}]}]\n")
    assert isinstance(exc.value, ValidationError)
    assert exc.value.path == "subsystems[0].ports[0].berth_rates[1]"


@pytest.mark.parametrize("text, path", [
    ("traffic: {arrival_rate: yes}\nsubsystems: [{ports: [{berth_rates: [1]}]}]", "traffic.arrival_rate"),
    ("traffic: {arrival_rate: 1, erlang_degree: 2.5}\nsubsystems: [{ports: [{berth_rates: [1]}]}]",
     "traffic.erlang_degree"),
    ("traffic: {arrival_rate: 1}\nsubsystems: {}", "subsystems"),
    ("traffic: {arrival_rate: 1}\nsubsystems: [{ports: [{berth_rates: [fast]}]}]",
     "subsystems[0].ports[0].berth_rates[0]"),
    ("traffic: {arrival_rate: 1}\nsubsystems: [{ports: [{berths: [1]}]}]", "subsystems[0].ports[0].berths"),
    ("traffic: {arrival_rate: 1}\nrouting: both\nsubsystems: [{ports: [{berth_rates: [1]}]}]", "routing"),
    ("[1, 2]", "<root>"),
])
def test_schema_errors(text, path):
    with pytest.raises(SchemaError) as exc:
        parse_config(text)
    assert exc.value.path == path


def test_empty_subsystem_list_is_validation_error():
    with pytest.raises(ValidationError):
        parse_config("traffic: {arrival_rate: 1}\nsubsystems: []")


def test_syntax_error_location():
    with pytest.raises(ConfigSyntaxError) as exc:
        parse_config("traffic: {arrival_rate: 1\nsubsystems: [\n")
    assert exc.value.line is not None and exc.value.column is not None


def test_unknown_field_opt_out():
    text = MINIMAL + "owner: harbour master\n"
    with pytest.raises(SchemaError) as exc:
        parse_config(text)
    assert exc.value.path == "owner"
    assert parse_config(text, strict=False).topology.total_berths == 1


def _paths(node, prefix=()):
    if isinstance(node, dict):
        for key, value in node.items():
            yield prefix + (key,)
            yield from _paths(value, prefix + (key,))
    elif isinstance(node, list):
        for n, value in enumerate(node):
            yield from _paths(value, prefix + (n,))


def _rename(node, path, new):
    node = yaml.safe_load(yaml.safe_dump(node))
    parent = node
    for step in path[:-1]:
        parent = parent[step]
    parent[new] = parent.pop(path[-1])
    return node


FULL_DOC = yaml.safe_load(FULL)
FIELD_PATHS = [p for p in _paths(FULL_DOC) if isinstance(p[-1], str)]


@settings(max_examples=150)
@given(st.sampled_from(FIELD_PATHS), st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=3))
def test_renamed_field_is_rejected(path, suffix):
    mutated = _rename(FULL_DOC, path, path[-1] + suffix)
    with pytest.raises(SchemaError):
        parse_config(yaml.safe_dump(mutated))
