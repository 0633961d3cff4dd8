"""Configuration documents.

Configs are YAML (so ``#`` comments are allowed; JSON also parses). The
layout is::

    traffic:
      arrival_rate: 0.5        # ships per unit time
      erlang_degree: 1         # optional, default 1
    routing: eq3               # optional: eq3 | split
    subsystems:
      - label: north           # optional, default s<i>
        ports:
          - label: quay-a      # optional, default s<i>.p<j>
            berth_rates: [1.0, 1.0]
    simulation:                # optional
      ship_count: 100000       # or horizon: <time>, not both
      warmup_fraction: 0.1
      replications: 10
      batch_count: 20
      seed: 42
      confidence_intervals: true

Unknown fields are rejected unless ``strict=False``.
"""

from __future__ import annotations

import hashlib
from typing import Any, NamedTuple

import yaml

from .errors import ConfigSyntaxError, SchemaError
from .model import PortSpec, SubsystemSpec, SystemTopology, TrafficSpec, validate_topology
from .simulator import SimConfig

DEFAULT_SHIP_COUNT = 100_000

_TOP = {"traffic", "subsystems", "simulation", "routing"}
_TRAFFIC = {"arrival_rate", "erlang_degree"}
_SUBSYSTEM = {"label", "ports"}
_PORT = {"label", "berth_rates"}
_SIMULATION = {"horizon", "ship_count", "warmup_fraction", "replications", "batch_count", "seed",
               "confidence_intervals"}


class ParsedConfig(NamedTuple):
    topology: SystemTopology
    traffic: TrafficSpec
    simulation: SimConfig | None
    routing: str
    digest: str


def _join(path: str, key: str | int) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _mapping(node: Any, path: str, allowed: set[str], strict: bool) -> dict:
    if not isinstance(node, dict):
        raise SchemaError(path or "<root>", f"expected a mapping, got {type(node).__name__}")
    if strict:
        for key in node:
            if key not in allowed:
                raise SchemaError(_join(path, str(key)), "unknown field")
    return node


def _require(node: dict, key: str, path: str) -> Any:
    if key not in node:
        raise SchemaError(_join(path, key), "missing required field")
    return node[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected an integer, got {value!r}")
    return value


def _label(node: dict, path: str) -> str | None:
    label = node.get("label")
    if label is not None and not isinstance(label, str):
        raise SchemaError(_join(path, "label"), "expected a string")
    return label


def _list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(path, f"expected a list, got {type(value).__name__}")
    return value


def load_document(text: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
        raise ConfigSyntaxError(exc.problem or str(exc), line, col) from None
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(str(exc), None, None) from None


def parse_config(text: str, strict: bool = True) -> ParsedConfig:
    """Parse and validate a config document.

    Raises :class:`ConfigSyntaxError` for malformed YAML and
    :class:`SchemaError` for missing, mistyped or unknown fields. Model
    invariant violations propagate as :class:`ValidationError`
    subclasses, whose ``path`` uses the same notation as the document.
    """
    doc = load_document(text)
    root = _mapping(doc, "", _TOP, strict)

    traffic_node = _mapping(_require(root, "traffic", ""), "traffic", _TRAFFIC, strict)
    rate = _number(_require(traffic_node, "arrival_rate", "traffic"), "traffic.arrival_rate")
    degree = _integer(traffic_node.get("erlang_degree", 1), "traffic.erlang_degree")
    traffic = TrafficSpec(rate, degree)

    subsystems = []
    subs_node = _list(_require(root, "subsystems", ""), "subsystems")
    for a, sub in enumerate(subs_node):
        sub_path = f"subsystems[{a}]"
        sub = _mapping(sub, sub_path, _SUBSYSTEM, strict)
        ports = []
        for b, port in enumerate(_list(_require(sub, "ports", sub_path), f"{sub_path}.ports")):
            port_path = f"{sub_path}.ports[{b}]"
            port = _mapping(port, port_path, _PORT, strict)
            rates_path = f"{port_path}.berth_rates"
            rates = [_number(u, f"{rates_path}[{k}]")
                     for k, u in enumerate(_list(_require(port, "berth_rates", port_path), rates_path))]
            ports.append(PortSpec.from_rates(rates, _label(port, port_path)))
        subsystems.append(SubsystemSpec(tuple(ports), _label(sub, sub_path)))
    topology = validate_topology(SystemTopology(tuple(subsystems)))

    routing = root.get("routing", "eq3")
    if routing not in ("eq3", "split"):
        raise SchemaError("routing", f"expected 'eq3' or 'split', got {routing!r}")

    simulation = None
    if "simulation" in root:
        simulation = simulation_config(topology, traffic, root["simulation"] or {}, routing, strict)
    return ParsedConfig(topology, traffic, simulation, routing, config_digest(text))


def simulation_config(topology: SystemTopology, traffic: TrafficSpec, node: dict | None = None,
                      routing: str = "eq3", strict: bool = True) -> SimConfig:
    """Build a :class:`SimConfig` from a ``simulation`` block, filling defaults."""
    node = _mapping(node or {}, "simulation", _SIMULATION, strict)
    kw: dict[str, Any] = {}
    if "horizon" in node:
        kw["horizon"] = _number(node["horizon"], "simulation.horizon")
    if "ship_count" in node:
        kw["ship_count"] = _integer(node["ship_count"], "simulation.ship_count")
    if not kw:
        kw["ship_count"] = DEFAULT_SHIP_COUNT
    if "warmup_fraction" in node:
        kw["warmup_fraction"] = _number(node["warmup_fraction"], "simulation.warmup_fraction")
    for key in ("replications", "batch_count", "seed"):
        if key in node:
            kw[key] = _integer(node[key], f"simulation.{key}")
    if "confidence_intervals" in node:
        flag = node["confidence_intervals"]
        if not isinstance(flag, bool):
            raise SchemaError("simulation.confidence_intervals", "expected true or false")
        kw["confidence_intervals"] = flag
    return SimConfig(topology, traffic, routing=routing, **kw)


def config_digest(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()
