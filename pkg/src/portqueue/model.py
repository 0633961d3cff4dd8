"""Domain types for the seaport hierarchy: subsystems contain ports, ports contain berths.

All containers are frozen dataclasses holding tuples, so a validated
topology can be shared freely between the analytic and simulation code.
Indices handed out by :func:`flatten` are 1-based, matching the usual
``(i, j, k)`` subsystem/port/berth notation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

from .errors import (
    DuplicateLabel,
    EmptyTopology,
    IndexOutOfRange,
    InvalidDegree,
    NonPositiveRate,
    ValidationError,
)


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


@dataclass(frozen=True)
class BerthSpec:
    service_rate: float  # ships per unit time


@dataclass(frozen=True)
class PortSpec:
    berths: tuple[BerthSpec, ...]
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "berths", tuple(self.berths))

    @classmethod
    def from_rates(cls, rates: Iterable[float], label: str | None = None) -> "PortSpec":
        return cls(tuple(BerthSpec(float(u)) for u in rates), label)

    @property
    def size(self) -> int:
        """Number of berths, S."""
        return len(self.berths)

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(b.service_rate for b in self.berths)

    @property
    def capacity(self) -> float:
        """Aggregate service rate of the port (sum over its berths)."""
        return math.fsum(self.rates)

    @property
    def homogeneous(self) -> bool:
        return len(set(self.rates)) <= 1


@dataclass(frozen=True)
class SubsystemSpec:
    ports: tuple[PortSpec, ...]
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "ports", tuple(self.ports))

    @property
    def berth_count(self) -> int:
        return sum(p.size for p in self.ports)


@dataclass(frozen=True)
class SystemTopology:
    subsystems: tuple[SubsystemSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))

    @classmethod
    def from_rates(cls, rates: Sequence[Sequence[Sequence[float]]]) -> "SystemTopology":
        """Build an unlabelled topology from nested ``[subsystem][port][berth]`` rates."""
        return cls(tuple(SubsystemSpec(tuple(PortSpec.from_rates(p) for p in sub)) for sub in rates))

    @cached_property
    def subsystem_count(self) -> int:
        return len(self.subsystems)

    @cached_property
    def port_counts(self) -> tuple[int, ...]:
        return tuple(len(s.ports) for s in self.subsystems)

    @cached_property
    def berth_counts(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(p.size for p in s.ports) for s in self.subsystems)

    @cached_property
    def total_berths(self) -> int:
        return sum(sum(row) for row in self.berth_counts)

    @cached_property
    def total_capacity(self) -> float:
        return math.fsum(u for s in self.subsystems for p in s.ports for u in p.rates)

    def subsystem(self, i: int) -> SubsystemSpec:
        if not 1 <= i <= len(self.subsystems):
            raise IndexOutOfRange(f"subsystem index {i} not in 1..{len(self.subsystems)}")
        return self.subsystems[i - 1]

    def port(self, i: int, j: int) -> PortSpec:
        sub = self.subsystem(i)
        if not 1 <= j <= len(sub.ports):
            raise IndexOutOfRange(f"port index {j} not in 1..{len(sub.ports)} for subsystem {i}")
        return sub.ports[j - 1]

    def subsystem_label(self, i: int) -> str:
        return self.subsystem(i).label or f"s{i}"

    def port_label(self, i: int, j: int) -> str:
        return self.port(i, j).label or f"s{i}.p{j}"


@dataclass(frozen=True)
class TrafficSpec:
    arrival_rate: float
    erlang_degree: int = 1

    def __post_init__(self):
        if not _is_real(self.arrival_rate) or not math.isfinite(self.arrival_rate) or self.arrival_rate <= 0:
            raise NonPositiveRate(f"arrival rate must be a positive real, got {self.arrival_rate!r}",
                                  "traffic.arrival_rate")
        if isinstance(self.erlang_degree, bool) or not isinstance(self.erlang_degree, int) or self.erlang_degree < 1:
            raise InvalidDegree(f"Erlang degree must be an integer >= 1, got {self.erlang_degree!r}",
                                "traffic.erlang_degree")

    @property
    def service(self) -> "ErlangService":
        """Unit-mean Erlang law of this traffic (rescale per berth)."""
        return ErlangService(1.0, self.erlang_degree)


@dataclass(frozen=True)
class ErlangService:
    """Erlang service-time law with a given mean and degree.

    The degree fixes the shape only: the coefficient of variation is
    ``1/sqrt(degree)`` whatever the mean.
    """

    mean_service_time: float
    degree: int = 1
    variation_coefficient: float = field(init=False)
    variance: float = field(init=False)

    def __post_init__(self):
        if not _is_real(self.mean_service_time) or not self.mean_service_time > 0:
            raise NonPositiveRate(f"mean service time must be positive, got {self.mean_service_time!r}")
        if isinstance(self.degree, bool) or not isinstance(self.degree, int) or self.degree < 1:
            raise InvalidDegree(f"Erlang degree must be an integer >= 1, got {self.degree!r}")
        object.__setattr__(self, "variation_coefficient", 1.0 / math.sqrt(self.degree))
        object.__setattr__(self, "variance", self.mean_service_time ** 2 / self.degree)

    @property
    def second_moment(self) -> float:
        """E[G^2] = Var[G] + E[G]^2."""
        return self.variance + self.mean_service_time ** 2


class PortRef(NamedTuple):
    i: int
    j: int
    port: PortSpec


def validate_topology(topology: SystemTopology) -> SystemTopology:
    """Check every structural invariant and return the same topology object.

    Raises
    ------
    EmptyTopology
        No subsystems, a subsystem without ports, or a port without berths.
    NonPositiveRate
        A berth service rate that is not a finite positive number.
    DuplicateLabel
        Two subsystems, or two ports of one subsystem, share a label.
    """
    if not isinstance(topology, SystemTopology):
        raise ValidationError(f"expected SystemTopology, got {type(topology).__name__}")
    if not topology.subsystems:
        raise EmptyTopology("topology has no subsystems", "subsystems")

    seen_sub: set[str] = set()
    for a, sub in enumerate(topology.subsystems):
        sub_path = f"subsystems[{a}]"
        if not sub.ports:
            raise EmptyTopology("subsystem has no ports", f"{sub_path}.ports")
        sub_label = sub.label or f"s{a + 1}"
        if sub_label in seen_sub:
            raise DuplicateLabel(f"duplicate subsystem label {sub_label!r}", f"{sub_path}.label")
        seen_sub.add(sub_label)

        seen_port: set[str] = set()
        for b, port in enumerate(sub.ports):
            port_path = f"{sub_path}.ports[{b}]"
            if not port.berths:
                raise EmptyTopology("port has no berths", f"{port_path}.berth_rates")
            port_label = port.label or f"s{a + 1}.p{b + 1}"
            if port_label in seen_port:
                raise DuplicateLabel(f"duplicate port label {port_label!r}", f"{port_path}.label")
            seen_port.add(port_label)
            for k, berth in enumerate(port.berths):
                u = berth.service_rate
                if not _is_real(u) or not math.isfinite(u) or u <= 0:
                    raise NonPositiveRate(f"berth service rate must be positive, got {u!r}",
                                          f"{port_path}.berth_rates[{k}]")

    # warm the aggregate caches so downstream readers never race to fill them
    topology.total_berths, topology.total_capacity, topology.port_counts  # noqa: B018
    return topology


def flatten(topology: SystemTopology) -> list[PortRef]:
    """All ports as ``(i, j, port)`` triples in declaration order, 1-based."""
    return [PortRef(i, j, port)
            for i, sub in enumerate(topology.subsystems, start=1)
            for j, port in enumerate(sub.ports, start=1)]
