"""Closed-form steady-state metrics for the seaport hierarchy.

Each port is treated as a multi-server queue fed by a Poisson stream.
Its exponential-service mean delay is scaled by ``(1 + c^2) / 2`` to
approximate Erlang service (Lee and Longton). Little's law then gives
the queue length. Per-port results are summed into system totals.

Two routing interpretations are supported:

``"eq3"`` (default)
    ``r_ij = lam * S_ij / sum_j S_ij``, so every subsystem receives the
    full arrival rate ``lam``.
``"split"``
    ``r_ij = p_i * lam * S_ij / sum_j S_ij``, so the system stream is split
    across subsystems first, with weights proportional to their berth
    counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidDegree, NumericOverflow, UnstablePort, UnstableSystem, ValidationError
from .model import PortSpec, SystemTopology, TrafficSpec, flatten

ROUTING_MODES = ("eq3", "split")

# rescale the running series before it can overflow a double
_RESCALE = 1e280
_LOG_RESCALE = math.log(_RESCALE)


@dataclass(frozen=True)
class PortMetrics:
    i: int
    j: int
    label: str
    berths: int
    capacity: float
    arrival_rate: float
    utilization: float
    base_wait: float
    wait: float
    queue_length: float
    population: float
    homogeneous: bool = True


@dataclass(frozen=True)
class SystemMetrics:
    utilization: float
    split_probabilities: tuple[float, ...]
    total_wait: float
    total_queue: float
    total_population: float
    per_port: tuple[PortMetrics, ...]
    # arrival-weighted mean wait; a convenience figure, not the summed total
    weighted_mean_wait: float
    routing: str = "eq3"
    erlang_degree: int = 1
    arrival_rate: float = 0.0
    notes: tuple[str, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class StabilityReport:
    system_utilization: float
    port_utilization: tuple[tuple[int, int, float], ...]

    @property
    def system_stable(self) -> bool:
        return self.system_utilization < 1.0

    @property
    def unstable_ports(self) -> list[tuple[int, int, float]]:
        return [(i, j, rho) for i, j, rho in self.port_utilization if not rho < 1.0]

    @property
    def stable(self) -> bool:
        return self.system_stable and not self.unstable_ports

    def violations(self) -> list[str]:
        out = []
        if not self.system_stable:
            out.append(f"system utilization rho={self.system_utilization:.17g} >= 1")
        for i, j, rho in self.unstable_ports:
            out.append(f"port ({i},{j}) utilization rho_ij={rho:.17g} >= 1")
        return out

    def raise_if_unstable(self) -> None:
        if not self.system_stable:
            raise UnstableSystem(self.violations()[0], self.system_utilization)
        bad = self.unstable_ports
        if bad:
            i, j, rho = bad[0]
            raise UnstablePort(f"port ({i},{j}) utilization rho_ij={rho:.17g} >= 1", rho, (i, j))


def _check_routing(routing: str) -> None:
    if routing not in ROUTING_MODES:
        raise ValidationError(f"routing must be one of {ROUTING_MODES}, got {routing!r}", "routing")


def split_probabilities(topology: SystemTopology) -> list[float]:
    total = topology.total_berths
    return [sub.berth_count / total for sub in topology.subsystems]


def system_utilization(topology: SystemTopology, traffic: TrafficSpec) -> float:
    return traffic.arrival_rate / topology.total_capacity


def port_arrival_rate(topology: SystemTopology, traffic: TrafficSpec, i: int, j: int,
                      routing: str = "eq3") -> float:
    """Poisson arrival rate r_ij offered to port ``(i, j)``."""
    _check_routing(routing)
    port = topology.port(i, j)
    sub = topology.subsystem(i)
    rate = traffic.arrival_rate * port.size / sub.berth_count
    if routing == "split":
        rate *= sub.berth_count / topology.total_berths
    return rate


def port_utilization(topology: SystemTopology, traffic: TrafficSpec, i: int, j: int,
                     routing: str = "eq3") -> float:
    return port_arrival_rate(topology, traffic, i, j, routing) / topology.port(i, j).capacity


def variation_coefficient(degree: int) -> float:
    """Coefficient of variation of an Erlang law of the given degree."""
    if isinstance(degree, bool) or not isinstance(degree, int) or degree < 1:
        raise InvalidDegree(f"Erlang degree must be an integer >= 1, got {degree!r}")
    return 1.0 / math.sqrt(degree)


def _log_partial_exp_series(a: float, terms: int) -> float:
    """log of sum_{m=0}^{terms-1} a^m / m!, accumulated with periodic rescaling."""
    term = 1.0
    total = 1.0
    shift = 0.0
    for m in range(1, terms):
        term *= a / m
        total += term
        if total > _RESCALE:
            term /= _RESCALE
            total /= _RESCALE
            shift += _LOG_RESCALE
    return math.log(total) + shift


def base_wait(port: PortSpec, r_ij: float, rho_ij: float) -> float:
    """Mean queueing delay of the port under exponential service.

    The closed form is::

        (S rho)^S / (S! U (1 - rho)^2) * [sum_{m<S} (S rho)^m / m! + (S rho)^S / (S! (1 - rho))]^-1

    where ``U`` is the port's aggregate service rate. ``(S rho)^S / S!`` is
    evaluated in log space (via ``lgamma``), so ``S`` in the tens of
    thousands does not overflow.

    ``r_ij`` must equal ``rho_ij * U``. It is checked only as a guard
    against mixing values from different ports.
    """
    if not rho_ij < 1.0:
        raise UnstablePort(f"port utilization rho_ij={rho_ij!r} >= 1; no steady state", rho_ij)
    if rho_ij < 0.0:
        raise ValidationError(f"port utilization must be non-negative, got {rho_ij!r}")
    capacity = port.capacity
    if not math.isclose(r_ij, rho_ij * capacity, rel_tol=1e-9, abs_tol=1e-300):
        raise ValidationError(f"r_ij={r_ij!r} inconsistent with rho_ij*capacity={rho_ij * capacity!r}")
    if rho_ij == 0.0:
        return 0.0

    s = port.size
    a = s * rho_ij
    log_tail = s * math.log(a) - math.lgamma(s + 1)  # log (S rho)^S / S!
    log_head = _log_partial_exp_series(a, s)
    log_bracket = _logaddexp(log_head, log_tail - math.log1p(-rho_ij))
    log_value = log_tail - log_bracket - math.log(capacity) - 2.0 * math.log1p(-rho_ij)
    try:
        value = math.exp(log_value)
    except OverflowError:
        raise NumericOverflow(f"mean delay overflows for S={s}, rho={rho_ij!r}") from None
    if not math.isfinite(value):
        raise NumericOverflow(f"mean delay is not finite for S={s}, rho={rho_ij!r}")
    return value


def _logaddexp(x: float, y: float) -> float:
    hi, lo = (x, y) if x >= y else (y, x)
    return hi + math.log1p(math.exp(lo - hi))


def erlang_correction(c: float) -> float:
    return (1.0 + c * c) / 2.0


def port_wait(ew_star: float, c: float) -> float:
    return erlang_correction(c) * ew_star


def port_queue_length(r_ij: float, ew: float) -> float:
    return r_ij * ew


def port_population(en: float, berths: int, rho_ij: float) -> float:
    return en + berths * rho_ij


def check_stability(topology: SystemTopology, traffic: TrafficSpec, routing: str = "eq3") -> StabilityReport:
    ports = tuple((i, j, port_utilization(topology, traffic, i, j, routing)) for i, j, _ in flatten(topology))
    return StabilityReport(system_utilization(topology, traffic), ports)


def port_metrics(topology: SystemTopology, traffic: TrafficSpec, i: int, j: int,
                 routing: str = "eq3") -> PortMetrics:
    port = topology.port(i, j)
    r = port_arrival_rate(topology, traffic, i, j, routing)
    rho = r / port.capacity
    if not rho < 1.0:
        raise UnstablePort(f"port ({i},{j}) utilization rho_ij={rho:.17g} >= 1", rho, (i, j))
    ew_star = base_wait(port, r, rho)
    ew = port_wait(ew_star, variation_coefficient(traffic.erlang_degree))
    en = port_queue_length(r, ew)
    return PortMetrics(
        i=i, j=j, label=topology.port_label(i, j), berths=port.size, capacity=port.capacity,
        arrival_rate=r, utilization=rho, base_wait=ew_star, wait=ew, queue_length=en,
        population=port_population(en, port.size, rho), homogeneous=port.homogeneous,
    )


HETEROGENEOUS_NOTE = ("port {label} ({i},{j}) has unequal berth rates; the analytic figures treat it as "
                      "{S} identical berths sharing the aggregate rate {cap:.6g}, a homogeneous-equivalent "
                      "approximation")


def system_totals(topology: SystemTopology, traffic: TrafficSpec, routing: str = "eq3") -> SystemMetrics:
    """Evaluate every port and sum into system totals.

    Raises :class:`UnstableSystem` or :class:`UnstablePort` when any
    utilization reaches 1.
    """
    _check_routing(routing)
    check_stability(topology, traffic, routing).raise_if_unstable()
    ports = tuple(port_metrics(topology, traffic, i, j, routing) for i, j, _ in flatten(topology))
    total_rate = math.fsum(m.arrival_rate for m in ports)
    notes = tuple(HETEROGENEOUS_NOTE.format(label=m.label, i=m.i, j=m.j, S=m.berths, cap=m.capacity)
                  for m in ports if not m.homogeneous)
    return SystemMetrics(
        utilization=system_utilization(topology, traffic),
        split_probabilities=tuple(split_probabilities(topology)),
        total_wait=math.fsum(m.wait for m in ports),
        total_queue=math.fsum(m.queue_length for m in ports),
        total_population=math.fsum(m.queue_length + m.berths * m.utilization for m in ports),
        per_port=ports,
        weighted_mean_wait=math.fsum(m.arrival_rate * m.wait for m in ports) / total_rate,
        routing=routing,
        erlang_degree=traffic.erlang_degree,
        arrival_rate=traffic.arrival_rate,
        notes=notes,
    )
