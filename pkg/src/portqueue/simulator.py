"""Discrete-event simulation of the seaport system.

Each port has one FIFO waiting line and its own berths. A ship that
finds free berths starts service at one of them, chosen uniformly at
random. Otherwise it joins the line. When a berth is vacated, the head
of the line takes it at once, so no berth idles while ships wait. Service
at berth ``k`` is Erlang(``n``) with mean ``1/u_k``.

Random streams
--------------
Replication ``r`` of an experiment seeded with ``seed`` draws from
``SeedSequence(seed, spawn_key=(r,))``. That sequence is spawned into four
Philox streams, used in this order: interarrival times, routing, service
times, berth choice. Results therefore depend only on ``(seed, r)``, never
on the order in which replications are executed.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import accumulate
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .analytic import ROUTING_MODES, split_probabilities
from .errors import HorizonTooShort, NonDrainedTrace, ValidationError
from .model import SystemTopology, TrafficSpec, flatten, validate_topology

_CHUNK = 4096
_TWO53 = float(2 ** 53)
# above this degree an Erlang draw uses the gamma sampler instead of summing exponentials
_SUM_DEGREE_LIMIT = 4096

ARRIVAL, SERVICE_START, DEPARTURE = "arrival", "service_start", "departure"


@dataclass(frozen=True)
class SimConfig:
    topology: SystemTopology
    traffic: TrafficSpec
    horizon: float | None = None
    ship_count: int | None = None
    warmup_fraction: float = 0.1
    replications: int = 10
    batch_count: int = 20
    seed: int = 0
    routing: str = "eq3"
    confidence_intervals: bool = True

    def __post_init__(self):
        validate_topology(self.topology)
        if (self.horizon is None) == (self.ship_count is None):
            raise ValidationError("exactly one of horizon / ship_count must be set", "simulation")
        if self.horizon is not None and not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValidationError(f"horizon must be positive, got {self.horizon!r}", "simulation.horizon")
        if self.ship_count is not None and (isinstance(self.ship_count, bool) or self.ship_count < 1):
            raise ValidationError(f"ship_count must be a positive integer, got {self.ship_count!r}",
                                  "simulation.ship_count")
        if not 0.0 <= self.warmup_fraction <= 0.5:
            raise ValidationError(f"warmup_fraction must lie in [0, 0.5], got {self.warmup_fraction!r}",
                                  "simulation.warmup_fraction")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1", "simulation.replications")
        if self.confidence_intervals and self.batch_count < 10:
            raise ValidationError("batch_count must be >= 10 when confidence intervals are requested",
                                  "simulation.batch_count")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be an unsigned 64-bit integer", "simulation.seed")
        if self.routing not in ROUTING_MODES:
            raise ValidationError(f"routing must be one of {ROUTING_MODES}", "routing")


class EventRecord(NamedTuple):
    kind: str
    time: float
    ship: int
    i: int
    j: int
    k: int | None  # 1-based berth, None for arrivals


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float | None = None

    @property
    def interval(self) -> tuple[float, float] | None:
        if self.half_width is None:
            return None
        return self.mean - self.half_width, self.mean + self.half_width

    def contains(self, value: float) -> bool:
        lo_hi = self.interval
        return lo_hi is not None and lo_hi[0] <= value <= lo_hi[1]


@dataclass(frozen=True)
class PortEstimate:
    i: int
    j: int
    label: str
    berths: int
    wait: Estimate
    queue_length: Estimate
    population: Estimate
    utilization: Estimate
    served: int
    berth_busy: tuple[float, ...]


@dataclass(frozen=True)
class SimMetrics:
    ports: tuple[PortEstimate, ...]
    total_wait: Estimate
    total_queue: Estimate
    total_population: Estimate
    replications: int = 1
    arrivals: int = 0
    metadata: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class LittleAudit:
    queue_length: float  # time-average number waiting, L-hat
    arrival_rate: float  # lambda-hat
    wait: float  # per-ship mean wait, W-hat
    residual: float


# -- random variates -------------------------------------------------------

def replication_streams(seed: int, replication_index: int) -> list[np.random.Generator]:
    """Independent generators for (arrivals, routing, service, berth choice)."""
    root = np.random.SeedSequence(entropy=seed, spawn_key=(replication_index,))
    return [np.random.Generator(np.random.Philox(child)) for child in root.spawn(4)]


def open_uniforms(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    return (rng.integers(0, 2 ** 53, size=size, dtype=np.int64) + 0.5) / _TWO53


def interarrival_variates(rate: float, rng: np.random.Generator, size: int) -> np.ndarray:
    return -np.log(open_uniforms(rng, size)) / rate


def erlang_variates(mean: float, degree: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Erlang draws built as sums of ``degree`` inverse-transform exponentials of mean ``mean/degree``."""
    if degree > _SUM_DEGREE_LIMIT:
        return rng.gamma(degree, mean / degree, size=size)
    if degree == 1:
        return -np.log(open_uniforms(rng, size)) * mean
    return -np.log(open_uniforms(rng, (size, degree))).sum(axis=1) * (mean / degree)


def sample_interarrival(rate: float, rng: np.random.Generator) -> float:
    if not rate > 0:
        raise ValidationError(f"rate must be positive, got {rate!r}")
    return float(interarrival_variates(rate, rng, 1)[0])


def sample_erlang_service(mean: float, degree: int, rng: np.random.Generator) -> float:
    if not mean > 0 or degree < 1:
        raise ValidationError(f"need mean > 0 and degree >= 1, got {mean!r}, {degree!r}")
    return float(erlang_variates(mean, degree, rng, 1)[0])


class _Buffered:
    """Hands out pre-generated variates one at a time."""

    __slots__ = ("_fill", "_buf", "_pos")

    def __init__(self, fill):
        self._fill = fill
        self._buf = []
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._fill(_CHUNK).tolist()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return x


class _Router:
    """Two-stage categorical choice: subsystem by berth share, then port by berth share."""

    def __init__(self, topology: SystemTopology):
        counts = topology.berth_counts
        self._sub_cum = list(accumulate(split_probabilities(topology)))
        self._port_cum = [[c / sum(row) for c in accumulate(row)] for row in counts]
        offsets = list(accumulate((len(row) for row in counts), initial=0))
        self._offsets = offsets

    @staticmethod
    def _pick(cum: list[float], u: float) -> int:
        return min(bisect_right(cum, u * cum[-1]), len(cum) - 1)

    def port(self, subsystem: int, u: float) -> int:
        """Flat 0-based port index within the given 0-based subsystem."""
        cum = self._port_cum[subsystem]
        if len(cum) == 1:
            return self._offsets[subsystem]
        return self._offsets[subsystem] + self._pick(cum, u)

    def subsystem(self, u: float) -> int:
        return self._pick(self._sub_cum, u)


def route_arrivals(topology: SystemTopology, rng: np.random.Generator, count: int,
                   subsystem: int | None = None) -> np.ndarray:
    """Destinations of ``count`` arriving ships as a ``(count, 2)`` array of 1-based ``(i, j)``.

    With ``subsystem`` given, only the port is drawn, with probability
    ``S_ij / sum_j S_ij``. Otherwise the subsystem is drawn first, with
    probability ``p_i``.
    """
    router = _Router(topology)
    u = open_uniforms(rng, (count, 2))
    if subsystem is not None:
        subs = np.full(count, subsystem - 1, dtype=np.int64)
    else:
        cum = np.asarray(router._sub_cum)
        subs = np.minimum(np.searchsorted(cum, u[:, 0] * cum[-1], side="right"), cum.size - 1)
    ports = np.empty(count, dtype=np.int64)
    for a in np.unique(subs):
        mask = subs == a
        cum = np.asarray(router._port_cum[a])
        ports[mask] = np.minimum(np.searchsorted(cum, u[mask, 1] * cum[-1], side="right"), cum.size - 1)
    return np.column_stack([subs + 1, ports + 1])


def route_arrival(topology: SystemTopology, rng: np.random.Generator,
                  subsystem: int | None = None) -> tuple[int, int]:
    """Pick the 1-based ``(i, j)`` destination of one arriving ship."""
    i, j = route_arrivals(topology, rng, 1, subsystem)[0]
    return int(i), int(j)


# -- the event loop ----------------------------------------------------------

@dataclass
class _Run:
    arrival: np.ndarray
    start: np.ndarray
    departure: np.ndarray
    port: np.ndarray
    berth: np.ndarray
    window: tuple[float, float]
    first_counted: int


def _simulate(config: SimConfig, replication_index: int, trace: list | None) -> _Run:
    topology, traffic = config.topology, config.traffic
    refs = flatten(topology)
    arr_rng, route_rng, svc_rng, berth_rng = replication_streams(config.seed, replication_index)
    router = _Router(topology)
    route_u = _Buffered(lambda n: open_uniforms(route_rng, n))
    berth_u = _Buffered(lambda n: open_uniforms(berth_rng, n))
    unit_service = _Buffered(lambda n: erlang_variates(1.0, traffic.erlang_degree, svc_rng, n))

    split = config.routing == "split"
    n_sources = 1 if split else topology.subsystem_count
    # eq3: every subsystem is its own Poisson source of rate lambda
    next_gap = _Buffered(lambda n: interarrival_variates(traffic.arrival_rate, arr_rng, n))

    mean_service = [[1.0 / u for u in ref.port.rates] for ref in refs]
    free = [list(range(ref.port.size)) for ref in refs]
    line = [deque() for _ in refs]
    coords = [(ref.i, ref.j) for ref in refs]

    arrival: list[float] = []
    start: list[float] = []
    departure: list[float] = []
    port_of: list[int] = []
    berth_of: list[int] = []

    horizon = config.horizon if config.horizon is not None else math.inf
    limit = config.ship_count if config.ship_count is not None else math.inf
    record = trace is not None

    heap: list = []
    seq = 0
    for s in range(n_sources):
        heap.append((next_gap(), 0, seq, s))
        seq += 1
    heapq.heapify(heap)
    push, pop = heapq.heappush, heapq.heappop
    last_arrival = 0.0

    while heap:
        t, kind, _, x = pop(heap)
        if kind == 0:
            if t > horizon or len(arrival) >= limit:
                continue
            ship = len(arrival)
            sub = router.subsystem(route_u()) if split else x
            p = router.port(sub, route_u())
            arrival.append(t)
            port_of.append(p)
            start.append(math.nan)
            departure.append(math.nan)
            berth_of.append(-1)
            last_arrival = t
            if record:
                trace.append(EventRecord(ARRIVAL, t, ship + 1, *coords[p], None))
            idle = free[p]
            if idle:
                pos = int(berth_u() * len(idle))
                k = idle[pos]
                idle[pos] = idle[-1]
                idle.pop()
                start[ship] = t
                berth_of[ship] = k
                push(heap, (t + mean_service[p][k] * unit_service(), 1, seq, ship))
                seq += 1
                if record:
                    trace.append(EventRecord(SERVICE_START, t, ship + 1, *coords[p], k + 1))
            else:
                line[p].append(ship)
            push(heap, (t + next_gap(), 0, seq, x))
            seq += 1
        else:
            ship = x
            p = port_of[ship]
            k = berth_of[ship]
            departure[ship] = t
            if record:
                trace.append(EventRecord(DEPARTURE, t, ship + 1, *coords[p], k + 1))
            waiting = line[p]
            if waiting:
                nxt = waiting.popleft()
                start[nxt] = t
                berth_of[nxt] = k
                push(heap, (t + mean_service[p][k] * unit_service(), 1, seq, nxt))
                seq += 1
                if record:
                    trace.append(EventRecord(SERVICE_START, t, nxt + 1, *coords[p], k + 1))
            else:
                free[p].append(k)

    n = len(arrival)
    arr = np.asarray(arrival)
    if config.horizon is not None:
        w0, w1 = config.warmup_fraction * config.horizon, config.horizon
        first = int(np.searchsorted(arr, w0, side="left"))
    else:
        first = min(int(config.warmup_fraction * n), max(n - 1, 0))
        w0, w1 = (float(arr[first]), last_arrival) if n else (0.0, 0.0)
    return _Run(arr, np.asarray(start), np.asarray(departure), np.asarray(port_of, dtype=np.int64),
                np.asarray(berth_of, dtype=np.int64), (w0, w1), first)


def _overlap(lo: np.ndarray, hi: np.ndarray, a: float, b: float) -> float:
    if lo.size == 0 or b <= a:
        return 0.0
    return float(np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None).sum())


def _t_half_width(samples: Sequence[float]) -> float | None:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        return None
    return float(stats.t.ppf(0.975, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))


def _port_estimates(config: SimConfig, run: _Run) -> list[PortEstimate]:
    w0, w1 = run.window
    span = w1 - w0
    batches = config.batch_count
    edges = np.linspace(w0, w1, batches + 1)
    out = []
    for p, ref in enumerate(flatten(config.topology)):
        mine = run.port == p
        a, s, d, k = run.arrival[mine], run.start[mine], run.departure[mine], run.berth[mine]
        keep = np.flatnonzero(mine) >= run.first_counted
        waits = (s - a)[keep]
        counted = waits.size
        if config.confidence_intervals and counted < batches * 10:
            raise HorizonTooShort(f"port ({ref.i},{ref.j}) served {counted} ships after warmup; "
                                  f"need at least {batches * 10} for {batches} batches")
        S = ref.port.size

        def time_avg(lo, hi, x0, x1):
            return _overlap(lo, hi, x0, x1) / (x1 - x0) if x1 > x0 else 0.0

        busy = tuple(time_avg(s[k == b], d[k == b], w0, w1) for b in range(S))
        wait = float(waits.mean()) if counted else 0.0
        queue = time_avg(a, s, w0, w1)
        pop = time_avg(a, d, w0, w1)
        util = math.fsum(busy) / S

        if config.confidence_intervals and span > 0:
            wait_b = [float(chunk.mean()) for chunk in np.array_split(waits, batches)]
            queue_b, pop_b, util_b = [], [], []
            for x0, x1 in zip(edges[:-1], edges[1:]):
                queue_b.append(time_avg(a, s, x0, x1))
                pop_b.append(time_avg(a, d, x0, x1))
                util_b.append(time_avg(s, d, x0, x1) / S)
            hw = [_t_half_width(v) for v in (wait_b, queue_b, pop_b, util_b)]
        else:
            hw = [None] * 4
        out.append(PortEstimate(
            i=ref.i, j=ref.j, label=config.topology.port_label(ref.i, ref.j), berths=S,
            wait=Estimate(wait, hw[0]), queue_length=Estimate(queue, hw[1]),
            population=Estimate(pop, hw[2]), utilization=Estimate(util, hw[3]),
            served=int(counted), berth_busy=busy,
        ))
    return out


def run_replication(config: SimConfig, replication_index: int = 0,
                    trace: list | None = None) -> SimMetrics:
    """Simulate one replication and return its estimates.

    Arrivals stop at the horizon (or after ``ship_count`` ships), then the
    system is run until empty. Per-ship waits count ships that arrive
    after warmup. Time averages cover the window from the warmup point to
    the end of arrivals. With confidence intervals on, half-widths come
    from batch means over ``batch_count`` batches.

    Pass a list as ``trace`` to collect the drained :class:`EventRecord`
    sequence.
    """
    run = _simulate(config, replication_index, trace)
    ports = _port_estimates(config, run)
    return SimMetrics(
        ports=tuple(ports),
        total_wait=Estimate(math.fsum(p.wait.mean for p in ports)),
        total_queue=Estimate(math.fsum(p.queue_length.mean for p in ports)),
        total_population=Estimate(math.fsum(p.population.mean for p in ports)),
        replications=1,
        arrivals=int(run.arrival.size),
    )


def _replicate(args):
    config, index = args
    return run_replication(config, index)


def _pool(values: Sequence[float]) -> Estimate:
    return Estimate(math.fsum(values) / len(values), _t_half_width(values))


def pool_replications(reps: Sequence[SimMetrics]) -> SimMetrics:
    """Combine replication results; half-widths are Student-t over replication means."""
    ports = []
    for cols in zip(*(r.ports for r in reps)):
        head = cols[0]
        ports.append(PortEstimate(
            i=head.i, j=head.j, label=head.label, berths=head.berths,
            wait=_pool([c.wait.mean for c in cols]),
            queue_length=_pool([c.queue_length.mean for c in cols]),
            population=_pool([c.population.mean for c in cols]),
            utilization=_pool([c.utilization.mean for c in cols]),
            served=sum(c.served for c in cols),
            berth_busy=tuple(math.fsum(b) / len(cols) for b in zip(*(c.berth_busy for c in cols))),
        ))
    return SimMetrics(
        ports=tuple(ports),
        total_wait=_pool([r.total_wait.mean for r in reps]),
        total_queue=_pool([r.total_queue.mean for r in reps]),
        total_population=_pool([r.total_population.mean for r in reps]),
        replications=len(reps),
        arrivals=sum(r.arrivals for r in reps),
    )


def run_experiment(config: SimConfig, workers: int | None = None) -> SimMetrics:
    """Run ``config.replications`` independent replications and pool them.

    ``workers > 1`` runs replications in separate processes. Output is
    identical either way.
    """
    jobs = [(config, r) for r in range(config.replications)]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            reps = list(pool.map(_replicate, jobs))
    else:
        reps = [_replicate(job) for job in jobs]
    return pool_replications(reps)


# -- trace tools -------------------------------------------------------------

def audit_littles_law(trace: Sequence[EventRecord], port: tuple[int, int], eps: float = 1e-300) -> LittleAudit:
    """Check L = lambda * W for one port on a drained trace.

    The time-average line length is integrated from the event sequence.
    Waits come from per-ship timestamp differences. Both cover
    ``[0, T]``, where ``T`` is the time of the last event in the trace.
    """
    if not trace:
        return LittleAudit(0.0, 0.0, 0.0, 0.0)
    horizon = trace[-1].time
    arrived: dict[int, float] = {}
    started: dict[int, float] = {}
    departed: set[int] = set()
    area = 0.0
    waiting = 0
    last = 0.0
    for ev in trace:
        if (ev.i, ev.j) != port:
            continue
        area += waiting * (ev.time - last)
        last = ev.time
        if ev.kind == ARRIVAL:
            arrived[ev.ship] = ev.time
            waiting += 1
        elif ev.kind == SERVICE_START:
            started[ev.ship] = ev.time
            waiting -= 1
        else:
            departed.add(ev.ship)
    if len(departed) != len(arrived) or any(s not in departed for s in arrived):
        raise NonDrainedTrace(f"{len(arrived) - len(departed)} ships still in port {port} at trace end")
    if not arrived:
        return LittleAudit(0.0, 0.0, 0.0, 0.0)
    n = len(arrived)
    w_hat = math.fsum(started[s] - t for s, t in arrived.items()) / n
    lam_hat = n / horizon if horizon > 0 else 0.0
    l_hat = area / horizon if horizon > 0 else 0.0
    residual = abs(l_hat - lam_hat * w_hat) / max(l_hat, eps)
    return LittleAudit(l_hat, lam_hat, w_hat, residual)


def format_trace(trace: Sequence[EventRecord]) -> str:
    """Newline-delimited ``kind,time,ship_id,i,j,k`` lines; ``k`` is blank for arrivals."""
    return "".join(f"{e.kind},{e.time:.17g},{e.ship},{e.i},{e.j},{'' if e.k is None else e.k}\n" for e in trace)
