"""Exit criteria for the package, one test (or parametrized family) per criterion.

Run ``pytest tests/test_acceptance.py`` and read the ``acceptance`` block
in the terminal summary: one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import dataclasses
import json
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest

from oracles import erlang_c_delay, mm1_population, mm1_queue, mm1_wait
from portqueue import analytic as an
from portqueue.cli import main
from portqueue.errors import InstabilityError, UnstablePort, UnstableSystem
from portqueue.model import SystemTopology, TrafficSpec, flatten
from portqueue.simulator import SimConfig, audit_littles_law, format_trace, run_experiment, run_replication

SEED = 20261019
RESULTS: dict[int, list[tuple[bool, str]]] = {}
TITLES = {
    1: "Erlang-C collapse (n=1, S=1..50, 1e-10 rel)",
    2: "M/M/1 exactness (1e-12 rel)",
    3: "simulation/analytic agreement, exact regime (CI coverage, <2%)",
    4: "Lee-Longton audit, M/E4/S (<5%, E4 wait < M/M/S wait)",
    5: "Little's law on drained traces (<1e-9)",
    6: "split normalization and per-subsystem proportionality (1000 topologies)",
    7: "stability gate (refusal + analyze exit 2)",
    8: "determinism (byte-identical reports, identical traces)",
    9: "scale covariance, kappa=3.7 (1e-12)",
}


@contextmanager
def criterion(number: int, detail: str = "", budget: float | None = None):
    start = time.perf_counter()
    ok = False
    reason = ""
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget is not None:
            assert elapsed < budget, f"runtime {elapsed:.1f}s exceeds {budget}s"
        ok = True
    except AssertionError as exc:
        reason = str(exc).splitlines()[0]
        raise
    finally:
        elapsed = time.perf_counter() - start
        note = f"{detail} ({reason})" if reason else detail
        RESULTS.setdefault(number, []).append((ok, f"{note} [{elapsed:.2f}s]".strip()))
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {note}")


def summary_lines() -> list[str]:
    lines = []
    for number in sorted(RESULTS):
        entries = RESULTS[number]
        ok = all(e[0] for e in entries)
        failed = [d for good, d in entries if not good]
        tail = f" - failing: {'; '.join(failed)}" if failed else ""
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {TITLES[number]}{tail}")
    return lines


def homogeneous(servers: int, rho: float, degree: int = 1) -> tuple[SystemTopology, TrafficSpec]:
    return SystemTopology.from_rates([[[1.0] * servers]]), TrafficSpec(rho * servers, degree)


# 1 -----------------------------------------------------------------------------

def test_erlang_c_collapse():
    with criterion(1, budget=1.0):
        worst = 0.0
        for servers in range(1, 51):
            for rho in (0.1, 0.3, 0.5, 0.7, 0.9):
                topo, traffic = homogeneous(servers, rho)
                ew = an.port_metrics(topo, traffic, 1, 1).wait
                expected = erlang_c_delay(servers, rho * servers, 1.0)
                worst = max(worst, abs(ew - expected) / expected)
        assert worst <= 1e-10, worst


# 2 -----------------------------------------------------------------------------

def test_mm1_exactness():
    with criterion(2):
        topo, traffic = homogeneous(1, 0.5)
        m = an.port_metrics(topo, traffic, 1, 1)
        assert m.wait == pytest.approx(mm1_wait(0.5, 1.0), rel=1e-12)
        assert m.queue_length == pytest.approx(mm1_queue(0.5), rel=1e-12)
        assert m.population == pytest.approx(mm1_population(0.5), rel=1e-12)
        assert (m.wait, m.queue_length, m.population) == pytest.approx((1.0, 0.5, 1.0), rel=1e-12)


# 3 -----------------------------------------------------------------------------

_EXACT_ELAPSED: list[float] = []


@pytest.mark.parametrize("servers", [1, 2, 4])
def test_exact_regime_agreement(servers):
    start = time.perf_counter()
    with criterion(3, f"S={servers}"):
        topo, traffic = homogeneous(servers, 0.5)
        config = SimConfig(topo, traffic, ship_count=100_000, replications=10, seed=SEED)
        sim = run_experiment(config).ports[0].wait
        analytic = an.port_metrics(topo, traffic, 1, 1).wait
        err = abs(analytic - sim.mean) / sim.mean
        print(f"  S={servers}: analytic {analytic:.6g}, simulated {sim.mean:.6g} +/- {sim.half_width:.3g}, "
              f"rel err {err:.3%}")
        _EXACT_ELAPSED.append(time.perf_counter() - start)
        assert sim.contains(analytic)
        assert err < 0.02
        assert sum(_EXACT_ELAPSED) < 30.0


# 4 -----------------------------------------------------------------------------

_LL_ELAPSED: list[float] = []


@pytest.mark.parametrize("servers", [1, 2, 4])
@pytest.mark.parametrize("rho", [0.3, 0.5, 0.8])
def test_lee_longton_audit(servers, rho):
    start = time.perf_counter()
    with criterion(4, f"S={servers} rho={rho}"):
        topo, traffic = homogeneous(servers, rho, degree=4)
        erlang = run_experiment(SimConfig(topo, traffic, ship_count=100_000, replications=10, seed=SEED))
        exp_traffic = TrafficSpec(traffic.arrival_rate, 1)
        markov = run_experiment(SimConfig(topo, exp_traffic, ship_count=30_000, replications=10, seed=SEED))
        analytic = an.port_metrics(topo, traffic, 1, 1).wait
        simulated = erlang.ports[0].wait.mean
        gap = abs(analytic - simulated) / simulated
        print(f"  S={servers} rho={rho}: analytic {analytic:.6g}, simulated E4 {simulated:.6g}, "
              f"M/M/S {markov.ports[0].wait.mean:.6g}, gap {gap:.3%}")
        _LL_ELAPSED.append(time.perf_counter() - start)
        assert simulated < markov.ports[0].wait.mean
        assert sum(_LL_ELAPSED) < 120.0
        assert gap < 0.05, f"relative gap {gap:.3%}"


# 5 -----------------------------------------------------------------------------

def test_littles_law_sample_path():
    cases = [
        ([[[1.0]]], 1, 0.5),
        ([[[1.0, 1.0]]], 4, 1.4),
        ([[[0.2, 1.8]]], 1, 1.2),
        ([[[0.4, 1.1], [1.0, 1.0, 2.0]], [[0.9]]], 4, 0.8),
    ]
    with criterion(5, budget=10.0):
        worst = 0.0
        for routing in ("eq3", "split"):
            for rates, degree, lam in cases:
                config = SimConfig(SystemTopology.from_rates(rates), TrafficSpec(lam, degree), ship_count=25_000,
                                   seed=SEED, routing=routing, confidence_intervals=False)
                trace = []
                run_replication(config, 0, trace)
                for i, j, _ in flatten(config.topology):
                    audit = audit_littles_law(trace, (i, j))
                    assert audit.queue_length > 0
                    worst = max(worst, audit.residual)
        assert worst < 1e-9, worst


# 6 -----------------------------------------------------------------------------

def test_normalization_and_proportionality():
    with criterion(6, budget=5.0):
        gen = random.Random(SEED)
        for _ in range(1000):
            rates = [[[gen.uniform(0.01, 10.0) for _ in range(gen.randint(1, 6))]
                      for _ in range(gen.randint(1, 5))] for _ in range(gen.randint(1, 5))]
            topo = SystemTopology.from_rates(rates)
            traffic = TrafficSpec(gen.uniform(0.01, 100.0))
            assert abs(sum(an.split_probabilities(topo)) - 1.0) <= 1e-12
            for i, sub in enumerate(topo.subsystems, start=1):
                r = [an.port_arrival_rate(topo, traffic, i, j) for j in range(1, len(sub.ports) + 1)]
                for j in range(len(r)):
                    for jj in range(len(r)):
                        exact = Fraction(sub.ports[j].size, sub.ports[jj].size)
                        assert abs(r[j] / r[jj] - float(exact)) <= 1e-12 * float(exact)


# 7 -----------------------------------------------------------------------------

UNSTABLE = [
    ([[[1.0]]], 1.0, UnstableSystem),  # boundary rho = 1
    ([[[1.0, 1.0]]], 2.5, UnstableSystem),
    ([[[1.0]], [[5.0, 5.0]]], 1.2, UnstablePort),  # system rho < 1, port (1,1) overloaded
    ([[[2.0], [0.1]]], 1.0, UnstablePort),
]


def test_stability_gate(tmp_path, capsys):
    with criterion(7):
        for n, (rates, lam, error) in enumerate(UNSTABLE):
            topo = SystemTopology.from_rates(rates)
            with pytest.raises(error):
                an.system_totals(topo, TrafficSpec(lam))
            path = tmp_path / f"unstable{n}.json"
            path.write_text(json.dumps({"traffic": {"arrival_rate": lam},
                                        "subsystems": [{"ports": [{"berth_rates": p} for p in s]} for s in rates]}))
            assert main(["analyze", "--config", str(path)]) == 2
            out = capsys.readouterr().out
            assert "violation" in out
        with pytest.raises(InstabilityError):
            an.base_wait(topo.port(1, 1), 1.0, 1.0)


# 8 -----------------------------------------------------------------------------

def test_determinism(tmp_path, capsys):
    with criterion(8, budget=10.0):
        path = tmp_path / "sim.yaml"
        path.write_text("traffic: {arrival_rate: 1.3, erlang_degree: 3}\n"
                        "subsystems: [{ports: [{berth_rates: [1.0, 0.6]}, {berth_rates: [2.0]}]}]\n"
                        f"simulation: {{ship_count: 20000, replications: 5, seed: {SEED}}}\n")
        reports = []
        for fmt in ("json", "json", "csv", "csv", "table", "table"):
            assert main(["simulate", "--config", str(path), "--format", fmt]) == 0
            reports.append(capsys.readouterr().out.encode())
        assert reports[0] == reports[1] and reports[2] == reports[3] and reports[4] == reports[5]
        topo = SystemTopology.from_rates([[[1.0, 0.6], [2.0]]])
        config = SimConfig(topo, TrafficSpec(1.3, 3), ship_count=20_000, seed=SEED)
        first, second = [], []
        run_replication(config, 2, first)
        run_replication(config, 2, second)
        assert first == second
        assert format_trace(first) == format_trace(second)


# 9 -----------------------------------------------------------------------------

def test_scale_covariance():
    kappa = 3.7
    with criterion(9):
        rates = [[[1.0, 0.5], [2.0, 2.0, 1.5]], [[0.7]], [[1.2, 1.2, 1.2, 3.0]]]
        for routing in ("eq3", "split"):
            for degree in (1, 4):
                base_topo = SystemTopology.from_rates(rates)
                scaled_topo = SystemTopology.from_rates([[[u * kappa for u in p] for p in s] for s in rates])
                base = an.system_totals(base_topo, TrafficSpec(0.6, degree), routing)
                scaled = an.system_totals(scaled_topo, TrafficSpec(0.6 * kappa, degree), routing)
                assert scaled.utilization == pytest.approx(base.utilization, rel=1e-12)
                assert scaled.split_probabilities == pytest.approx(base.split_probabilities, rel=1e-12)
                for a, b in zip(base.per_port, scaled.per_port):
                    assert b.utilization == pytest.approx(a.utilization, rel=1e-12)
                    assert b.queue_length == pytest.approx(a.queue_length, rel=1e-12)
                    assert b.population == pytest.approx(a.population, rel=1e-12)
                    assert b.wait == pytest.approx(a.wait / kappa, rel=1e-12)
                    assert b.base_wait == pytest.approx(a.base_wait / kappa, rel=1e-12)
