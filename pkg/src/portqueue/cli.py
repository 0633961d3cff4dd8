"""``portqueue`` command-line driver.

Exit codes: 0 success, 1 input error, 2 instability, 3 insufficient
simulation data, 4 comparison outside tolerance.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .analytic import base_wait, check_stability, port_arrival_rate, port_wait, system_totals, variation_coefficient
from .config import parse_config, simulation_config
from .errors import ConfigSyntaxError, HorizonTooShort, PortQueueError, SchemaError, ValidationError
from .model import PortSpec, SystemTopology, TrafficSpec, flatten
from .report import FORMATS, PlanReport, PlanRow, build_comparison, emit_report
from .simulator import SimConfig, run_experiment

log = logging.getLogger("portqueue")

EXIT_OK, EXIT_INPUT, EXIT_UNSTABLE, EXIT_SHORT, EXIT_TOLERANCE = 0, 1, 2, 3, 4
MAX_BERTHS = 10_000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would exit with status 2, which is reserved for instability
    def error(self, message):
        raise UsageError(message)


def _positive(text: str) -> float:
    value = float(text)
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="YAML/JSON config file")
    common.add_argument("--format", choices=FORMATS, default="table")
    common.add_argument("--out", type=Path, help="write the report here instead of stdout")
    common.add_argument("--routing", choices=("eq3", "split"), help="override the config's routing mode")
    common.add_argument("--tolerance", type=_positive, default=0.05, help="relative tolerance for compare")
    common.add_argument("--seed", type=_u64, help="override the simulation seed")
    common.add_argument("--sla-wait", type=_positive, help="target mean wait per port (plan)")
    common.add_argument("--berth-rate", type=_positive, help="service rate of added berths (plan)")
    common.add_argument("--workers", type=int, default=1, help="processes for replications")
    common.add_argument("--no-strict", dest="strict", action="store_false", help="ignore unknown config fields")
    common.add_argument("--trace", type=Path, help="write the event trace of replication 0 (simulate)")

    parser = _Parser(prog="portqueue", description="Steady-state seaport queueing metrics")
    parser.add_argument("--version", action="version", version=f"portqueue {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("analyze", parents=[common], help="closed-form metrics")
    sub.add_parser("simulate", parents=[common], help="discrete-event estimates with confidence intervals")
    sub.add_parser("compare", parents=[common], help="analytic versus simulated metrics")
    sub.add_parser("plan", parents=[common], help="minimum berths per port for a wait target")
    return parser


def _emit(args, report, metadata: dict) -> None:
    text = emit_report(report, args.format, metadata)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)


def _sim_config(args, parsed) -> SimConfig:
    sim = parsed.simulation or simulation_config(parsed.topology, parsed.traffic, routing=parsed.routing)
    changes = {"routing": args.routing or parsed.routing}
    if args.seed is not None:
        changes["seed"] = args.seed
    return dataclasses.replace(sim, **changes)


def _sim_metadata(sim: SimConfig) -> dict:
    return {"seed": sim.seed, "horizon": sim.horizon, "ship_count": sim.ship_count,
            "replications": sim.replications, "batch_count": sim.batch_count,
            "warmup_fraction": sim.warmup_fraction}


def required_berths(topology: SystemTopology, traffic: TrafficSpec, i: int, j: int, sla_wait: float,
                    routing: str = "eq3", berth_rate: float | None = None,
                    max_berths: int = MAX_BERTHS) -> PlanRow:
    """Smallest berth count for port ``(i, j)`` whose analytic mean wait is at most ``sla_wait``.

    Berths are added one at a time at ``berth_rate``, which defaults to
    the port's mean existing rate. The arrival rate stays fixed.
    """
    port = topology.port(i, j)
    r = port_arrival_rate(topology, traffic, i, j, routing)
    rate = berth_rate if berth_rate is not None else port.capacity / port.size
    c = variation_coefficient(traffic.erlang_degree)

    def wait_at(size: int) -> float | None:
        candidate = PortSpec.from_rates(port.rates + (rate,) * (size - port.size))
        rho = r / candidate.capacity
        if not rho < 1.0:
            return None
        return port_wait(base_wait(candidate, r, rho), c)

    current = wait_at(port.size)
    size = port.size
    if current is None:
        # unstable sizes cannot meet any target; jump to the first stable one
        size = max(size, port.size + math.floor((r - port.capacity) / rate) + 1)
        while size <= max_berths and wait_at(size) is None:
            size += 1
    while size <= max_berths:
        ew = wait_at(size)
        if ew is not None and ew <= sla_wait:
            return PlanRow(i, j, topology.port_label(i, j), port.size, size, rate, current, ew, True)
        size += 1
    return PlanRow(i, j, topology.port_label(i, j), port.size, None, rate, current, None, False)


def cmd_analyze(args, parsed) -> int:
    routing = args.routing or parsed.routing
    meta = {"routing": routing, "config_digest": parsed.digest}
    stability = check_stability(parsed.topology, parsed.traffic, routing)
    if not stability.stable:
        for v in stability.violations():
            log.error("unstable: %s", v)
        _emit(args, stability, meta)
        return EXIT_UNSTABLE
    _emit(args, system_totals(parsed.topology, parsed.traffic, routing), meta)
    return EXIT_OK


def cmd_simulate(args, parsed) -> int:
    sim = _sim_config(args, parsed)
    metrics = run_experiment(sim, workers=args.workers)
    if args.trace:
        from .simulator import format_trace, run_replication
        trace: list = []
        run_replication(dataclasses.replace(sim, confidence_intervals=False), 0, trace)
        args.trace.write_text(format_trace(trace))
    _emit(args, metrics, {"routing": sim.routing, "config_digest": parsed.digest, **_sim_metadata(sim)})
    return EXIT_OK


def cmd_compare(args, parsed) -> int:
    sim = _sim_config(args, parsed)
    meta = {"routing": sim.routing, "config_digest": parsed.digest}
    stability = check_stability(parsed.topology, parsed.traffic, sim.routing)
    if not stability.stable:
        for v in stability.violations():
            log.error("unstable: %s", v)
        _emit(args, stability, meta)
        return EXIT_UNSTABLE
    analytic = system_totals(parsed.topology, parsed.traffic, sim.routing)
    simulated = run_experiment(sim, workers=args.workers)
    report = build_comparison(analytic, simulated, args.tolerance,
                              {**meta, **_sim_metadata(sim), "tolerance": args.tolerance})
    _emit(args, report, {})
    if not report.passed:
        log.warning("comparison outside tolerance %g", args.tolerance)
        return EXIT_TOLERANCE
    return EXIT_OK


def cmd_plan(args, parsed) -> int:
    if args.sla_wait is None:
        raise UsageError("plan requires --sla-wait")
    routing = args.routing or parsed.routing
    rows = tuple(required_berths(parsed.topology, parsed.traffic, i, j, args.sla_wait, routing, args.berth_rate)
                 for i, j, _ in flatten(parsed.topology))
    report = PlanReport(args.sla_wait, rows)
    _emit(args, report, {"routing": routing, "config_digest": parsed.digest, "max_berths": MAX_BERTHS})
    if not report.feasible:
        log.error("no berth count up to %d meets sla_wait=%g for some port", MAX_BERTHS, args.sla_wait)
        return EXIT_UNSTABLE
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "compare": cmd_compare, "plan": cmd_plan}


def main(argv: list[str] | None = None) -> int:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO)
    log.propagate = False
    try:
        args = build_parser().parse_args(argv)
        if args.command == "plan" and args.sla_wait is None:
            raise UsageError("plan requires --sla-wait")
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        text = args.config.read_text()
        parsed = parse_config(text, strict=args.strict)
        return COMMANDS[args.command](args, parsed)
    except UsageError as exc:
        log.error("usage: %s", exc)
    except OSError as exc:
        log.error("cannot read config: %s", exc)
    except ConfigSyntaxError as exc:
        log.error("%s", exc)
    except (SchemaError, ValidationError) as exc:
        log.error("invalid config at %s: %s", exc.path or "<root>", exc.reason)
    except HorizonTooShort as exc:
        log.error("insufficient simulation data: %s", exc)
        return EXIT_SHORT
    except PortQueueError as exc:
        log.error("%s", exc)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
