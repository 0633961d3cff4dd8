"""Report types and serialization (table, csv, json).

Every float is written with 17 significant digits so values survive a
text round trip. Rows follow :func:`portqueue.model.flatten` order.
JSON documents have three top-level keys, ``metadata``, ``system`` and
``ports``. ``metadata.kind`` says which report type the document holds.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, Union

from . import __version__
from .analytic import PortMetrics, StabilityReport, SystemMetrics
from .simulator import Estimate, PortEstimate, SimMetrics

EPS = 1e-12
FORMATS = ("table", "csv", "json")

ANALYTIC_HEADER = ["i", "j", "label", "S", "r_ij", "rho_ij", "EW_star", "EW", "En", "EQ"]
SIM_HEADER = ["i", "j", "label", "S", "served", "EW", "EW_hw", "En", "En_hw", "EQ", "EQ_hw",
              "rho", "rho_hw", "berth_busy"]
COMPARE_HEADER = ["i", "j", "label", "metric", "analytic", "simulated", "half_width", "rel_error",
                  "within_tolerance"]
STABILITY_HEADER = ["i", "j", "rho", "stable"]
PLAN_HEADER = ["i", "j", "label", "current_S", "required_S", "berth_rate", "EW_current", "EW_required",
               "meets_sla"]

COMPARED = (("EW", "wait"), ("En", "queue_length"), ("EQ", "population"), ("rho", "utilization"))
COMPARED_TOTALS = (("EW", "total_wait"), ("En", "total_queue"), ("EQ", "total_population"))


def relative_error(analytic: float, simulated: float, eps: float = EPS) -> float:
    return abs(analytic - simulated) / max(abs(simulated), eps)


@dataclass(frozen=True)
class MetricComparison:
    metric: str
    analytic: float
    simulated: float
    half_width: float | None
    rel_error: float
    within_tolerance: bool


@dataclass(frozen=True)
class ComparisonRow:
    i: int
    j: int
    label: str
    metrics: tuple[MetricComparison, ...]

    @property
    def passed(self) -> bool:
        return all(m.within_tolerance for m in self.metrics)


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]
    system: ComparisonRow
    tolerance: float
    analytic: SystemMetrics
    simulated: SimMetrics
    notes: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return self.system.passed and all(r.passed for r in self.rows)


@dataclass(frozen=True)
class PlanRow:
    i: int
    j: int
    label: str
    current_S: int
    required_S: int | None
    berth_rate: float
    EW_current: float | None  # None when the current port is overloaded
    EW_required: float | None
    meets_sla: bool


@dataclass(frozen=True)
class PlanReport:
    sla_wait: float
    rows: tuple[PlanRow, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def feasible(self) -> bool:
        return all(r.meets_sla for r in self.rows)


Report = Union[SystemMetrics, SimMetrics, ComparisonReport, StabilityReport, PlanReport]


def _compare(metric: str, analytic: float, est: Estimate, tolerance: float) -> MetricComparison:
    err = relative_error(analytic, est.mean)
    return MetricComparison(metric, analytic, est.mean, est.half_width, err, err <= tolerance)


def build_comparison(analytic: SystemMetrics, simulated: SimMetrics, tolerance: float,
                     metadata: dict | None = None) -> ComparisonReport:
    """Pair analytic and simulated figures port by port.

    A figure is flagged within tolerance when
    ``|analytic - simulated| / max(|simulated|, 1e-12) <= tolerance``.
    """
    rows = []
    notes = list(analytic.notes)
    for a, s in zip(analytic.per_port, simulated.ports):
        metrics = tuple(_compare(name, getattr(a, attr), getattr(s, attr), tolerance) for name, attr in COMPARED)
        row = ComparisonRow(a.i, a.j, a.label, metrics)
        rows.append(row)
        gap = metrics[0].rel_error
        if not a.homogeneous:
            notes.append(f"port {a.label} ({a.i},{a.j}): relative wait gap {gap:.3%} is attributable to the "
                         f"aggregate service-rate approximation; the simulator honours each berth's own rate")
        elif analytic.erlang_degree > 1 and a.berths > 1:
            notes.append(f"port {a.label} ({a.i},{a.j}): Erlang-{analytic.erlang_degree} service on {a.berths} "
                         f"berths; analytic wait uses the (1+c^2)/2 scaling, measured relative gap {gap:.3%}")
    system = ComparisonRow(0, 0, "TOTAL", tuple(
        _compare(name, getattr(analytic, attr), getattr(simulated, attr), tolerance)
        for name, attr in COMPARED_TOTALS))
    return ComparisonReport(tuple(rows), system, tolerance, analytic, simulated, tuple(notes), dict(metadata or {}))


# -- formatting helpers ------------------------------------------------------

def fmt_float(x: float | None) -> str:
    if x is None:
        return ""
    return format(x, ".17g")


def _cell(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return fmt_float(x)
    return str(x)


def _dump_json(obj: Any, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"cannot serialize non-finite value {obj!r} to JSON")
        text = fmt_float(obj)
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (f"{pad}{json.dumps(str(k))}: {_dump_json(v, indent + 1)}" for k, v in obj.items())
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _dump_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _plain(obj: Any) -> Any:
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj) if f.name != "metadata"}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def _table(title: str, header: list[str], rows: list[list[Any]], footer: list[str] = ()) -> str:
    cells = [[_cell(x) for x in row] for row in rows]
    widths = [max([len(h)] + [len(r[c]) for r in cells]) for c, h in enumerate(header)]
    line = lambda r: "  ".join(v.rjust(w) for v, w in zip(r, widths)).rstrip()  # noqa: E731
    out = [title, line(header), line(["-" * w for w in widths])]
    out += [line(r) for r in cells]
    out += list(footer)
    return "\n".join(out) + "\n"


def _csv(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(x) for x in row])
    return buf.getvalue()


# -- per-report row builders ---------------------------------------------------

def _analytic_rows(m: SystemMetrics) -> list[list[Any]]:
    return [[p.i, p.j, p.label, p.berths, p.arrival_rate, p.utilization, p.base_wait, p.wait,
             p.queue_length, p.population] for p in m.per_port]


def _sim_rows(m: SimMetrics) -> list[list[Any]]:
    return [[p.i, p.j, p.label, p.berths, p.served, p.wait.mean, p.wait.half_width, p.queue_length.mean,
             p.queue_length.half_width, p.population.mean, p.population.half_width, p.utilization.mean,
             p.utilization.half_width, ";".join(fmt_float(b) for b in p.berth_busy)] for p in m.ports]


def _compare_rows(r: ComparisonReport) -> list[list[Any]]:
    out = []
    for row in (*r.rows, r.system):
        for m in row.metrics:
            i, j = ("", "") if row is r.system else (row.i, row.j)
            out.append([i, j, row.label, m.metric, m.analytic, m.simulated, m.half_width, m.rel_error,
                        m.within_tolerance])
    return out


def _stability_rows(s: StabilityReport) -> list[list[Any]]:
    rows: list[list[Any]] = [["", "", s.system_utilization, s.system_stable]]
    rows += [[i, j, rho, rho < 1.0] for i, j, rho in s.port_utilization]
    return rows


def _plan_rows(p: PlanReport) -> list[list[Any]]:
    return [[r.i, r.j, r.label, r.current_S, r.required_S, r.berth_rate, r.EW_current, r.EW_required,
             r.meets_sla] for r in p.rows]


def _kind(obj: Report) -> str:
    for cls, name in ((SystemMetrics, "analytic"), (SimMetrics, "simulation"), (ComparisonReport, "comparison"),
                      (StabilityReport, "stability"), (PlanReport, "plan")):
        if isinstance(obj, cls):
            return name
    raise TypeError(f"not a report: {type(obj).__name__}")


def _json_payload(obj: Report, metadata: dict) -> dict:
    if isinstance(obj, SystemMetrics):
        system = {f.name: _plain(getattr(obj, f.name)) for f in fields(obj) if f.name != "per_port"}
        return {"metadata": metadata, "system": system, "ports": _plain(obj.per_port)}
    if isinstance(obj, SimMetrics):
        system = {name: _plain(getattr(obj, name))
                  for name in ("total_wait", "total_queue", "total_population", "replications", "arrivals")}
        return {"metadata": metadata, "system": system, "ports": _plain(obj.ports)}
    if isinstance(obj, ComparisonReport):
        system = {"row": _plain(obj.system), "tolerance": obj.tolerance, "passed": obj.passed,
                  "notes": list(obj.notes), "analytic": _json_payload(obj.analytic, {}),
                  "simulated": _json_payload(obj.simulated, {})}
        return {"metadata": metadata, "system": system, "ports": _plain(obj.rows)}
    if isinstance(obj, StabilityReport):
        system = {"system_utilization": obj.system_utilization, "stable": obj.stable,
                  "violations": obj.violations()}
        ports = [{"i": i, "j": j, "utilization": rho, "stable": rho < 1.0} for i, j, rho in obj.port_utilization]
        return {"metadata": metadata, "system": system, "ports": ports}
    system = {"sla_wait": obj.sla_wait, "feasible": obj.feasible}
    return {"metadata": metadata, "system": system, "ports": _plain(obj.rows)}


def emit_report(obj: Report, fmt: str = "table", metadata: dict | None = None) -> str:
    """Serialize a report. Output is a pure function of the inputs."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    kind = _kind(obj)
    meta = {"kind": kind, "tool_version": __version__}
    meta.update(getattr(obj, "metadata", None) or {})
    meta.update(metadata or {})

    if fmt == "json":
        return _dump_json(_json_payload(obj, meta)) + "\n"

    if kind == "analytic":
        header, rows = ANALYTIC_HEADER, _analytic_rows(obj)
        footer = [f"system rho = {fmt_float(obj.utilization)}",
                  f"split probabilities p_i = {', '.join(fmt_float(p) for p in obj.split_probabilities)}",
                  f"E[W] (sum over ports) = {fmt_float(obj.total_wait)}",
                  f"E[n] (sum over ports) = {fmt_float(obj.total_queue)}",
                  f"E[Q] (sum over ports) = {fmt_float(obj.total_population)}",
                  f"arrival-weighted mean wait (convenience, not E[W]) = {fmt_float(obj.weighted_mean_wait)}",
                  *(f"note: {n}" for n in obj.notes)]
    elif kind == "simulation":
        header, rows = SIM_HEADER, _sim_rows(obj)
        footer = [f"replications = {obj.replications}, arrivals = {obj.arrivals}",
                  *(f"{name} = {fmt_float(e.mean)} +/- {fmt_float(e.half_width) or 'n/a'}"
                    for name, e in (("total EW", obj.total_wait), ("total En", obj.total_queue),
                                    ("total EQ", obj.total_population)))]
    elif kind == "comparison":
        header, rows = COMPARE_HEADER, _compare_rows(obj)
        footer = [f"tolerance = {fmt_float(obj.tolerance)}; {'PASS' if obj.passed else 'FAIL'}",
                  *(f"note: {n}" for n in obj.notes)]
    elif kind == "stability":
        header, rows = STABILITY_HEADER, _stability_rows(obj)
        footer = [f"violation: {v}" for v in obj.violations()] or ["stable: all utilizations < 1"]
    else:
        header, rows = PLAN_HEADER, _plan_rows(obj)
        footer = [f"sla_wait = {fmt_float(obj.sla_wait)}"]

    if fmt == "csv":
        return _csv(header, rows)
    title = f"{kind} report ({', '.join(f'{k}={v}' for k, v in meta.items() if k != 'kind')})"
    return _table(title, header, rows, footer)


# -- json reading ----------------------------------------------------------------

def _estimate(d: dict) -> Estimate:
    return Estimate(d["mean"], d["half_width"])


def _port_estimate(d: dict) -> PortEstimate:
    return PortEstimate(
        i=d["i"], j=d["j"], label=d["label"], berths=d["berths"],
        wait=_estimate(d["wait"]), queue_length=_estimate(d["queue_length"]),
        population=_estimate(d["population"]), utilization=_estimate(d["utilization"]),
        served=d["served"], berth_busy=tuple(d["berth_busy"]),
    )


def _analytic_from(doc: dict) -> SystemMetrics:
    sysd = dict(doc["system"])
    sysd["split_probabilities"] = tuple(sysd["split_probabilities"])
    sysd["notes"] = tuple(sysd["notes"])
    return SystemMetrics(per_port=tuple(PortMetrics(**p) for p in doc["ports"]), **sysd)


def _sim_from(doc: dict) -> SimMetrics:
    s = doc["system"]
    return SimMetrics(
        ports=tuple(_port_estimate(p) for p in doc["ports"]),
        total_wait=_estimate(s["total_wait"]), total_queue=_estimate(s["total_queue"]),
        total_population=_estimate(s["total_population"]),
        replications=s["replications"], arrivals=s["arrivals"], metadata=doc.get("metadata") or {},
    )


def _row_from(d: dict) -> ComparisonRow:
    return ComparisonRow(d["i"], d["j"], d["label"], tuple(MetricComparison(**m) for m in d["metrics"]))


def parse_report(text: str) -> Report:
    """Rebuild a report object from :func:`emit_report` JSON output."""
    doc = json.loads(text)
    kind = doc["metadata"]["kind"]
    if kind == "analytic":
        return _analytic_from(doc)
    if kind == "simulation":
        return _sim_from(doc)
    if kind == "comparison":
        s = doc["system"]
        return ComparisonReport(
            rows=tuple(_row_from(r) for r in doc["ports"]), system=_row_from(s["row"]),
            tolerance=s["tolerance"], analytic=_analytic_from(s["analytic"]),
            simulated=_sim_from(s["simulated"]), notes=tuple(s["notes"]), metadata=doc["metadata"],
        )
    if kind == "stability":
        return StabilityReport(doc["system"]["system_utilization"],
                               tuple((p["i"], p["j"], p["utilization"]) for p in doc["ports"]))
    if kind == "plan":
        return PlanReport(doc["system"]["sla_wait"], tuple(PlanRow(**r) for r in doc["ports"]), doc["metadata"])
    raise ValueError(f"unknown report kind {kind!r}")
