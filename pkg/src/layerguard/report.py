"""Stable serializations of a run: metrics (JSON or CSV), traces, and the report.

JSON keys are sorted and the CSV column order is fixed, so identical runs
give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .engine import SimulationResult
from .metrics import COUNTER_NAMES, DENIAL_COUNTERS, ORIGINS, Counters, Metrics, to_seconds
from .model import INSPECTION_LAYERS, LayerId, SessionTrace
from .scenario import scenario_to_dict
from .topology import TierGraph, build_hierarchy

CSV_HEADER = (
    "bin_start",
    "origin",
    "initiated",
    "authorized",
    "denied_fw",
    "denied_meta",
    "denied_vault",
    "denied_ips",
    "denied_antimal",
    "dropped",
    "anomalies",
    "app_accesses",
)

# Firewalls verify VM instance ids and sit in IaaS (NIST layer 4); the
# session-inspection controls sit in PaaS (NIST layer 5).
NIST_LAYERS = {
    LayerId.FW: ("IaaS", 4),
    LayerId.META: ("PaaS", 5),
    LayerId.VAULT: ("PaaS", 5),
    LayerId.IPS: ("PaaS", 5),
    LayerId.ANTIMAL: ("PaaS", 5),
}


def _dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def nist_mapping(graph: TierGraph | None = None) -> dict:
    layers = {layer.name: {"category": cat, "nist_layer": n} for layer, (cat, n) in NIST_LAYERS.items()}
    nodes = {}
    if graph is not None:
        for cid in sorted(graph.controls):
            gates = graph.controls[cid].gate_layers
            cat = "IaaS" if all(NIST_LAYERS[g][0] == "IaaS" for g in gates) else "PaaS"
            nodes[cid] = {"category": cat, "gates": [g.name for g in gates]}
    return {"layers": layers, "control_nodes": nodes}


def metrics_json(metrics: Metrics) -> str:
    return _dumps(metrics.to_dict())


def metrics_csv(metrics: Metrics) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for i, b in enumerate(metrics.bins):
        for origin in ORIGINS:
            c = b[origin]
            writer.writerow([repr(metrics.bin_start(i)), origin] + [getattr(c, name) for name in CSV_HEADER[2:]])
    return buf.getvalue()


def read_metrics_csv(text: str, bin_width: float) -> Metrics:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    bins: list[dict[str, Counters]] = []
    for row in reader:
        if row["origin"] == ORIGINS[0]:
            bins.append({})
        bins[-1][row["origin"]] = Counters(**{name: int(row[name]) for name in COUNTER_NAMES})
    return Metrics(bin_width=bin_width, bins=bins)


def trace_to_dict(t: SessionTrace) -> dict:
    return {
        "session_id": t.session_id,
        "origin": t.origin,
        "archetype": t.archetype,
        "source_vm": t.source_vm,
        "tenant_id": t.tenant_id,
        "destination": t.destination,
        "arrival": to_seconds(t.arrival),
        "outcome": t.outcome.value,
        "denial_layer": t.denial_layer.name if t.denial_layer else None,
        "challenged": list(t.challenged),
        "verdicts": [
            {"layer": v.layer.name, "flag": v.flag, "reason": v.reason, "time": to_seconds(at)}
            for v, at in zip(t.verdicts, t.timestamps)
        ],
        "evidence": [e.to_dict() for e in t.evidence],
        "app_access": None if t.app_access is None else to_seconds(t.app_access),
    }


def traces_json(traces: list[SessionTrace]) -> str:
    return _dumps([trace_to_dict(t) for t in traces])


def _summary(counters: Counters) -> dict:
    return {
        "initiated": counters.initiated,
        "authorized": counters.authorized,
        "denied_by_layer": {layer.name: counters.denied(layer) for layer in INSPECTION_LAYERS},
        "dropped": counters.dropped,
        "anomalies": counters.anomalies,
        "app_accesses": counters.app_accesses,
    }


def build_report(result: SimulationResult) -> dict:
    s = result.scenario
    latencies = [t.latency for t in result.traces if t.outcome.value == "authorized"]
    return {
        "scenario": s.name,
        "seed": s.seed,
        "summary": {o: _summary(result.metrics.totals(o)) for o in ORIGINS},
        "mean_authorized_latency": to_seconds(sum(latencies)) / len(latencies) if latencies else None,
        "nist_mapping": nist_mapping(build_hierarchy(s.hierarchy)),
        "config": scenario_to_dict(s),
        "series": result.metrics.to_dict()["bins"],
    }


def write_run(result: SimulationResult, out_dir: str | Path, fmt: str = "json") -> dict[str, Path]:
    if fmt not in ("json", "csv"):
        raise ValueError(f"format must be 'json' or 'csv', got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out / f"metrics.{fmt}",
        "traces": out / "traces.json",
        "report": out / "report.json",
    }
    metrics_text = metrics_json(result.metrics) if fmt == "json" else metrics_csv(result.metrics)
    paths["metrics"].write_text(metrics_text, encoding="utf-8")
    paths["traces"].write_text(traces_json(result.traces), encoding="utf-8")
    paths["report"].write_text(_dumps(build_report(result)), encoding="utf-8")
    return paths


def load_report(run_dir: str | Path) -> dict:
    return json.loads((Path(run_dir) / "report.json").read_text(encoding="utf-8"))


def format_summary(report: dict) -> str:
    lines = [f"scenario {report['scenario']} (seed {report['seed']})"]
    header = f"{'origin':<9}{'initiated':>10}{'authorized':>11}" + "".join(
        f"{'den_' + layer.name.lower():>13}" for layer in INSPECTION_LAYERS
    ) + f"{'anomalies':>10}{'app':>8}"
    lines.append(header)
    for origin in ORIGINS:
        s = report["summary"][origin]
        row = f"{origin:<9}{s['initiated']:>10}{s['authorized']:>11}" + "".join(
            f"{s['denied_by_layer'][layer.name]:>13}" for layer in INSPECTION_LAYERS
        ) + f"{s['anomalies']:>10}{s['app_accesses']:>8}"
        lines.append(row)
    if report.get("mean_authorized_latency") is not None:
        lines.append(f"mean authorized session latency: {report['mean_authorized_latency'] * 1e3:.3f} ms")
    lines.append("NIST mapping:")
    for name, tag in report["nist_mapping"]["layers"].items():
        lines.append(f"  {name:<8} {tag['category']} (layer {tag['nist_layer']})")
    for cid, tag in report["nist_mapping"]["control_nodes"].items():
        lines.append(f"  control {cid:<3} {tag['category']} gates {','.join(tag['gates'])}")
    return "\n".join(lines)


__all__ = [
    "CSV_HEADER",
    "DENIAL_COUNTERS",
    "NIST_LAYERS",
    "build_report",
    "format_summary",
    "load_report",
    "metrics_csv",
    "metrics_json",
    "nist_mapping",
    "read_metrics_csv",
    "trace_to_dict",
    "traces_json",
    "write_run",
]
