"""Trace and report files.

Every file starts with a header naming the engine version, the scenario seed
and the config hash.  JSONL files carry it as a first ``{"type": "header"}``
record; CSV files as ``#`` comment lines before the column row.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from . import __version__
from .game import History, StageRecord
from .numeric import fmt, to_jsonable
from .scenario import Scenario
from .strategies import PigouLayout

ENGINE = "planroute"


def header(scenario: Scenario, config_hash: str, kind: str) -> Dict[str, object]:
    return {
        "type": "header",
        "kind": kind,
        "engine": ENGINE,
        "version": __version__,
        "seed": scenario.seed,
        "config_hash": config_hash,
        "scenario": scenario.name,
        "mode": scenario.mode,
    }


def _edge_names(scenario: Scenario) -> List[str]:
    return [e.name or f"e{i}" for i, e in enumerate(scenario.network.edges)]


def stage_record(scenario: Scenario, record: StageRecord, layout: Optional[PigouLayout] = None) -> Dict[str, object]:
    layout = layout or scenario.layout
    names = _edge_names(scenario)
    return {
        "type": "stage",
        "stage": record.stage,
        "bottom_fractions": [fmt(a.fraction_on(layout.bottom_path)) for a in record.assignments],
        "edge_flows": {name: fmt(f) for name, f in zip(names, record.edge_flows)},
        "total_cost": fmt(record.total_cost),
        "planner_costs": [fmt(c) for c in record.planner_costs],
        "defections": [
            {"planner": d.planner + 1, "cars": str(d.cars), "mass": fmt(d.mass), "gain": fmt(d.gain)}
            for d in record.deviations
        ],
    }


def _dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=False, ensure_ascii=False)


def trace_jsonl(scenario: Scenario, history: History, config_hash: str) -> str:
    lines = [_dumps(header(scenario, config_hash, "trace"))]
    layout = scenario.layout
    lines += [_dumps(stage_record(scenario, r, layout)) for r in history.records]
    return "\n".join(lines) + "\n"


def trace_csv(scenario: Scenario, history: History, config_hash: str) -> str:
    buf = io.StringIO()
    h = header(scenario, config_hash, "trace")
    for key in ("engine", "version", "seed", "config_hash"):
        buf.write(f"# {key}={h[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["stage", "bottom_flow", "total_cost"])
    layout = scenario.layout
    for r in history.records:
        writer.writerow([r.stage, fmt(layout.bottom_flow(r.edge_flows)), fmt(r.total_cost)])
    return buf.getvalue()


def report_jsonl(scenario: Scenario, records: Iterable[Dict[str, object]], config_hash: str, kind: str = "report") -> str:
    lines = [_dumps(header(scenario, config_hash, kind))]
    lines += [_dumps(dict(type="record", **r)) for r in records]
    return "\n".join(lines) + "\n"


def rows_csv(rows: Iterable[Dict[str, object]], columns: List[str], meta: Dict[str, object]) -> str:
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: to_jsonable(v) for k, v in row.items()})
    return buf.getvalue()


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_jsonl(path) -> List[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
