# cli/experiment.py
"""
Experiment manifests: a seeded DAG of pipeline steps plus report tables.

A manifest is JSON:

    {"name": "...", "seed": 7, "inputs": [],
     "steps": [{"id": "synth", "kind": "synth", "params": {"out": "lanes.jsonl", ...}},
               {"id": "gt-short-20", "kind": "gen-gt", "params": {"input": "lanes.jsonl", ...}},
               ...]}

File parameters are relative to the working directory. A step runs after
the steps that produce its inputs and after everything in ``depends_on``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from graphlib import CycleError, TopologicalSorter
from typing import Dict, List, Optional, Sequence

from cli import __version__
from cli import commands
from lanes.errors import InvalidConfig, LanePatchError, StepFailed
from store.lane_store import read_json, write_json, write_text

# which params of each step kind name files it reads / writes
STEP_FILES = {
    "synth": ((), ("out",)),
    "gen-gt": (("input",), ("out",)),
    "ep-infer": (("input",), ("out",)),
    "eval": (("gt", "pred"), ("out",)),
    "report": (("reports",), ("markdown", "csv", "json")),
}
REQUIRED = {
    "synth": ("out",),
    "gen-gt": ("input", "out", "mode", "m"),
    "ep-infer": ("input", "out"),
    "eval": ("gt", "pred", "out"),
    "report": ("reports",),
}


def derive_seed(seed: int, step_id: str) -> int:
    """Stable sub-seed: first 8 bytes of sha256("{seed}:{step_id}") mod 2**31."""
    digest = hashlib.sha256(f"{seed}:{step_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 31)


def _as_list(value) -> List[str]:
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass
class Step:
    id: str
    kind: str
    params: dict = field(default_factory=dict)
    depends_on: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.id:
            raise InvalidConfig("every step needs an id")
        if self.kind not in STEP_FILES:
            raise InvalidConfig(f"step {self.id!r}: unknown kind {self.kind!r}")
        missing = [k for k in REQUIRED[self.kind] if k not in self.params]
        if missing:
            raise InvalidConfig(f"step {self.id!r}: missing params {', '.join(missing)}")

    @property
    def inputs(self) -> List[str]:
        return [p for key in STEP_FILES[self.kind][0] for p in _as_list(self.params.get(key))]

    @property
    def outputs(self) -> List[str]:
        return [p for key in STEP_FILES[self.kind][1] for p in _as_list(self.params.get(key))]


@dataclass
class ExperimentManifest:
    name: str = "experiment"
    seed: int = 0
    version: str = __version__
    inputs: List[str] = field(default_factory=list)
    steps: List[Step] = field(default_factory=list)

    def __post_init__(self):
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidConfig(f"manifest seed must be a non-negative integer, got {self.seed!r}")
        self.steps = [s if isinstance(s, Step) else Step(**s) for s in self.steps]
        ids = [s.id for s in self.steps]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise InvalidConfig(f"duplicate step ids: {', '.join(dupes)}")
        self._graph = self._build_graph()
        self.execution_order()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentManifest":
        if not isinstance(data, dict):
            raise InvalidConfig("manifest must be a JSON object")
        known = {"name", "seed", "version", "inputs", "steps"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfig(f"unknown manifest keys: {', '.join(unknown)}")
        try:
            steps = [Step(**s) for s in data.get("steps", [])]
        except TypeError as exc:
            raise InvalidConfig(f"malformed step: {exc}") from None
        return cls(name=data.get("name", "experiment"), seed=data.get("seed", 0),
                   version=data.get("version", __version__), inputs=list(data.get("inputs", [])), steps=steps)

    @classmethod
    def load(cls, path: str) -> "ExperimentManifest":
        return cls.from_dict(read_json(path))

    def _build_graph(self) -> Dict[str, set]:
        producers = {}
        for step in self.steps:
            for path in step.outputs:
                if path in producers or path in self.inputs:
                    raise InvalidConfig(f"file {path!r} is written by more than one source")
                producers[path] = step.id
        ids = {s.id for s in self.steps}
        graph = {}
        for step in self.steps:
            deps = set()
            for dep in step.depends_on:
                if dep not in ids:
                    raise InvalidConfig(f"step {step.id!r} depends on unknown step {dep!r}")
                deps.add(dep)
            for path in step.inputs:
                if path in producers:
                    deps.add(producers[path])
                elif path not in self.inputs:
                    raise InvalidConfig(f"step {step.id!r} reads undeclared file {path!r}")
            graph[step.id] = deps
        return graph

    def execution_order(self) -> List[Step]:
        """Topological order; ties broken by position in the manifest."""
        position = {s.id: i for i, s in enumerate(self.steps)}
        by_id = {s.id: s for s in self.steps}
        sorter = TopologicalSorter(self._graph)
        try:
            sorter.prepare()
        except CycleError as exc:
            raise InvalidConfig(f"steps form a cycle: {' -> '.join(exc.args[1])}") from None
        order = []
        while sorter.is_active():
            ready = sorted(sorter.get_ready(), key=position.get)
            for sid in ready:
                order.append(by_id[sid])
                sorter.done(sid)
        return order


# -----------------------
# Running
# -----------------------
def _run_step(step: Step, manifest: ExperimentManifest, workdir: str, threads: int, logger=None) -> dict:
    p = dict(step.params)

    def path(key):
        return os.path.join(workdir, p[key])

    if step.kind == "synth":
        config = dict(p.get("config", {}))
        config.setdefault("seed", p.get("seed", derive_seed(manifest.seed, step.id)))
        return commands.run_synth(path("out"), preset=p.get("preset", "openlane-like"), scenes=p.get("scenes"),
                                  config=config, threads=threads, logger=logger)
    if step.kind == "gen-gt":
        return commands.run_gen_gt(path("input"), path("out"), p["mode"], p["m"],
                                   range_text=p.get("range", "3:103"), grid_values=p.get("grid_values"),
                                   logger=logger)
    if step.kind == "ep-infer":
        return commands.run_ep_infer(path("input"), path("out"), patch_single=p.get("patch_single", False),
                                     logger=logger)
    if step.kind == "eval":
        cfg = commands.build_eval_config(
            eval_step=p.get("eval_step"), threshold=p.get("threshold", 1.5), lane_iou=p.get("lane_iou", 0.75),
            patch_single=p.get("patch_single", False), tp_rule=p.get("tp_rule", "per_side"),
        )
        result = commands.run_eval(path("gt"), path("pred"), path("out"), cfg=cfg, labels=p.get("labels"),
                                   iou_sweep=p.get("iou_sweep"), buckets=p.get("buckets"),
                                   threads=threads, logger=logger)
        return {"step": "eval", "out": path("out"), "f1": result["metrics"]["f1"]}
    reports = [read_json(os.path.join(workdir, r)) for r in _as_list(p["reports"])]
    written = write_report(reports, manifest,
                           markdown=path("markdown") if "markdown" in p else None,
                           csv_path=path("csv") if "csv" in p else None,
                           json_path=path("json") if "json" in p else None)
    return {"step": "report", "written": written}


def run_experiment(manifest: ExperimentManifest, workdir: str, threads: int = 1, logger=None) -> List[str]:
    """Run every step in order; returns the files written by report steps."""
    os.makedirs(workdir, exist_ok=True)
    written = []
    for step in manifest.execution_order():
        if logger:
            logger.info({"component": "experiment", "action": "step_start", "step_id": step.id, "kind": step.kind})
        try:
            summary = _run_step(step, manifest, workdir, threads, logger)
        except (LanePatchError, OSError, KeyError, TypeError) as exc:
            if logger:
                logger.error({"component": "experiment", "action": "step_failed", "step_id": step.id,
                              "error": str(exc)})
            raise StepFailed(step.id, str(exc)) from exc
        if logger:
            logger.info({"component": "experiment", "action": "step_done", "step_id": step.id, **summary})
        if step.kind == "report":
            written.extend(summary["written"])
    return written


# -----------------------
# Report tables
# -----------------------
COLUMNS = ["Set", "Mode", "M", "Rec", "Pre", "F1", "X near", "X far", "Z near", "Z far"]
PERCENT = {"Rec": "recall", "Pre": "precision", "F1": "f1"}
ERRORS = {"X near": "x_err_near", "X far": "x_err_far", "Z near": "z_err_near", "Z far": "z_err_far"}


def round_half_even(value: float, places: int) -> str:
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_EVEN))


def report_rows(reports: Sequence[dict]) -> List[dict]:
    rows = []
    for rep in reports:
        labels, metrics = rep.get("labels", {}), rep["metrics"]
        row = {"Set": str(labels.get("set", "")), "Mode": str(labels.get("mode", "")), "M": labels.get("m", "")}
        for col, key in PERCENT.items():
            row[col] = round_half_even(100.0 * metrics[key], 1)
        for col, key in ERRORS.items():
            row[col] = round_half_even(metrics[key], 3)
        rows.append(row)

    def key(row):
        m = row["M"]
        return (m if isinstance(m, int) else float("inf"), row["Mode"], row["Set"])

    return sorted(rows, key=key)


def report_table(reports: Sequence[dict], layout: str = "markdown") -> str:
    """Rows sorted by (M, mode); Rec/Pre/F1 in percent with 1 decimal, errors in metres with 3."""
    rows = report_rows(reports)
    if layout == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([row[c] for c in COLUMNS])
        return buf.getvalue()
    if layout != "markdown":
        raise InvalidConfig(f"unknown table layout {layout!r}")
    lines = ["| " + " | ".join(COLUMNS) + " |", "|" + "|".join("---" for _ in COLUMNS) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(str(row[c]) for c in COLUMNS) + " |")
    return "\n".join(lines) + "\n"


def write_report(reports: Sequence[dict], manifest: Optional[ExperimentManifest] = None,
                 markdown: Optional[str] = None, csv_path: Optional[str] = None,
                 json_path: Optional[str] = None) -> List[str]:
    written = []
    if markdown:
        title = f"# {manifest.name}\n\n" if manifest else ""
        write_text(markdown, title + report_table(reports, "markdown"))
        written.append(markdown)
    if csv_path:
        write_text(csv_path, report_table(reports, "csv"))
        written.append(csv_path)
    if json_path:
        payload = {"version": __version__, "rows": report_rows(reports), "reports": list(reports)}
        if manifest:
            payload.update(name=manifest.name, seed=manifest.seed)
        write_json(json_path, payload)
        written.append(json_path)
    return written
