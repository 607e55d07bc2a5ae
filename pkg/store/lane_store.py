# store/lane_store.py
"""
JSONL persistence for lanes, scenes and reports.

One lane per line. Dense lanes carry "points"; sparse lanes carry a "grid"
plus per-point "x", "z", "vis" (and "y", "s", "e", "flags" when present).
Prediction files may name the deltas "s_hat"/"e_hat" instead of "s"/"e".
Every write goes to a temp file in the target directory and is then renamed
over the target.
"""

import json
import os
import tempfile
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np

from lanes.errors import InvalidConfig, InvalidLane, LanePatchError
from lanes.lane_core import (
    VISIBILITY_REPAIRED,
    DenseLane,
    PresetGrid,
    SparseLane,
    is_contiguous,
    make_grid,
    repair_visibility,
)

Lane = Union[DenseLane, SparseLane]


# -----------------------
# Files
# -----------------------
def _atomic_write(path: str, text: str):
    folder = os.path.dirname(path) or "."
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def write_jsonl(path: str, records: Iterable[dict]):
    _atomic_write(path, "".join(dumps(r) + "\n" for r in records))


def write_json(path: str, obj):
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_text(path: str, text: str):
    _atomic_write(path, text)


def read_jsonl(path: str) -> List[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidLane(f"{path}:{lineno}: not valid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise InvalidLane(f"{path}:{lineno}: expected an object per line")
            records.append(rec)
    return records


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: not valid JSON ({exc.msg})") from None


# -----------------------
# Records
# -----------------------
def _floats(arr) -> List[float]:
    return [float(v) for v in np.asarray(arr).ravel()]


def grid_to_record(grid: PresetGrid) -> dict:
    rec = {"m": grid.m, "start": grid.range_start, "end": grid.range_end}
    if not grid.same_as(make_grid(grid.m, grid.range_start, grid.range_end)):
        rec["values"] = _floats(grid.y_values)
    return rec


def record_to_grid(rec: dict) -> PresetGrid:
    try:
        if "values" in rec:
            return PresetGrid(rec["values"], rec.get("start", rec["values"][0]), rec.get("end", rec["values"][-1]))
        return make_grid(int(rec["m"]), float(rec["start"]), float(rec["end"]))
    except (KeyError, TypeError, IndexError):
        raise InvalidLane(f"malformed grid record {rec!r}") from None


def dense_to_record(lane: DenseLane, scene_id: str = "") -> dict:
    return {
        "scene_id": scene_id,
        "lane_id": lane.lane_id,
        "category": lane.category,
        "points": [_floats(p) for p in lane.points],
    }


def record_to_dense(rec: dict) -> DenseLane:
    if "points" not in rec:
        raise InvalidLane(f"lane {rec.get('lane_id')!r}: dense record without points")
    return DenseLane(rec["points"], category=rec.get("category", 0), lane_id=str(rec.get("lane_id", "")))


def sparse_to_record(lane: SparseLane, scene_id: str = "") -> dict:
    rec = {
        "scene_id": scene_id,
        "lane_id": lane.lane_id,
        "category": lane.category,
        "grid": grid_to_record(lane.grid),
        "x": _floats(lane.x),
        "z": _floats(lane.z),
        "vis": [bool(v) for v in lane.vis],
        "flags": list(lane.flags),
    }
    if not np.array_equal(lane.y, lane.grid.y_values):
        rec["y"] = _floats(lane.y)
    if lane.has_patch:
        rec["s"] = [_floats(row) for row in lane.s]
        rec["e"] = [_floats(row) for row in lane.e]
    return rec


def record_to_sparse(rec: dict, repair: bool = False, logger=None) -> SparseLane:
    """
    Sparse lane from a record. With repair=True a non-contiguous visibility
    mask is filled between its first and last visible point and the lane is
    flagged ``visibility_repaired``.
    """
    lane_id = str(rec.get("lane_id", ""))
    try:
        grid = record_to_grid(rec["grid"])
        vis = np.asarray(rec["vis"], dtype=bool)
        x, z = rec["x"], rec["z"]
    except KeyError as exc:
        raise InvalidLane(f"lane {lane_id!r}: sparse record missing {exc.args[0]!r}") from None
    flags = list(rec.get("flags", []))
    if not is_contiguous(vis):
        if not repair:
            raise InvalidLane(f"lane {lane_id!r}: visibility mask is not contiguous")
        vis = repair_visibility(vis)
        if VISIBILITY_REPAIRED not in flags:
            flags.append(VISIBILITY_REPAIRED)
        if logger:
            logger.warning({"component": "store", "action": "visibility_repaired", "lane_id": lane_id})
    s = rec.get("s", rec.get("s_hat"))
    e = rec.get("e", rec.get("e_hat"))
    return SparseLane(grid=grid, x=x, z=z, vis=vis, s=s, e=e, category=rec.get("category", 0),
                      lane_id=lane_id, y=rec.get("y"), flags=tuple(flags))


def record_to_lane(rec: dict, repair: bool = False, logger=None) -> Lane:
    if "points" in rec:
        return record_to_dense(rec)
    return record_to_sparse(rec, repair=repair, logger=logger)


def lane_to_record(lane: Lane, scene_id: str = "") -> dict:
    if isinstance(lane, DenseLane):
        return dense_to_record(lane, scene_id)
    return sparse_to_record(lane, scene_id)


# -----------------------
# Scenes
# -----------------------
def group_by_scene(items: Iterable[Tuple[str, Lane]]) -> Dict[str, List[Lane]]:
    """Scenes in first-seen order, lanes in file order."""
    scenes: Dict[str, List[Lane]] = {}
    for scene_id, lane in items:
        scenes.setdefault(scene_id, []).append(lane)
    return scenes


def load_scenes(path: str, repair: bool = False, logger=None) -> Dict[str, List[Lane]]:
    items = []
    for rec in read_jsonl(path):
        try:
            lane = record_to_lane(rec, repair=repair, logger=logger)
        except LanePatchError as exc:
            raise type(exc)(f"{path}: {exc}") from None
        items.append((str(rec.get("scene_id", "")), lane))
    return group_by_scene(items)


def scenes_to_records(scenes: Dict[str, List[Lane]]) -> List[dict]:
    return [lane_to_record(lane, sid) for sid, lanes in scenes.items() for lane in lanes]


def save_scenes(path: str, scenes: Dict[str, List[Lane]]):
    write_jsonl(path, scenes_to_records(scenes))
