# tools/gt_gen.py
"""
Training ground-truth generation from dense lanes.

Modes:
  short       - preset points inside the lane's y extent only (truncates both ends)
  long        - extent widened by one grid interval on each side
  persformer  - extent widened by 5 m, strict comparisons
  anchor      - same rule as persformer (Anchor3DLane / LATR generators)
  patched     - short-mode mask plus start/end deltas at every preset point

Points marked visible outside the lane extent get linearly extrapolated x/z.
"""

from __future__ import annotations

from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from lanes.errors import InvalidConfig, InvalidLane, NoOverlap
from lanes.lane_core import SINGLE_VISIBLE, DenseLane, PresetGrid, SparseLane, is_contiguous, make_grid, sample

FIXED_MARGIN = 5.0


class GtMode(str, Enum):
    SHORT = "short"
    LONG = "long"
    PERSFORMER = "persformer"
    ANCHOR_LATR = "anchor"
    PATCHED = "patched"

    @classmethod
    def parse(cls, name) -> "GtMode":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise InvalidConfig(f"unknown GT mode {name!r} (expected one of: {valid})") from None


def visibility_mask(lane: DenseLane, grid: PresetGrid, mode) -> np.ndarray:
    mode = GtMode.parse(mode)
    g = grid.y_values
    lo, hi = lane.y_min, lane.y_max
    if mode in (GtMode.SHORT, GtMode.PATCHED):
        return (g >= lo) & (g <= hi)
    if mode is GtMode.LONG:
        delta = grid.spacing
        return (g >= lo - delta) & (g <= hi + delta)
    return (g > lo - FIXED_MARGIN) & (g < hi + FIXED_MARGIN)


def compute_patch_deltas(lane: DenseLane, grid: PresetGrid, vis) -> Tuple[np.ndarray, np.ndarray]:
    """
    Signed 3D offsets from every preset point to the lane's start and end vertex.

    Deltas are produced for all M points, visible or not, since any point may
    end up as the first or last valid one at inference.
    """
    if not np.any(vis):
        raise NoOverlap(f"lane {lane.lane_id!r}: no visible preset point")
    g = grid.y_values
    xs, zs = sample(lane, g, extrapolate=True)
    anchors = np.stack([xs, g, zs], axis=1)
    return lane.start[None, :] - anchors, lane.end[None, :] - anchors


def generate_training_gt(lane: DenseLane, grid: PresetGrid, mode) -> SparseLane:
    mode = GtMode.parse(mode)
    vis = visibility_mask(lane, grid, mode)
    n_visible = int(vis.sum())
    if n_visible == 0:
        raise NoOverlap(
            f"lane {lane.lane_id!r} [{lane.y_min:.3f}, {lane.y_max:.3f}] "
            f"hits no preset point of [{grid.range_start}, {grid.range_end}]"
        )
    if not is_contiguous(vis):
        raise InvalidLane(f"lane {lane.lane_id!r}: visible preset points are not one contiguous run")

    xs, zs = sample(lane, grid.y_values, extrapolate=True)
    x = np.where(vis, xs, 0.0)
    z = np.where(vis, zs, 0.0)

    s = e = None
    if mode is GtMode.PATCHED:
        s, e = compute_patch_deltas(lane, grid, vis)

    flags = (SINGLE_VISIBLE,) if n_visible == 1 else ()
    return SparseLane(
        grid=grid, x=x, z=z, vis=vis, s=s, e=e,
        category=lane.category, lane_id=lane.lane_id, flags=flags,
    )


def generate_scene_gt(
    lanes: Sequence[DenseLane],
    grid: PresetGrid,
    mode,
    logger=None,
) -> Tuple[List[SparseLane], List[str]]:
    """Generate GT for a batch; lanes without overlap are skipped and reported."""
    mode = GtMode.parse(mode)
    out: List[SparseLane] = []
    skipped: List[str] = []
    for lane in lanes:
        try:
            gt = generate_training_gt(lane, grid, mode)
        except NoOverlap as exc:
            skipped.append(lane.lane_id)
            if logger:
                logger.warning({"component": "gt_gen", "action": "skip_no_overlap",
                                "lane_id": lane.lane_id, "error": str(exc)})
            continue
        if logger and gt.has_flag(SINGLE_VISIBLE):
            logger.debug({"component": "gt_gen", "action": "single_visible", "lane_id": lane.lane_id})
        out.append(gt)
    return out, skipped


def parse_range(text: str) -> Tuple[float, float]:
    """'3:103' -> (3.0, 103.0)"""
    try:
        lo, hi = (float(p) for p in str(text).split(":"))
    except ValueError:
        raise InvalidConfig(f"range must look like START:END, got {text!r}") from None
    return lo, hi


def grid_from_options(m: int, range_text: str = "3:103", values: Optional[Sequence[float]] = None) -> PresetGrid:
    if values:
        return PresetGrid.from_values(values)
    lo, hi = parse_range(range_text)
    return make_grid(m, lo, hi)
