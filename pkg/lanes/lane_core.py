# lanes/lane_core.py
"""
Lane geometry primitives.

DenseLane is the annotated polyline ("original ground truth"), PresetGrid the
fixed y positions a detector predicts at, and SparseLane the per-preset-point
representation used for training targets and predictions, optionally carrying
the signed start/end patch deltas of every preset point.

Coordinates are metres in the ground frame: x right, y forward, z up.
Lane length is the longitudinal extent y_max - y_min, not arc length.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from lanes.errors import DimensionMismatch, InvalidConfig, InvalidLane, OutOfRange, TooFewValid

# flags carried on SparseLane.flags
SINGLE_VISIBLE = "single_visible"
PATCHED = "patched"
TOO_FEW_VALID = "too_few_valid"
VISIBILITY_REPAIRED = "visibility_repaired"


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# -----------------------
# Dense lanes
# -----------------------
@dataclass(frozen=True, eq=False)
class DenseLane:
    points: np.ndarray
    category: int = 0
    lane_id: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidLane(f"lane {self.lane_id!r}: points must have shape (K, 3), got {pts.shape}")
        if pts.shape[0] < 2:
            raise InvalidLane(f"lane {self.lane_id!r}: needs at least 2 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise InvalidLane(f"lane {self.lane_id!r}: non-finite coordinate")
        # unsorted input is rejected, never reordered
        if np.any(np.diff(pts[:, 1]) <= 0):
            raise InvalidLane(f"lane {self.lane_id!r}: y must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "category", int(self.category))

    @property
    def xs(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def zs(self) -> np.ndarray:
        return self.points[:, 2]

    @property
    def y_min(self) -> float:
        return float(self.points[0, 1])

    @property
    def y_max(self) -> float:
        return float(self.points[-1, 1])

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


def lane_length(lane: DenseLane) -> float:
    return lane.y_max - lane.y_min


# -----------------------
# Preset grids
# -----------------------
@dataclass(frozen=True, eq=False)
class PresetGrid:
    y_values: np.ndarray
    range_start: float
    range_end: float

    def __post_init__(self):
        ys = np.array(self.y_values, dtype=float)
        start, end = float(self.range_start), float(self.range_end)
        if ys.ndim != 1 or ys.size < 2:
            raise InvalidConfig(f"preset grid needs at least 2 values, got {ys.size}")
        if not end > start:
            raise InvalidConfig(f"range_end ({end}) must exceed range_start ({start})")
        if np.any(np.diff(ys) <= 0):
            raise InvalidConfig("preset grid values must be strictly ascending")
        if ys[0] < start - 1e-9 or ys[-1] > end + 1e-9:
            raise InvalidConfig(f"preset grid values leave [{start}, {end}]")
        ys.setflags(write=False)
        object.__setattr__(self, "y_values", ys)
        object.__setattr__(self, "range_start", start)
        object.__setattr__(self, "range_end", end)

    @property
    def m(self) -> int:
        return int(self.y_values.size)

    @property
    def spacing(self) -> float:
        """Nominal interval between preset points, (end - start) / (M - 1)."""
        return (self.range_end - self.range_start) / (self.m - 1)

    @property
    def uniform(self) -> bool:
        return bool(np.allclose(np.diff(self.y_values), self.spacing, rtol=0.0, atol=1e-9))

    @classmethod
    def from_values(cls, values) -> "PresetGrid":
        ys = np.asarray(values, dtype=float)
        if ys.size < 2:
            raise InvalidConfig(f"preset grid needs at least 2 values, got {ys.size}")
        return cls(ys, float(ys[0]), float(ys[-1]))

    def same_as(self, other: "PresetGrid") -> bool:
        return (
            self.m == other.m
            and self.range_start == other.range_start
            and self.range_end == other.range_end
            and bool(np.array_equal(self.y_values, other.y_values))
        )


def make_grid(m: int, range_start: float, range_end: float) -> PresetGrid:
    if int(m) != m or m < 2:
        raise InvalidConfig(f"M must be an integer >= 2, got {m}")
    if not range_end > range_start:
        raise InvalidConfig(f"range_end ({range_end}) must exceed range_start ({range_start})")
    return PresetGrid(np.linspace(range_start, range_end, int(m)), range_start, range_end)


# -----------------------
# Interpolation
# -----------------------
def _extend(p_near: np.ndarray, p_far: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # straight-line continuation of the segment p_far -> p_near beyond p_near
    dy = p_near[1] - p_far[1]
    t = (ys - p_near[1]) / dy
    return p_near[0] + t * (p_near[0] - p_far[0]), p_near[2] + t * (p_near[2] - p_far[2])


def sample(lane: DenseLane, ys, extrapolate: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Linear interpolation of x and z at every y in ``ys``.

    With extrapolate=True, queries outside the lane extent continue the first
    or last segment; otherwise they raise OutOfRange.
    """
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    below = ys < lane.y_min
    above = ys > lane.y_max
    if not extrapolate and (below.any() or above.any()):
        bad = ys[below | above][0]
        raise OutOfRange(f"y={bad} outside lane extent [{lane.y_min}, {lane.y_max}]")
    xs = np.interp(ys, lane.ys, lane.xs)
    zs = np.interp(ys, lane.ys, lane.zs)
    if below.any():
        xs[below], zs[below] = _extend(lane.points[0], lane.points[1], ys[below])
    if above.any():
        xs[above], zs[above] = _extend(lane.points[-1], lane.points[-2], ys[above])
    return xs, zs


def interpolate(lane: DenseLane, y: float) -> Tuple[float, float]:
    xs, zs = sample(lane, [y])
    return float(xs[0]), float(zs[0])


class Interpolator:
    """Callable view of a dense lane: ``Interpolator(lane)(y) -> (x, z)``."""

    def __init__(self, source: DenseLane, kind: str = "linear"):
        if kind != "linear":
            raise InvalidConfig(f"unsupported interpolation kind {kind!r}")
        self.source = source
        self.kind = kind

    def __call__(self, y: float) -> Tuple[float, float]:
        return interpolate(self.source, y)

    def sample(self, ys, extrapolate: bool = False):
        return sample(self.source, ys, extrapolate=extrapolate)


# -----------------------
# Visibility helpers
# -----------------------
def visible_span(vis) -> Optional[Tuple[int, int]]:
    idx = np.flatnonzero(np.asarray(vis, dtype=bool))
    if idx.size == 0:
        return None
    return int(idx[0]), int(idx[-1])


def is_contiguous(vis) -> bool:
    span = visible_span(vis)
    if span is None:
        return True
    return bool(np.all(np.asarray(vis, dtype=bool)[span[0]:span[1] + 1]))


def repair_visibility(vis) -> np.ndarray:
    """Fill every gap between the first and last visible index."""
    out = np.zeros(len(vis), dtype=bool)
    span = visible_span(vis)
    if span is not None:
        out[span[0]:span[1] + 1] = True
    return out


# -----------------------
# Sparse lanes
# -----------------------
@dataclass(frozen=True, eq=False)
class SparseLane:
    grid: PresetGrid
    x: np.ndarray
    z: np.ndarray
    vis: np.ndarray
    s: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None
    category: int = 0
    lane_id: str = ""
    y: Optional[np.ndarray] = None
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        m = self.grid.m
        x = _readonly(self.x)
        z = _readonly(self.z)
        vis = _readonly(self.vis, dtype=bool)
        y = _readonly(self.grid.y_values if self.y is None else self.y)
        for name, arr in (("x", x), ("z", z), ("vis", vis), ("y", y)):
            if arr.shape != (m,):
                raise DimensionMismatch(f"{name} must have length M={m}, got shape {arr.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
            raise InvalidLane(f"lane {self.lane_id!r}: non-finite coordinate")
        if (self.s is None) != (self.e is None):
            raise DimensionMismatch("patch deltas s and e must be given together")
        if self.s is not None:
            s = _readonly(self.s)
            e = _readonly(self.e)
            for name, arr in (("s", s), ("e", e)):
                if arr.shape != (m, 3):
                    raise DimensionMismatch(f"{name} must have shape ({m}, 3), got {arr.shape}")
                if not np.all(np.isfinite(arr)):
                    raise InvalidLane(f"lane {self.lane_id!r}: non-finite patch delta")
            object.__setattr__(self, "s", s)
            object.__setattr__(self, "e", e)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "vis", vis)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "category", int(self.category))
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def m(self) -> int:
        return self.grid.m

    @property
    def n_visible(self) -> int:
        return int(self.vis.sum())

    @property
    def visible_span(self) -> Optional[Tuple[int, int]]:
        return visible_span(self.vis)

    @property
    def has_patch(self) -> bool:
        return self.s is not None

    @property
    def points(self) -> np.ndarray:
        return np.stack([self.x, self.y, self.z], axis=1)

    def has_flag(self, flag: str) -> bool:
        return flag in self.flags

    def with_flags(self, *flags: str) -> "SparseLane":
        merged = self.flags + tuple(f for f in flags if f not in self.flags)
        return dataclasses.replace(self, flags=merged)


def to_dense(lane: SparseLane) -> DenseLane:
    """
    Polyline through the visible points of a sparse lane, in index order.

    Points whose y does not advance past the previous kept point are dropped
    (raw predictions can over-patch). Raises TooFewValid below two points.
    """
    pts = lane.points[lane.vis]
    keep = []
    for i in range(pts.shape[0]):
        if not keep or pts[i, 1] > pts[keep[-1], 1]:
            keep.append(i)
    if len(keep) < 2:
        raise TooFewValid(f"lane {lane.lane_id!r}: {len(keep)} usable point(s)")
    return DenseLane(pts[keep], category=lane.category, lane_id=lane.lane_id)
