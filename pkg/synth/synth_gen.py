# synth/synth_gen.py
"""
Deterministic synthetic lane scenes.

Each scene holds a few parallel lanes sharing one quadratic lateral profile
x(y) = x0 + t*(y - y0) + 0.5*k*(y - y0)^2 and one linear height profile.
Lane lengths are drawn from a bucketed histogram, start positions uniformly
from the start range, and every lane is sampled densely (<= 0.5 m).

Scene i draws from np.random.default_rng([seed, i]), so the output does not
depend on how many threads generate it.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from lanes.errors import InvalidConfig
from lanes.lane_core import DenseLane, lane_length

KAPPA_LIMIT = 0.1
BUCKET_EDGES = [(float(lo), float(lo + 10)) for lo in range(0, 100, 10)]

PRESETS = {
    # 40% below 20 m, 70% below 40 m
    "openlane-like": [0.05, 0.35, 0.16, 0.14, 0.07, 0.06, 0.05, 0.04, 0.04, 0.04],
    # 20% below 40 m
    "apollosim-like": [0.02, 0.05, 0.06, 0.07, 0.08, 0.10, 0.12, 0.14, 0.16, 0.20],
}


def _pair(value, name) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"{name} must be a [low, high] pair, got {value!r}") from None
    if hi < lo:
        raise InvalidConfig(f"{name} low ({lo}) exceeds high ({hi})")
    return lo, hi


def _hist_entry(entry) -> Tuple[Tuple[float, float], float]:
    # accepts [lo, hi, p], [[lo, hi], p] or {"bucket": "lo:hi", "p": p}
    if isinstance(entry, dict):
        lo, hi = (float(v) for v in str(entry["bucket"]).split(":"))
        return (lo, hi), float(entry["p"])
    if len(entry) == 3:
        return (float(entry[0]), float(entry[1])), float(entry[2])
    (lo, hi), p = entry
    return (float(lo), float(hi)), float(p)


@dataclass
class SynthConfig:
    seed: int = 0
    scenes: int = 100
    lanes_per_scene: Tuple[int, int] = (2, 4)
    length_hist: List[Tuple[Tuple[float, float], float]] = field(
        default_factory=lambda: list(zip(BUCKET_EDGES, PRESETS["openlane-like"]))
    )
    start_y_range: Tuple[float, float] = (3.0, 103.0)
    curvature_range: Tuple[float, float] = (-0.001, 0.001)
    heading_range: Tuple[float, float] = (-0.05, 0.05)
    lateral_spacing: float = 3.5
    z_slope_range: Tuple[float, float] = (-0.02, 0.02)
    min_length: float = 5.0
    dense_spacing: float = 0.5
    n_categories: int = 14

    def __post_init__(self):
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidConfig(f"seed must be a non-negative integer, got {self.seed!r}")
        if int(self.scenes) != self.scenes or self.scenes < 0:
            raise InvalidConfig(f"scenes must be a non-negative integer, got {self.scenes!r}")
        lo, hi = (int(v) for v in _pair(self.lanes_per_scene, "lanes_per_scene"))
        if lo < 1:
            raise InvalidConfig("lanes_per_scene must allow at least one lane")
        self.lanes_per_scene = (lo, hi)

        try:
            hist = [_hist_entry(e) for e in self.length_hist]
        except (KeyError, TypeError, ValueError):
            raise InvalidConfig(f"malformed length_hist {self.length_hist!r}") from None
        if not hist:
            raise InvalidConfig("length_hist is empty")
        total = 0.0
        for (b_lo, b_hi), p in hist:
            if not 0 <= b_lo < b_hi <= 100:
                raise InvalidConfig(f"length bucket [{b_lo}, {b_hi}) leaves [0, 100]")
            if p < 0:
                raise InvalidConfig(f"negative probability {p} for bucket [{b_lo}, {b_hi})")
            if p > 0 and b_hi <= self.min_length:
                raise InvalidConfig(f"bucket [{b_lo}, {b_hi}) lies below min_length {self.min_length}")
            total += p
        if abs(total - 1.0) > 1e-9:
            raise InvalidConfig(f"length_hist probabilities sum to {total}, expected 1")
        self.length_hist = hist

        self.start_y_range = _pair(self.start_y_range, "start_y_range")
        self.curvature_range = _pair(self.curvature_range, "curvature_range")
        self.heading_range = _pair(self.heading_range, "heading_range")
        self.z_slope_range = _pair(self.z_slope_range, "z_slope_range")
        if self.kappa_max > KAPPA_LIMIT:
            raise InvalidConfig(f"|curvature| up to {self.kappa_max} exceeds {KAPPA_LIMIT}")
        if not self.lateral_spacing > 0:
            raise InvalidConfig(f"lateral_spacing must be > 0, got {self.lateral_spacing}")
        if not 0 < self.dense_spacing <= 0.5:
            raise InvalidConfig(f"dense_spacing must be in (0, 0.5], got {self.dense_spacing}")
        if not self.min_length > 0:
            raise InvalidConfig(f"min_length must be > 0, got {self.min_length}")
        if int(self.n_categories) != self.n_categories or self.n_categories < 1:
            raise InvalidConfig(f"n_categories must be a positive integer, got {self.n_categories!r}")

    @property
    def kappa_max(self) -> float:
        return max(abs(self.curvature_range[0]), abs(self.curvature_range[1]))

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "SynthConfig":
        if name not in PRESETS:
            raise InvalidConfig(f"unknown preset {name!r} (expected one of: {', '.join(PRESETS)})")
        overrides.setdefault("length_hist", list(zip(BUCKET_EDGES, PRESETS[name])))
        return cls(**overrides)

    @classmethod
    def from_dict(cls, data: dict, preset: str = None) -> "SynthConfig":
        data = dict(data)
        preset = data.pop("preset", preset)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfig(f"unknown synth config keys: {', '.join(unknown)}")
        if preset:
            return cls.from_preset(preset, **data)
        return cls(**data)

    def replace(self, **changes) -> "SynthConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class Scene:
    scene_id: str
    lanes: List[DenseLane]


@dataclass
class SceneSet:
    config: SynthConfig
    scenes: List[Scene]

    @property
    def lanes(self) -> List[DenseLane]:
        return [lane for scene in self.scenes for lane in scene.lanes]

    def to_records(self) -> List[dict]:
        from store.lane_store import dense_to_record

        return [dense_to_record(lane, scene.scene_id) for scene in self.scenes for lane in scene.lanes]


# -----------------------
# Generation
# -----------------------
def _draw_length(rng: np.random.Generator, cfg: SynthConfig) -> float:
    probs = np.array([p for _, p in cfg.length_hist])
    k = int(rng.choice(len(probs), p=probs / probs.sum()))
    lo, hi = cfg.length_hist[k][0]
    return float(rng.uniform(max(lo, cfg.min_length), hi))


def generate_scene(cfg: SynthConfig, index: int) -> Scene:
    rng = np.random.default_rng([cfg.seed, index])
    scene_id = f"scene-{index:05d}"
    n_lanes = int(rng.integers(cfg.lanes_per_scene[0], cfg.lanes_per_scene[1] + 1))
    kappa = rng.uniform(*cfg.curvature_range)
    heading = rng.uniform(*cfg.heading_range)
    slope = rng.uniform(*cfg.z_slope_range)
    z0 = rng.uniform(-0.5, 0.5)
    y_ref, y_last = cfg.start_y_range
    span = y_last - y_ref

    lanes = []
    for i in range(n_lanes):
        length = _draw_length(rng, cfg)
        y0 = y_ref + rng.uniform() * max(0.0, span - length)
        category = int(rng.integers(0, cfg.n_categories))
        n_points = int(math.ceil(length / cfg.dense_spacing)) + 1
        ys = np.linspace(y0, y0 + length, n_points)
        d = ys - y_ref
        x0 = (i - (n_lanes - 1) / 2) * cfg.lateral_spacing
        xs = x0 + heading * d + 0.5 * kappa * d * d
        zs = z0 + slope * d
        lanes.append(DenseLane(np.stack([xs, ys, zs], axis=1), category=category,
                               lane_id=f"{scene_id}-lane-{i}"))
    return Scene(scene_id, lanes)


def generate_scene_set(cfg: SynthConfig, threads: int = 1, logger=None) -> SceneSet:
    indices = range(cfg.scenes)
    if threads > 1 and cfg.scenes > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scenes = list(pool.map(lambda i: generate_scene(cfg, i), indices))
    else:
        scenes = [generate_scene(cfg, i) for i in indices]
    out = SceneSet(cfg, scenes)
    if logger:
        logger.info({"component": "synth", "action": "generate_scene_set", "seed": cfg.seed,
                     "scenes": len(scenes), "lanes": len(out.lanes)})
    return out


def length_histogram(source: Union[SceneSet, Iterable[DenseLane]],
                     buckets: Sequence[Tuple[float, float]] = BUCKET_EDGES) -> List[float]:
    """Fraction of lanes per bucket, lo <= L < hi (the last bucket also takes L == hi)."""
    lanes = source.lanes if isinstance(source, SceneSet) else list(source)
    if not lanes:
        raise InvalidConfig("length_histogram needs at least one lane")
    lengths = np.array([lane_length(lane) for lane in lanes])
    fractions = []
    for i, (lo, hi) in enumerate(buckets):
        inside = (lengths >= lo) & (lengths < hi)
        if i == len(buckets) - 1:
            inside |= lengths == hi
        fractions.append(float(inside.sum()) / lengths.size)
    return fractions
