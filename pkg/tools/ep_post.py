# tools/ep_post.py
"""
Endpoint (EP) post-processing and the endpoint regression loss.

At inference only the first and last visible preset points are moved: the
first by its predicted start delta, the last by its predicted end delta.
Deltas at interior points exist so that any point can serve as an endpoint;
they are not used here.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from lanes.errors import DimensionMismatch, InvalidLane, TooFewValid
from lanes.lane_core import PATCHED, TOO_FEW_VALID, DenseLane, SparseLane


@dataclass(frozen=True, eq=False)
class EpPrediction:
    s_hat: np.ndarray
    e_hat: np.ndarray

    def __post_init__(self):
        s = np.array(self.s_hat, dtype=float)
        e = np.array(self.e_hat, dtype=float)
        if s.ndim != 2 or s.shape[1] != 3 or s.shape != e.shape:
            raise DimensionMismatch(f"s_hat/e_hat must both be (M, 3), got {s.shape} and {e.shape}")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(e))):
            raise InvalidLane("non-finite endpoint delta")
        s.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "s_hat", s)
        object.__setattr__(self, "e_hat", e)

    @property
    def m(self) -> int:
        return int(self.s_hat.shape[0])

    @classmethod
    def from_lane(cls, lane: SparseLane) -> "EpPrediction":
        if not lane.has_patch:
            raise DimensionMismatch(f"lane {lane.lane_id!r} carries no patch deltas")
        return cls(lane.s, lane.e)


def ep_patch_inference(pred: SparseLane, ep: EpPrediction, logger=None) -> SparseLane:
    """
    Move the first visible point by s_hat and the last by e_hat (all three axes).

    Lanes with fewer than two visible points come back unchanged, flagged
    ``too_few_valid``.
    """
    if ep.m != pred.m:
        raise DimensionMismatch(f"EP prediction has M={ep.m}, lane has M={pred.m}")
    span = pred.visible_span
    if span is None or span[0] == span[1]:
        if logger:
            logger.warning({"component": "ep_post", "action": "too_few_valid",
                            "lane_id": pred.lane_id, "n_visible": pred.n_visible})
        return pred.with_flags(TOO_FEW_VALID)

    first, last = span
    x = pred.x.copy()
    y = pred.y.copy()
    z = pred.z.copy()
    x[first] += ep.s_hat[first, 0]
    y[first] += ep.s_hat[first, 1]
    z[first] += ep.s_hat[first, 2]
    x[last] += ep.e_hat[last, 0]
    y[last] += ep.e_hat[last, 1]
    z[last] += ep.e_hat[last, 2]
    flags = pred.flags + (() if pred.has_flag(PATCHED) else (PATCHED,))
    return dataclasses.replace(pred, x=x, y=y, z=z, flags=flags)


def patch_single_point(pred: SparseLane, ep: EpPrediction) -> DenseLane:
    """
    Two-point lane from a lone visible point: its start and end deltas give
    both endpoints directly.
    """
    if ep.m != pred.m:
        raise DimensionMismatch(f"EP prediction has M={ep.m}, lane has M={pred.m}")
    if pred.n_visible != 1:
        raise TooFewValid(f"lane {pred.lane_id!r}: expected exactly one visible point, got {pred.n_visible}")
    j = int(np.flatnonzero(pred.vis)[0])
    anchor = np.array([pred.x[j], pred.y[j], pred.z[j]])
    start = anchor + ep.s_hat[j]
    end = anchor + ep.e_hat[j]
    if not end[1] > start[1]:
        raise TooFewValid(f"lane {pred.lane_id!r}: patched endpoints collapse (y {start[1]:.3f} -> {end[1]:.3f})")
    return DenseLane(np.stack([start, end]), category=pred.category, lane_id=pred.lane_id)


def loss_ep(pred: EpPrediction, target) -> float:
    """Mean over preset points of |s_hat - s|_1 + |e_hat - e|_1."""
    s, e = target
    s = np.asarray(s, dtype=float)
    e = np.asarray(e, dtype=float)
    if s.shape != pred.s_hat.shape or e.shape != pred.e_hat.shape:
        raise DimensionMismatch(
            f"target shapes {s.shape}/{e.shape} do not match prediction {pred.s_hat.shape}"
        )
    per_point = np.abs(pred.s_hat - s).sum(axis=1) + np.abs(pred.e_hat - e).sum(axis=1)
    return float(per_point.mean())
