# tests/helpers.py
import numpy as np

from lanes.lane_core import DenseLane


def straight_lane(y0, y1, x=0.0, z=0.0, step=0.5, slope_x=0.0, slope_z=0.0, lane_id="lane", category=0):
    n = int(np.ceil((y1 - y0) / step)) + 1
    ys = np.linspace(y0, y1, n)
    pts = np.stack([x + slope_x * (ys - y0), ys, z + slope_z * (ys - y0)], axis=1)
    return DenseLane(pts, category=category, lane_id=lane_id)


def curved_lane(y0, y1, x0=0.0, heading=0.02, kappa=0.001, slope=0.01, lane_id="lane"):
    ys = np.linspace(y0, y1, int(np.ceil((y1 - y0) / 0.5)) + 1)
    d = ys - y0
    pts = np.stack([x0 + heading * d + 0.5 * kappa * d * d, ys, 0.2 + slope * d], axis=1)
    return DenseLane(pts, lane_id=lane_id)
