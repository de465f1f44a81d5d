"""Per-frame motion samples: vertical direction filter, vector sum, angle."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .defaults import DIRECTION_ALPHA
from .imagery import FlowField, Mask, check_same_shape


@dataclass(frozen=True)
class DirectionFilterConfig:
    alpha: float = DIRECTION_ALPHA

    def __post_init__(self):
        if not 0 < self.alpha < math.pi / 2:
            raise ValueError(f"alpha must lie in (0, pi/2), got {self.alpha}")


@dataclass(frozen=True)
class MotionSample:
    frame_index: int
    aggregate_x: float
    aggregate_y: float
    angle: float = 0.0
    degenerate: bool = False


def direction_filter(flow: FlowField, config: DirectionFilterConfig = DirectionFilterConfig()) -> FlowField:
    """Zero every vector whose angle to the vertical axis is not within
    ``alpha`` of either the upward or downward direction.

    The test ``|vy| > |v| cos(alpha)`` covers both branches at once and
    never touches an angle wrap-around. Zero vectors fail it and stay zero.
    """
    mag = np.hypot(flow.vx, flow.vy)
    keep = np.abs(flow.vy) > mag * math.cos(config.alpha)
    return FlowField(np.where(keep, flow.vx, 0.0), np.where(keep, flow.vy, 0.0))


def aggregate(flow: FlowField, mask: Mask, frame_index: int = 0, y_up: bool = False) -> MotionSample:
    """Sum the vectors under the mask.

    With ``y_up`` the vertical component is negated so that upward image
    motion is positive, which is the convention of the angle series.
    """
    check_same_shape(flow, mask, "flow/mask")
    sel = mask.bits.ravel()
    sx = float(np.sum(flow.vx.ravel()[sel]))
    sy = float(np.sum(flow.vy.ravel()[sel]))
    if y_up:
        sy = -sy
    return MotionSample(frame_index, sx, sy, degenerate=(sx == 0.0 and sy == 0.0))


def angle_of(sample: MotionSample, previous_angle: float = 0.0) -> float:
    """Four-quadrant angle of the aggregate, in (-pi, pi].

    A zero aggregate has no direction; the previous angle is held instead.
    """
    if sample.degenerate or (sample.aggregate_x == 0.0 and sample.aggregate_y == 0.0):
        return previous_angle
    a = math.atan2(sample.aggregate_y, sample.aggregate_x)
    return math.pi if a == -math.pi else a


class AngleTracker:
    """Sequential angle series construction with the degenerate hold rule."""

    def __init__(self):
        self.previous = 0.0

    def __call__(self, sample: MotionSample) -> MotionSample:
        angle = angle_of(sample, self.previous)
        self.previous = angle
        return replace(sample, angle=angle)


def motion_sample(flow: FlowField, mask: Mask, frame_index: int,
                  config: DirectionFilterConfig = DirectionFilterConfig()) -> MotionSample:
    """Direction-filter, then aggregate in the y-up convention (angle not set)."""
    return aggregate(direction_filter(flow, config), mask, frame_index, y_up=True)


def write_angle_csv(path, samples, fps: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "time_s", "angle_rad"])
        for s in samples:
            w.writerow([s.frame_index, f"{s.frame_index / fps:.6f}", repr(float(s.angle))])
