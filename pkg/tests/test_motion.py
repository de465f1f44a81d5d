import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from breathflow.imagery import FlowField, ImageryError, Mask
from breathflow.motion import (
    AngleTracker, DirectionFilterConfig, MotionSample, aggregate, angle_of,
    direction_filter, motion_sample, write_angle_csv)

CFG = DirectionFilterConfig(0.52)
finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
fields = arrays(np.float64, (3, 4), elements=finite)


def one(vx, vy):
    return FlowField(np.array([[vx]], float), np.array([[vy]], float))


def filtered(vx, vy, cfg=CFG):
    f = direction_filter(one(vx, vy), cfg)
    return f.vx[0, 0], f.vy[0, 0]


@pytest.mark.parametrize("v, kept", [
    ((0, 1), True),
    ((1, 0), False),
    ((0, -1), True),
    ((math.sin(0.6), math.cos(0.6)), False),
    ((math.sin(0.5), math.cos(0.5)), True),
    ((math.sin(0.5), -math.cos(0.5)), True),
    ((0, 0), False),
])
def test_direction_filter_examples(v, kept):
    out = filtered(*v)
    assert out == (tuple(map(float, v)) if kept else (0.0, 0.0))


def test_alpha_range():
    for bad in (0.0, math.pi / 2, -0.1):
        with pytest.raises(ValueError):
            DirectionFilterConfig(bad)


@given(fields, fields)
def test_direction_filter_idempotent(vx, vy):
    f = FlowField(vx, vy)
    a = direction_filter(f, CFG)
    b = direction_filter(a, CFG)
    np.testing.assert_array_equal(a.vx, b.vx)
    np.testing.assert_array_equal(a.vy, b.vy)


@given(fields, fields)
def test_alpha_limits(vx, vy):
    f = FlowField(vx, vy)
    wide = direction_filter(f, DirectionFilterConfig(math.pi / 2 - 1e-12))
    # anything not essentially horizontal survives
    steep = np.abs(vy) > 1e-9 * np.hypot(vx, vy)
    np.testing.assert_array_equal(wide.vy[steep], vy[steep])
    narrow = direction_filter(f, DirectionFilterConfig(1e-12))
    kept = (narrow.vx != 0) | (narrow.vy != 0)
    assert np.all(~kept | (np.abs(vx) <= 1e-9 * np.abs(vy)))


def test_aggregate_examples():
    vx = np.array([[0.0, 0.0, 5.0]])
    vy = np.array([[1.0, 2.0, 5.0]])
    mask = Mask(np.array([[True, True, False]]))
    s = aggregate(FlowField(vx, vy), mask)
    assert (s.aggregate_x, s.aggregate_y, s.degenerate) == (0.0, 3.0, False)

    s = aggregate(FlowField(np.array([[1.0, -1.0]]), np.array([[2.0, 3.0]])), Mask.full(1, 2))
    assert (s.aggregate_x, s.aggregate_y) == (0.0, 5.0)

    s = aggregate(FlowField(vx, vy), Mask(np.zeros((1, 3), bool)))
    assert (s.aggregate_x, s.aggregate_y, s.degenerate) == (0.0, 0.0, True)


def test_aggregate_y_up_negates():
    s = aggregate(one(1.0, 2.0), Mask.full(1, 1), y_up=True)
    assert (s.aggregate_x, s.aggregate_y) == (1.0, -2.0)


def test_aggregate_dimension_mismatch():
    with pytest.raises(ImageryError):
        aggregate(one(0, 1), Mask.full(2, 2))


@given(fields, fields, fields, fields, arrays(bool, (3, 4)))
def test_aggregate_linear(ax, ay, bx, by, m):
    mask = Mask(m)
    s1 = aggregate(FlowField(ax, ay), mask)
    s2 = aggregate(FlowField(bx, by), mask)
    s = aggregate(FlowField(ax + bx, ay + by), mask)
    assert s.aggregate_x == pytest.approx(s1.aggregate_x + s2.aggregate_x, abs=1e-9)
    assert s.aggregate_y == pytest.approx(s1.aggregate_y + s2.aggregate_y, abs=1e-9)


def test_angle_examples():
    assert angle_of(MotionSample(0, 0.0, 1.0)) == pytest.approx(math.pi / 2)
    assert angle_of(MotionSample(0, 1.0, 1.0)) == pytest.approx(math.pi / 4)
    assert angle_of(MotionSample(0, 0.0, 0.0, degenerate=True), math.pi / 3) == math.pi / 3
    assert angle_of(MotionSample(0, -1.0, -0.0)) == math.pi


@given(finite, finite)
def test_angle_range(x, y):
    a = angle_of(MotionSample(0, x, y, degenerate=(x == 0 and y == 0)), 0.25)
    assert -math.pi < a <= math.pi


def test_tracker_holds_previous_and_starts_at_zero():
    track = AngleTracker()
    zero = MotionSample(0, 0.0, 0.0, degenerate=True)
    assert track(zero).angle == 0.0
    assert track(MotionSample(1, 0.0, 2.0)).angle == pytest.approx(math.pi / 2)
    held = track(MotionSample(2, 0.0, 0.0, degenerate=True))
    assert held.angle == pytest.approx(math.pi / 2) and held.degenerate


def test_motion_sample_upward_is_positive_angle():
    # image rows grow downward, so vy < 0 is upward motion
    vx = np.zeros((2, 2)); vy = np.full((2, 2), -1.0)
    s = AngleTracker()(motion_sample(FlowField(vx, vy), Mask.full(2, 2), 5, CFG))
    assert s.frame_index == 5
    assert s.angle == pytest.approx(math.pi / 2)


def test_angle_csv(tmp_path):
    samples = [MotionSample(1, 0, 1, angle=0.5), MotionSample(2, 0, 1, angle=-0.25)]
    write_angle_csv(tmp_path / "a.csv", samples, 10.0)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "frame_index,time_s,angle_rad"
    idx, t, a = lines[1].split(",")
    assert (int(idx), float(t), float(a)) == (1, pytest.approx(0.1), 0.5)
    assert len(lines) == 3
