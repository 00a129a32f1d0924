import json
import math

import numpy as np
import pytest

from hitlab import geometry
from hitlab.geometry import (Ball, Box, Cylinder, Direction, PreconditionError, Segment, ShapeSpec, contains,
                             m_measure, project, r_out, scale)
from hitlab.specfun import DomainError

E3 = Direction((0.0, 0.0, 1.0))


def test_json_round_trip_and_strictness():
    doc = {"d": 3, "primitives": [{"ball": {"center": [0, 0, 0], "radius": 1.0}},
                                  {"cylinder": {"base_center": [2, 0, 0], "axis": [0, 0, 1],
                                                "radius": 0.5, "height": 2.0}},
                                  {"box": {"min": [-1, -1, 2], "max": [1, 1, 3]}}]}
    shape = ShapeSpec.from_json(json.dumps(doc))
    assert ShapeSpec.from_json(shape.to_json()) == shape
    bad = json.loads(json.dumps(doc))
    bad["primitives"][0]["ball"]["colour"] = "red"
    with pytest.raises(DomainError):
        ShapeSpec.from_json(bad)
    with pytest.raises(DomainError):
        ShapeSpec.from_json({"d": 3, "primitives": [{"torus": {}}]})
    with pytest.raises(DomainError):
        ShapeSpec.from_json({"d": 3, "primitives": [], "extra": 1})
    with pytest.raises(DomainError):
        ShapeSpec.from_json("{not json")


def test_invariants():
    with pytest.raises(DomainError):
        ShapeSpec(3, ())
    with pytest.raises(DomainError):
        Ball((0, 0, 0), 0.0)
    with pytest.raises(DomainError):
        Box((0, 0), (1, 0))
    with pytest.raises(DomainError):
        ShapeSpec(3, (Segment((0, 0), (1, 0)),))
    with pytest.raises(DomainError):
        ShapeSpec(2, (Cylinder((0, 0, 0), (0, 0, 1), 1.0, 1.0),))
    with pytest.raises(DomainError):
        Direction((1.0, 1.0))
    assert Direction.normalized((3.0, 4.0)).e == pytest.approx((0.6, 0.8))


def test_contains():
    ball = geometry.ball(3)
    assert contains(ball, (0, 0, 0))
    assert not contains(ball, (2, 0, 0))
    pair = ShapeSpec(3, (Ball((3, 0, 0), 1.0), Ball((-3, 0, 0), 1.0)))
    assert contains(pair, (3, 0, 0))
    assert not contains(pair, (0, 0, 0))
    with pytest.raises(DomainError):
        contains(ball, (0, 0))
    seg = ShapeSpec(2, (Segment((-1, 0), (1, 0)),))
    assert contains(seg, (0.5, 0.0)) and not contains(seg, (0.5, 0.1))
    cyl = ShapeSpec(3, (Cylinder((0, 0, 0), (0, 0, 1), 1.0, 2.0),))
    assert contains(cyl, (0.5, 0.5, 1.9)) and not contains(cyl, (0.0, 0.0, 2.1))
    mask = contains(ball, np.array([[0, 0, 0], [0, 0, 1.5]]))
    assert mask.tolist() == [True, False]


def test_r_out():
    assert r_out(geometry.ball(3)) == 1.0
    assert r_out(geometry.ball(3, 1.0, (3, 0, 0))) == 4.0
    box = ShapeSpec(2, (Box((-1, -1), (2, 1)),))
    assert r_out(box) == pytest.approx(math.sqrt(5))
    assert r_out(scale(box, 3.0)) == pytest.approx(3 * math.sqrt(5))
    cyl = ShapeSpec(3, (Cylinder((0, 0, 0), (0, 0, 1), 1.0, 2.0),))
    assert r_out(cyl) == pytest.approx(math.sqrt(5))


def test_scale(rng):
    ball = scale(geometry.ball(3), 2.0)
    assert ball.primitives[0].radius == 2.0
    with pytest.raises(DomainError):
        scale(ball, 0.0)
    shape = ShapeSpec(3, (Ball((1, 0, 0), 0.7), Box((-1, -1, -1), (0, 0.5, 0.2)),
                          Cylinder((0, 1, 0), (0, 0.6, 0.8), 0.3, 1.0)))
    pts = rng.uniform(-2, 2, size=(10_000, 3))
    big = scale(shape, 2.5)
    np.testing.assert_array_equal(contains(big, 2.5 * pts), contains(shape, pts))


def test_projection_areas():
    raster = project(geometry.ball(3), E3, 1 / 64)
    assert raster.area == pytest.approx(math.pi, rel=0.02)
    centre = raster.centers()
    k = np.argmin(np.linalg.norm(centre, axis=-1))
    idx = np.unravel_index(k, raster.occupancy.shape)
    assert raster.height[idx] == pytest.approx(1.0, abs=1e-3)
    disc = project(geometry.ball(2), Direction((0.0, 1.0)), 1 / 64)
    assert disc.area == pytest.approx(2.0, rel=0.02)
    seg = project(ShapeSpec(2, (Segment((-2, 0), (2, 0)),)), Direction((0.0, 1.0)), 1 / 64)
    assert seg.area == pytest.approx(4.0, rel=0.02)
    with pytest.raises(PreconditionError):
        project(geometry.ball(3), E3, 0.5)


def test_projection_converges():
    a1 = project(geometry.ball(3), E3, 1 / 32).area
    a2 = project(geometry.ball(3), E3, 1 / 64).area
    assert abs(a1 - a2) / a2 < 0.01


def test_m_measure():
    ball = geometry.ball(3)
    cell = 1 / 64
    total = m_measure(ball, E3, cell)
    assert total == project(ball, E3, cell).area
    assert m_measure(ball, E3, cell, lambda p: p[:, 2] >= 0) == pytest.approx(math.pi, rel=0.02)
    assert m_measure(ball, E3, cell, lambda p: p[:, 2] < 0) == 0.0
    cyl = ShapeSpec(3, (Cylinder((0, 0, 0), (0, 0, 1), 1.0, 2.0),))
    side = Direction((1.0, 0.0, 0.0))
    assert m_measure(cyl, side, cell) == pytest.approx(4.0, rel=0.02)


def test_flat_plate_height_constant():
    plate = ShapeSpec(3, (Box((-1, -1, -0.01), (1, 1, 0.01)),))
    raster = project(plate, E3, 1 / 32)
    heights = raster.height[raster.occupancy]
    np.testing.assert_allclose(heights, 0.01)
    assert raster.jump_fraction() == 0.0
