import math

import numpy as np
import pytest

from hitlab import geometry
from hitlab.geometry import Ball, Segment, ShapeSpec
from hitlab.montecarlo import SimConfig
from hitlab.potential import (DegenerateSystemError, _solve_two_radius, capacity_mc, escape_prob, green_e_mc,
                              harmonic_measure_inf, potential_summary, robin_const)
from hitlab.specfun import DomainError


def cfg(n=20000, seed=1, step=1e-3):
    return SimConfig(step=step, horizon=10.0, n_paths=n, seed=seed)


def within(est, target, k=3.0):
    return abs(est.mean - target) <= k * est.stderr


def test_dimension_guards(unit_disc, unit_ball3):
    with pytest.raises(DomainError):
        capacity_mc(unit_disc, cfg(200))
    with pytest.raises(DomainError):
        escape_prob(unit_disc, [2.0, 0.0], cfg(200))
    with pytest.raises(DomainError):
        green_e_mc(unit_ball3, [2.0, 0, 0], cfg(200))
    with pytest.raises(DomainError):
        robin_const(unit_ball3, cfg(200))
    with pytest.raises(DomainError):
        green_e_mc(unit_disc, [2.0, 0.0], cfg(200), radii=(8.0, 4.0))


def test_two_radius_solver():
    e, c = _solve_two_radius(0.5, 0.25, math.log(4), math.log(8))
    assert e == pytest.approx(0.5 * (math.log(4) - c))
    assert e == pytest.approx(0.25 * (math.log(8) - c))
    with pytest.raises(DegenerateSystemError):
        _solve_two_radius(0.3, 0.3, 1.0, 2.0)


def test_escape_prob_ball(unit_ball3):
    est = escape_prob(unit_ball3, [2.0, 0, 0], cfg(20000))
    assert within(est, 0.5)
    with pytest.raises(DomainError):
        escape_prob(unit_ball3, [0.5, 0, 0], cfg(200))


def test_capacity_ball_scaling():
    c1 = capacity_mc(geometry.ball(3, 1.0), cfg(20000, 2))
    c2 = capacity_mc(geometry.ball(3, 2.0), cfg(20000, 3, step=4e-3))
    assert within(c1, 2 * math.pi, 4)
    assert abs(c2.mean - 2 * c1.mean) <= 4 * math.hypot(c2.stderr, 2 * c1.stderr) + 0.02 * c2.mean


def test_capacity_monotone_and_subadditive():
    small = capacity_mc(geometry.ball(3, 1.0), cfg(20000, 4))
    big = capacity_mc(geometry.ball(3, 1.5), cfg(20000, 5))
    assert big.mean > small.mean
    pair = ShapeSpec(3, (Ball((-2.0, 0, 0), 1.0), Ball((2.0, 0, 0), 1.0)))
    both = capacity_mc(pair, cfg(20000, 6, step=2e-3))
    assert small.mean < both.mean < 2 * small.mean + 3 * both.stderr


def test_green_e_shift_law():
    # e_{A+y}(x+y) = e_A(x); compare a translated disc against the centred one
    d0 = green_e_mc(geometry.ball(2, 1.0), [3.0, 0.0], cfg(40000, 7), radii=(12.0, 24.0))
    shifted = ShapeSpec(2, (Ball((1.0, 1.0), 1.0),))
    d1 = green_e_mc(shifted, [4.0, 1.0], cfg(40000, 8), radii=(12.0, 24.0))
    truth = math.log(3.0)
    assert within(d0.e, truth, 4)
    assert within(d1.e, truth, 4)


def test_robin_radius_independence(unit_disc):
    a = robin_const(unit_disc, cfg(40000, 9))
    b = robin_const(unit_disc, cfg(40000, 10), radius=3.0)
    assert a.lcap.mean == pytest.approx(1.0, abs=4 * a.lcap.stderr + 0.02)
    assert abs(a.robin.mean - b.robin.mean) <= 4 * math.hypot(a.robin.stderr, b.robin.stderr)
    assert a.lcap.mean == pytest.approx(math.exp(-a.robin.mean))


def test_lcap_scale_covariance():
    r = 2.5
    a = robin_const(geometry.ball(2, 1.0), cfg(40000, 11))
    b = robin_const(geometry.ball(2, r), cfg(40000, 12, step=r * r * 1e-3))
    assert abs(b.lcap.mean - r * a.lcap.mean) <= 4 * math.hypot(b.lcap.stderr, r * a.lcap.stderr) + 0.02 * r


def test_green_lcap_agrees_with_robin(unit_disc):
    g = green_e_mc(unit_disc, [2.0, 0.0], cfg(40000, 13))
    rob = robin_const(unit_disc, cfg(40000, 14))
    assert abs(g.lcap.mean - rob.lcap.mean) <= 4 * math.hypot(g.lcap.stderr, rob.lcap.stderr) + 0.03


def test_hinf_ball_uniform(unit_ball3):
    hist = harmonic_measure_inf(unit_ball3, cfg(40000, 15), bins=4)
    assert hist.values.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.abs(hist.values - 0.25) <= 4 * hist.stderr)
    disc = harmonic_measure_inf(geometry.ball(2, 1.0), cfg(20000, 16), bins=4)
    assert np.all(np.abs(disc.values - 0.25) <= 4 * disc.stderr)


def test_hinf_two_balls():
    equal = ShapeSpec(3, (Ball((-2.0, 0, 0), 1.0), Ball((2.0, 0, 0), 1.0)))
    h = harmonic_measure_inf(equal, cfg(40000, 17, step=2e-3))
    m0, m1 = h.meta["primitive_mass"]
    assert abs(m0 - m1) <= 4 * math.hypot(*h.meta["primitive_stderr"])
    unequal = ShapeSpec(3, (Ball((-4.0, 0, 0), 1.0), Ball((4.0, 0, 0), 2.0)))
    h2 = harmonic_measure_inf(unequal, cfg(40000, 18, step=4e-3))
    m0, m1 = h2.meta["primitive_mass"]
    # far apart balls share the harmonic measure roughly in proportion to capacity
    assert m0 / m1 == pytest.approx(0.5, rel=0.15)


def test_summary_json(unit_disc):
    seg = ShapeSpec(2, (Segment((-1.0, 0.0), (1.0, 0.0)),))
    summ = potential_summary(seg, cfg(40000, 19), bins=4)
    data = summ.to_json()
    assert data["d"] == 2 and "lcap" in data and "robin" in data
    # lcap of a segment is a quarter of its length
    assert abs(data["lcap"]["mean"] - 0.5) <= 4 * data["lcap"]["stderr"]
    assert summ.dumps() == summ.dumps()
