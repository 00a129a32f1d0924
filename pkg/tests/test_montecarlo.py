import math

import numpy as np
import pytest

from hitlab import geometry
from hitlab.geometry import Box, ShapeSpec
from hitlab.montecarlo import (Accumulator, Estimate, ResourceError, SimConfig, bridge_paths, cameron_martin_pair,
                               drifted_hit, estimate_of, first_hit, hit_histogram, intervals_overlap,
                               lambda_profile_mc, run_chunks, sausage_volume_mc, simulate, site_histogram)
from hitlab.specfun import DomainError


def test_simconfig_invariants():
    SimConfig(step=0.01, horizon=1.0, n_paths=100)
    with pytest.raises(DomainError):
        SimConfig(step=0.1, horizon=1.0, n_paths=100)
    with pytest.raises(DomainError):
        SimConfig(step=0.01, horizon=1.0, n_paths=99)
    with pytest.raises(DomainError):
        SimConfig(step=0.01, horizon=1.0, n_paths=100, seed=-1)
    with pytest.raises(DomainError):
        SimConfig(step=0.01, horizon=1.0, n_paths=100, workers=0)


def test_estimate_and_accumulator():
    rng = np.random.default_rng(0)
    values = rng.normal(size=1000)
    est = estimate_of(values, seed=3)
    assert est.mean == pytest.approx(values.mean(), rel=1e-14)
    assert est.stderr == pytest.approx(values.std(ddof=1) / math.sqrt(1000), rel=1e-12)
    lo, hi = est.ci95
    assert hi - est.mean == pytest.approx(1.96 * est.stderr)
    parts = [Accumulator().add(c) for c in np.array_split(values, 7)]
    left = parts[0]
    for p in parts[1:]:
        left = left.merge(p)
    right = parts[-1]
    for p in reversed(parts[:-1]):
        right = p.merge(right)
    assert left.mean == pytest.approx(right.mean, abs=1e-12)
    assert left.variance == pytest.approx(right.variance, rel=1e-12)
    assert Estimate(1.0, 0.5, 10).z_score(0.0) == 2.0


def _draw(payload, rng, n):
    return rng.random(n)


def test_chunk_seeding_independent_of_workers():
    a = np.concatenate(run_chunks(_draw, (), 2500, seed=9, workers=1, chunk_size=300))
    b = np.concatenate(run_chunks(_draw, (), 2500, seed=9, workers=3, chunk_size=300))
    np.testing.assert_array_equal(a, b)


def test_first_hit_determinism_and_invariants(unit_ball3):
    cfg = SimConfig(step=1e-3, horizon=20.0, n_paths=2000, seed=4, chunk_size=500)
    a = first_hit(unit_ball3, [2.0, 0, 0], cfg)
    b = first_hit(unit_ball3, [2.0, 0, 0], cfg.with_(workers=2))
    np.testing.assert_array_equal(a.status, b.status)
    np.testing.assert_array_equal(a.sigma[a.hit], b.sigma[b.hit])
    for sample in list(a)[:200]:
        assert sample.hit == (sample.sigma is not None)
        if not sample.hit:
            assert sample.site is None
    radii = np.linalg.norm(a.site[a.hit], axis=1)
    assert np.all(np.abs(radii - 1.0) <= 2 * math.sqrt(cfg.step))
    with pytest.raises(DomainError):
        first_hit(unit_ball3, [0.5, 0, 0], cfg)


def test_annulus_exit_d2(unit_disc):
    cfg = SimConfig(step=1e-3, horizon=1e4, n_paths=20000, seed=5)
    batch = simulate(unit_disc, [2.0, 0.0], cfg, outer_radius=8.0)
    assert batch.survived.sum() == 0
    exact = math.log(4) / math.log(8)
    assert abs(batch.frequency().z_score(exact)) < 3


def test_step_halving_invariant(unit_ball3):
    base = SimConfig(step=2e-3, horizon=200.0, n_paths=40000, seed=6)
    p1 = first_hit(unit_ball3, [2.0, 0, 0], base, outer_radius=20.0).frequency()
    p2 = first_hit(unit_ball3, [2.0, 0, 0], base.with_(step=1e-3, seed=7), outer_radius=20.0).frequency()
    assert abs(p1.mean - p2.mean) < 2 * math.hypot(p1.stderr, p2.stderr)


def test_hit_histogram_mass(unit_ball3):
    cfg = SimConfig(step=1e-3, horizon=30.0, n_paths=5000, seed=8)
    edges = np.linspace(0, 30, 31)
    hist = hit_histogram(unit_ball3, [5.0, 0, 0], cfg, edges)
    assert float((hist.values * hist.widths).sum()) == pytest.approx(hist.meta["hit_frequency"], abs=1e-12)
    with pytest.raises(DomainError):
        hit_histogram(unit_ball3, [5.0, 0, 0], cfg, [1.0, 0.5])


def test_hit_histogram_scaling():
    edges = np.geomspace(0.1, 20, 9)
    cfg = SimConfig(step=1e-3, horizon=25.0, n_paths=20000, seed=21)
    small = hit_histogram(geometry.ball(3, 1.0), [2.0, 0, 0], cfg, edges)
    big = hit_histogram(geometry.ball(3, 2.0), [4.0, 0, 0], cfg.with_(step=4e-3, horizon=100.0, seed=22), 4 * edges)
    mass_small = small.values * small.widths
    mass_big = big.values * big.widths
    err = np.hypot(small.stderr * small.widths, big.stderr * big.widths)
    assert np.all(np.abs(mass_small - mass_big) <= 4 * err + 1e-12)


def test_bridge_sampler():
    cfg = SimConfig(step=0.01, horizon=2.0, n_paths=100, seed=0)
    sampler = bridge_paths(2.0, [1.0, -0.5], cfg)
    paths = sampler.sample(np.random.default_rng(1), 4000)
    np.testing.assert_allclose(paths[:, -1, :], np.tile([1.0, -0.5], (4000, 1)), atol=1e-12)
    mid = paths[:, sampler.n_steps // 2, 0]
    var = mid.var(ddof=1)
    assert abs(var - 0.5) < 3 * 0.5 * math.sqrt(2 / 4000)
    assert mid.mean() == pytest.approx(0.5, abs=3 * math.sqrt(0.5 / 4000))
    drifted = bridge_paths(2.0, [1.0, -0.5], cfg, drift=[3.0, 1.0]).sample(np.random.default_rng(1), 4000)
    np.testing.assert_allclose(drifted, paths, atol=1e-12)
    with pytest.raises(DomainError):
        bridge_paths(0.0, [0, 0], cfg)


def test_sausage_errors_and_memory_cap(unit_ball3, monkeypatch):
    cfg = SimConfig(step=0.01, horizon=5.0, n_paths=100, seed=1)
    with pytest.raises(DomainError):
        sausage_volume_mc(unit_ball3, 5.0, [0, 0, 0], cfg, voxel=0.5)
    monkeypatch.setenv("LAB_MAX_GRID_BYTES", "1000")
    with pytest.raises(ResourceError, match="bytes"):
        sausage_volume_mc(unit_ball3, 5.0, [0, 0, 0], cfg, voxel=0.25)


def test_sausage_short_time_disc(unit_disc):
    # a short bridge barely moves: the sausage is about the disc itself
    cfg = SimConfig(step=1e-7, horizon=1e-5, n_paths=100, seed=2)
    est = sausage_volume_mc(unit_disc, 1e-5, [0.0, 0.0], cfg, voxel=1 / 64)
    assert est.mean == pytest.approx(math.pi, rel=0.03)


def test_site_histogram_uniform_at_small_v(unit_ball3):
    cfg = SimConfig(step=1e-3, horizon=100.0, n_paths=40000, seed=3)
    hist = site_histogram(unit_ball3, [2.0, 0, 0], cfg, np.arccos(np.linspace(1, -1, 5)), 0.2, t_target=60.0)
    assert hist.meta["delta_w"] == 0.2
    assert hist.values.sum() == pytest.approx(1.0, abs=1e-12)
    # v = 2/60: the law is uniform in cos(theta) up to O(v)
    assert np.all(np.abs(hist.values - 0.25) <= 3 * hist.stderr + 0.02)


def test_cameron_martin_small(unit_ball3):
    cfg = SimConfig(step=1e-3, horizon=20.0, n_paths=20000, seed=4)
    pair = cameron_martin_pair(unit_ball3, [3.0, 0, 0], [0.5, 0, 0], cfg)
    assert len(pair) == 5
    assert all(intervals_overlap(a, b) for a, b in pair.values())


def test_drift_zero_matches_plain(unit_ball3):
    cfg = SimConfig(step=1e-3, horizon=20.0, n_paths=2000, seed=10)
    a = drifted_hit(unit_ball3, [2.0, 0, 0], [0.0, 0, 0], cfg)
    b = first_hit(unit_ball3, [2.0, 0, 0], cfg)
    np.testing.assert_array_equal(a.status, b.status)


def test_large_drift_hits_near_face():
    plate = ShapeSpec(3, (Box((-1, -1, -0.1), (1, 1, 0.1)),))
    cfg = SimConfig(step=1e-4, horizon=1.0, n_paths=2000, seed=11)
    batch = drifted_hit(plate, [0.0, 0.0, 3.0], [0.0, 0.0, 20.0], cfg)
    sites = batch.site[batch.hit]
    assert batch.hit.mean() > 0.9
    assert np.mean(sites[:, 2] > 0.09) > 0.95


def test_lambda_profile():
    box = ShapeSpec(3, (Box((-1, -1, -1), (1, 1, 1)),))
    cfg = SimConfig(step=1e-3, horizon=50.0, n_paths=4000, seed=12)
    full = lambda_profile_mc(box, 1.0, None, cfg)
    half = lambda_profile_mc(box, 1.0, lambda p: p[:, 0] > 0, cfg)
    assert half.mean <= full.mean + 2 * full.stderr
    for v in (0.0, 1.0, 5.0):
        est = lambda_profile_mc(box, v, None, cfg)
        assert 0 < est.mean < 10
    # lambda(0) = G(1) Cap; the cube of side 2 has capacity 1.3214 in ball-radius units
    ref = lambda_profile_mc(box, 0.0, None, cfg.with_(n_paths=20000, seed=13))
    assert abs(ref.mean - 1.3214) <= 4 * ref.stderr
    with pytest.raises(DomainError):
        lambda_profile_mc(box, -1.0, None, cfg)
