"""Acceptance criteria 1 to 13.

Each test prints exactly one line ``CRITERION k: PASS|FAIL ...`` (bypassing
pytest's capture) and then asserts the same condition.  Seeds are fixed, so
the printed numbers repeat exactly from run to run.

Run with ``pytest tests/test_acceptance.py -v``; the Monte Carlo criteria take
a few minutes in total on one core.
"""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from hitlab import asymptotics as asy
from hitlab import geometry
from hitlab.geometry import Segment, ShapeSpec
from hitlab.harness import cli
from hitlab.harness.commands import cmd_scaling_check
from hitlab.harness.config import parse_config
from hitlab.montecarlo import (SimConfig, cameron_martin_pair, hit_histogram, intervals_overlap, lambda_profile_mc,
                               paired_z, point_hit_probability, sausage_volume_mc, site_histogram)
from hitlab.potential import capacity_mc, green_e_mc
from hitlab.specfun import Order, g_density, integrate

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(k: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {k} failed: {detail}"
    return emit


# ---------------------------------------------------------------------------
# closed-form criteria


def test_c01_d3_exactness(report):
    a = 1.0
    worst = 0.0
    for x in np.geomspace(1.1, 50.0, 10):
        for t in np.geomspace(0.1, 1e4, 10):
            got = asy.q_ball(asy.FormulaPoint(3, float(x), float(t), a), tail_corrected=True)
            want = (a / x) * (x - a) * (2 * math.pi * t ** 3) ** -0.5 * math.exp(-(x - a) ** 2 / (2 * t))
            if want == 0.0:
                err = 0.0 if got == 0.0 else math.inf
            else:
                err = abs(got - want) / want
            worst = max(worst, err)
    report(1, worst <= 1e-12, f"max relative error {worst:.3e} on 100 points (tol 1e-12)")


_BALL = {3: {"d": 3, "primitives": [{"ball": {"center": [0, 0, 0], "radius": 1.0}}]},
         2: {"d": 2, "primitives": [{"ball": {"center": [0, 0], "radius": 1.0}}]}}

# (d, regime, x grid, t grid, formulas); grids chosen so every dilation stays in each formula's domain
_SCALING_CASES = [
    (3, "order_v", [2.0, 3.0], [1.0, 5.0],
     ["q_ball", "q_ball_tail", "q_ball_exact_d3", "q_ball_bound", "q_general", "tail_prob", "cdf_prob",
      "sausage_expect"]),
    (3, "small_v", [2.0, 5.0], [100.0, 400.0],
     ["q_ball", "q_ball_tail", "q_ball_exact_d3", "q_ball_bound", "q_general", "tail_prob", "cdf_prob",
      "sausage_expect"]),
    (3, "large_v", [30.0], [0.5, 1.0],
     ["q_ball", "q_ball_tail", "q_ball_bound", "q_general", "hit_within_t_ball", "tail_prob", "cdf_prob",
      "sausage_expect"]),
    (3, "order_v", [1.5, 2.0], [0.2, 0.5], ["q_ball_smalltime"]),
    (2, "order_v", [2.0, 3.0], [1.0, 5.0], ["q_ball", "q_ball_tail", "q_ball_bound", "q_general",
                                             "sausage_expect"]),
    (2, "small_v", [2.0, 5.0], [100.0, 400.0],
     ["q_ball", "q_ball_tail", "q_ball_bound", "q_general", "hit_within_t_disc", "tail_prob",
      "sausage_expect", "sausage_disc_refined"]),
    (2, "large_v", [30.0], [0.5, 1.0], ["q_ball", "q_ball_tail", "q_ball_bound", "q_general",
                                         "hit_within_t_ball", "cdf_prob", "sausage_expect"]),
]


def test_c02_scaling_suite(report, tmp_path):
    worst, count = 0.0, 0
    for k, (d, regime, xs, ts, formulas) in enumerate(_SCALING_CASES):
        conf = parse_config({"schema": 1, "name": f"scale{k}", "shape": _BALL[d], "regime": regime,
                             "grid": {"x": xs, "t": ts}, "cfg": {"step": 0.001, "horizon": 1.0, "n_paths": 100},
                             "formulas": formulas})
        summary = cmd_scaling_check(conf, tmp_path / f"s{k}")
        worst = max(worst, summary["max_rel_err"])
        count += len(formulas)
    report(2, worst <= 1e-12, f"max relative error {worst:.3e} over {count} evaluator/regime pairs, "
                              f"R in (0.5, 2, 7) (tol 1e-12)")


def test_c12_bound_shape(report):
    def ratios(xs, ts):
        out = []
        for x in xs:
            for t in ts:
                exact = asy.q_ball_exact_d3(1.0, float(x), float(t))
                shape = asy.q_ball_bound(asy.FormulaPoint(3, float(x), float(t), 1.0))
                if exact > 1e-300 and shape > 1e-300:
                    out.append(exact / shape)
        return np.array(out)

    r1 = ratios(np.geomspace(1.1, 50, 10), np.geomspace(0.1, 1e4, 10))
    r2 = ratios(np.geomspace(1.05, 200, 17), np.geomspace(0.05, 1e5, 17))
    finite = np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))
    spread = max(r1.max(), r2.max()) / min(r1.min(), r2.min()) - 1.0
    drift = abs(np.median(r2) / np.median(r1) - 1.0)
    ok = finite and drift <= 0.10 and spread <= 0.10
    report(12, ok, f"exact/shape constant in [{r1.min():.6g}, {r1.max():.6g}] and "
                   f"[{r2.min():.6g}, {r2.max():.6g}] on two grids; median drift {drift:.2e} (reported, tol 10%)")


# ---------------------------------------------------------------------------
# Monte Carlo criteria


def test_c03_hit_probability(report):
    cfg = SimConfig(step=1e-3, horizon=100.0, n_paths=1_000_000, seed=301)
    est = point_hit_probability(geometry.ball(3, 1.0), [2.0, 0.0, 0.0], cfg)
    z = est.z_score(0.5)
    err = abs(est.mean - 0.5)
    report(3, abs(z) <= 3 and err < 0.005, f"P = {est.mean:.5f} +- {est.stderr:.5f}, z = {z:+.2f}, "
                                           f"|err| = {err:.2e} (need |z| <= 3, |err| < 0.005)")


def test_c04_density_histogram(report):
    cfg = SimConfig(step=1e-3, horizon=200.0, n_paths=1_000_000, seed=401)
    edges = np.geomspace(0.05, 200.0, 25)
    hist = hit_histogram(geometry.ball(3, 1.0), [2.0, 0.0, 0.0], cfg, edges)
    cdf = lambda t: 0.5 * math.erfc(1.0 / math.sqrt(2.0 * t))  # noqa: E731
    exact = np.array([(cdf(b) - cdf(a)) / (b - a) for a, b in zip(edges[:-1], edges[1:])])
    expected_counts = exact * hist.widths * cfg.n_paths
    well = expected_counts >= 1000
    z = (hist.values - exact) / hist.stderr
    worst = float(np.max(np.abs(z[well])))
    rel = float(np.max(np.abs(hist.values[well] / exact[well] - 1.0)))
    report(4, worst <= 3.0, f"{int(well.sum())} well-populated bins, max |err|/stderr = {worst:.2f}, "
                            f"max rel err {rel:.2e} (need <= 3)")


def test_c05_capacity(report):
    cfg = SimConfig(step=1e-3, horizon=100.0, n_paths=1_000_000, seed=501)
    est = capacity_mc(geometry.ball(3, 1.0), cfg)
    rel = abs(est.mean / (2 * math.pi) - 1.0)
    report(5, rel <= 0.02, f"Cap = {est.mean:.4f} +- {est.stderr:.4f} vs 2 pi = {2 * math.pi:.4f}, "
                           f"rel err {rel:.2%} (tol 2%)")


def test_c06_planar_potential(report):
    cfg = SimConfig(step=2e-3, horizon=10.0, n_paths=400_000, seed=601)
    u1 = green_e_mc(geometry.ball(2, 1.0), [math.e, 0.0], cfg)
    u2 = green_e_mc(geometry.ball(2, 2.0), [3.0, 0.0], cfg.with_(seed=602, step=8e-3))
    seg = ShapeSpec(2, (Segment((-2.0, 0.0), (2.0, 0.0)),))
    sg = green_e_mc(seg, [0.0, 3.0], cfg.with_(seed=603, n_paths=1_000_000))
    e_err = abs(u1.e.mean - 1.0)
    l2_err = abs(u2.lcap.mean / 2.0 - 1.0)
    s_err = abs(sg.lcap.mean - 1.0)
    ok = e_err <= 0.03 and l2_err <= 0.05 and s_err <= 0.07
    report(6, ok, f"e_U(1)((e,0)) = {u1.e.mean:.4f} +- {u1.e.stderr:.4f} (3%), "
                  f"lcap U(2) = {u2.lcap.mean:.4f} +- {u2.lcap.stderr:.4f} (5%), "
                  f"lcap segment L=4 = {sg.lcap.mean:.4f} +- {sg.lcap.stderr:.4f} (7%)")


def test_c07_site_law(report):
    x = t = 50.0
    cfg = SimConfig(step=1e-3, horizon=60.0, n_paths=200_000, seed=701)
    hist = site_histogram(geometry.ball(2, 1.0), [x, 0.0], cfg, 12, 0.05, t_target=t)
    e = hist.edges
    order = Order(2)
    ref = np.array([integrate(lambda th: g_density(order, x / t, th) / math.pi, lo, hi)
                    for lo, hi in zip(e[:-1], e[1:])])
    tv = 0.5 * float(np.abs(hist.values - ref).sum())
    report(7, tv < 0.05, f"TV(MC, g_v) = {tv:.4f} with {hist.meta.get('hits_in_window', hist.n)} hits in the window "
                         f"(need < 0.05)")


def test_c08_sausage_small_v(report):
    t = 500.0
    cfg = SimConfig(step=0.02, horizon=t, n_paths=100, seed=801)
    est = sausage_volume_mc(geometry.ball(3, 1.0), t, [0.0, 0.0, 0.0], cfg, voxel=0.25)
    ratio = est.mean / (2 * math.pi * t)
    report(8, 0.9 <= ratio <= 1.1, f"E vol / (2 pi t) = {ratio:.4f} +- {est.stderr / (2 * math.pi * t):.4f}, "
                                   f"discretisation size {est.systematic / (2 * math.pi * t):.4f} "
                                   f"(band [0.9, 1.1])")


def test_c09_sausage_transverse(report):
    cfg = SimConfig(step=0.04, horizon=4.0, n_paths=200, seed=901)
    est = sausage_volume_mc(geometry.ball(2, 1.0), 4.0, [400.0, 0.0], cfg, voxel=0.25)
    ratio = est.mean / 800.0
    report(9, 0.9 <= ratio <= 1.1, f"E vol / (2 * 400) = {ratio:.4f} +- {est.stderr / 800.0:.4f} (band [0.9, 1.1])")


def test_c10_cameron_martin(report):
    parts, ok = [], True
    for k, v in enumerate((0.5, 2.0)):
        cfg = SimConfig(step=1e-3, horizon=20.0, n_paths=100_000, seed=1001 + k)
        pair = cameron_martin_pair(geometry.ball(3, 1.0), [3.0, 0.0, 0.0], [v, 0.0, 0.0], cfg)
        overlaps = [intervals_overlap(a, b) for a, b in pair.values()]
        zmax = max(abs(paired_z(a, b)) for a, b in pair.values())
        ok = ok and len(pair) == 5 and all(overlaps)
        parts.append(f"v={v}: {sum(overlaps)}/5 CIs overlap, max |z| {zmax:.2f}")
    report(10, ok, "; ".join(parts))


def test_c11_lambda_zero(report):
    cfg = SimConfig(step=1e-3, horizon=100.0, n_paths=100_000, seed=1101)
    est = lambda_profile_mc(geometry.ball(3, 1.0), 0.0, None, cfg)
    z = est.z_score(1.0)
    report(11, abs(z) <= 3, f"lambda(0) = {est.mean:.5f} +- {est.stderr:.5f}, z = {z:+.2f} (need |z| <= 3)")


# ---------------------------------------------------------------------------
# reproducibility


def test_c13_reruns_byte_identical(report, tmp_path):
    conf = {"schema": 1, "name": "repro", "shape": _BALL[3], "regime": "order_v",
            "grid": {"x": [2.0, 3.0], "t": [1.0, 4.0]},
            "cfg": {"step": 0.002, "horizon": 10.0, "n_paths": 20000, "seed": 1301, "chunk_size": 4000},
            "estimates": ["hit_probability", "hit_density", "capacity", "site_law", "cameron_martin"],
            "v_values": [0.5], "angular_bins": 6}
    path = tmp_path / "repro.json"
    path.write_text(json.dumps(conf))
    blobs = []
    for k, workers in enumerate(("1", "1", "2")):
        out = tmp_path / f"run{k}"
        code = cli.main(["estimate", "--config", str(path), "--out", str(out), "--workers", workers])
        assert code == 0
        blobs.append((out / "estimates.json").read_bytes())
    shipped = sorted(Path(__file__).resolve().parents[1].joinpath("configs").glob("*.json"))
    ok = blobs[0] == blobs[1] == blobs[2] and len(shipped) > 0
    report(13, ok, f"estimates.json identical across 2 reruns and workers=2 ({len(blobs[0])} bytes)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
