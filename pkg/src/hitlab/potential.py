"""Monte Carlo estimators of capacities, escape probabilities, the 2-d Green
function with pole at infinity, Robin's constant and harmonic measure from
infinity."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .geometry import ShapeSpec
from .montecarlo import (Estimate, Histogram, SimConfig, derived_seed, point_hit_probability, simulate,
                         sphere_hit_probability)
from .montecarlo.renewal import Radii, default_radii
from .specfun import DomainError, green_kernel


class DegenerateSystemError(ArithmeticError):
    """The two-radius linear system cannot be solved from the estimates."""


def capacity_mc(shape: ShapeSpec, cfg: SimConfig) -> Estimate:
    """Cap(A) = Cap(U(R)) P_{m_R}[sigma_A < inf] with R = 2 r_out (d >= 3)."""
    if shape.d < 3:
        raise DomainError("Newtonian capacity needs d >= 3; use robin_const/green_e_mc in d = 2")
    radii = default_radii(shape)
    p = sphere_hit_probability(shape, cfg, radii)
    cap_ref = radii.reference ** (shape.d - 2) / green_kernel(shape.d, 1.0)
    return p.scaled(cap_ref)


def escape_prob(shape: ShapeSpec, x, cfg: SimConfig) -> Estimate:
    """P_x[sigma_A = inf] (d >= 3)."""
    if shape.d < 3:
        raise DomainError("escape probability is 0 in d = 2 (recurrence)")
    x = np.asarray(x, dtype=float)
    if geometry.contains(shape, x):
        raise DomainError("x lies in the shape")
    hit = point_hit_probability(shape, x, cfg)
    return Estimate(1.0 - hit.mean, hit.stderr, hit.n, hit.seed)


# ---------------------------------------------------------------------------
# d = 2


@dataclass(frozen=True)
class GreenSolve:
    e: Estimate
    lcap: Estimate
    p1: float
    p2: float
    radii: tuple


def _solve_two_radius(p1: float, p2: float, l1: float, l2: float) -> tuple[float, float]:
    """e = P_i (L_i - c); returns (e, c) with c = lg lcap."""
    if p1 <= 0 or p2 <= 0 or p1 <= p2:
        raise DegenerateSystemError(f"need P1 > P2 > 0, got P1={p1}, P2={p2}")
    e = p1 * p2 * (l2 - l1) / (p1 - p2)
    return e, l1 - e / p1


def _green_from_batch(batch, r1: float, r2: float, r_a: float, seed: int) -> GreenSolve:
    m1 = batch.marked.astype(float)
    # paths still alive at the horizon are counted as having reached r2
    m2 = (~batch.hit).astype(float)
    p1, p2 = float(m1.mean()), float(m2.mean())
    l1, l2 = math.log(r1), math.log(r2)
    e, c = _solve_two_radius(p1, p2, l1, l2)
    # delta method with per-path influence (the two indicators are paired)
    dp = p1 - p2
    de_dp1 = -p2 * p2 * (l2 - l1) / dp ** 2
    de_dp2 = p1 * p1 * (l2 - l1) / dp ** 2
    infl_e = de_dp1 * (m1 - p1) + de_dp2 * (m2 - p2)
    # c = l1 - e/p1
    infl_c = -infl_e / p1 + e / p1 ** 2 * (m1 - p1)
    n = batch.n
    se_e = float(infl_e.std(ddof=1) / math.sqrt(n))
    se_c = float(infl_c.std(ddof=1) / math.sqrt(n))
    # bias bound: each e/P_i may deviate from lg(r_i/lcap) by -lg(1 - R_A/r_i)
    d1, d2 = -math.log(1.0 - r_a / r1), -math.log(1.0 - r_a / r2)
    dev_e = dev_c = 0.0
    for s1, s2 in itertools.product((-1.0, 1.0), repeat=2):
        e_alt, c_alt = _solve_two_radius(p1, p2, l1 + s1 * d1, l2 + s2 * d2)
        dev_e = max(dev_e, abs(e_alt - e))
        dev_c = max(dev_c, abs(c_alt - c))
    lcap = math.exp(c)
    return GreenSolve(
        e=Estimate(e, se_e, n, seed, systematic=dev_e),
        lcap=Estimate(lcap, lcap * se_c, n, seed, systematic=lcap * (math.exp(dev_c) - 1.0)),
        p1=p1, p2=p2, radii=(r1, r2),
    )


def _check_radii(shape: ShapeSpec, radii, x_norm: float = 0.0) -> tuple[float, float]:
    r_a = geometry.r_out(shape)
    if radii is None:
        r1 = max(4.0 * r_a, 2.0 * x_norm)
        radii = (r1, 2.0 * r1)
    r1, r2 = float(radii[0]), float(radii[1])
    if not r1 < r2:
        raise DomainError("radii must satisfy r1 < r2")
    if r1 < 4.0 * r_a:
        raise DomainError(f"r1 must be >= 4 r_out = {4.0 * r_a}")
    if x_norm >= r1:
        raise DomainError("start must lie inside U(r1)")
    return r1, r2


def green_e_mc(shape: ShapeSpec, x, cfg: SimConfig, radii: Optional[Sequence[float]] = None) -> GreenSolve:
    """e_A(x) and lcap(A) from P_x[sigma_{dU(r_i)} < sigma_A], i = 1, 2 (d = 2).

    Solves e = P_i (lg r_i - lg lcap).  The horizon is raised to 8 r2^2 if needed.
    The returned Estimates carry the propagated bias bound as ``systematic``.
    """
    if shape.d != 2:
        raise DomainError("green_e_mc is for d = 2")
    x = np.asarray(x, dtype=float)
    if geometry.contains(shape, x):
        raise DomainError("x lies in the shape")
    r1, r2 = _check_radii(shape, radii, float(np.linalg.norm(x)))
    run = cfg.with_(horizon=max(cfg.horizon, 8.0 * r2 * r2))
    batch = simulate(shape, x, run, outer_radius=r2, mark_radius=r1)
    return _green_from_batch(batch, r1, r2, geometry.r_out(shape), cfg.seed)


@dataclass(frozen=True)
class RobinResult:
    robin: Estimate
    lcap: Estimate
    mean_e: Estimate
    radius: float


def robin_const(shape: ShapeSpec, cfg: SimConfig, radius: Optional[float] = None,
                radii: Optional[Sequence[float]] = None) -> RobinResult:
    """V(A) = -lg R + m_R(e_A), with m_R(e_A) from starts uniform on dU(R), R = 2 r_out.

    ``mean_e`` is m_R(e_A) itself (for R = 2 r_out this is the constant beta_A).
    """
    if shape.d != 2:
        raise DomainError("Robin's constant is defined here for d = 2")
    r_a = geometry.r_out(shape)
    big_r = float(radius) if radius is not None else 2.0 * r_a
    if big_r <= r_a:
        raise DomainError("radius must exceed r_out")
    r1, r2 = _check_radii(shape, radii if radii is not None else (max(4.0 * r_a, 2.0 * big_r),
                                                                     2.0 * max(4.0 * r_a, 2.0 * big_r)), big_r)
    run = cfg.with_(horizon=max(cfg.horizon, 8.0 * r2 * r2))
    batch = simulate(shape, ("sphere", big_r), run, outer_radius=r2, mark_radius=r1)
    solve = _green_from_batch(batch, r1, r2, r_a, cfg.seed)
    mean_e = solve.e
    robin = Estimate(-math.log(big_r) + mean_e.mean, mean_e.stderr, mean_e.n, cfg.seed, mean_e.systematic)
    lcap = math.exp(-robin.mean)
    return RobinResult(robin=robin, lcap=Estimate(lcap, lcap * robin.stderr, robin.n, cfg.seed,
                                                  lcap * (math.exp(robin.systematic) - 1.0)),
                       mean_e=mean_e, radius=big_r)


# ---------------------------------------------------------------------------
# harmonic measure from infinity


def harmonic_measure_inf(shape: ShapeSpec, cfg: SimConfig, bins=12, axis=None, center=None,
                         start_factor: float = 16.0) -> Histogram:
    """Hitting-site law for starts uniform on dU(start_factor * r_out), conditioned on hitting.

    The angular histogram is over cos(colatitude) in d = 3 (uniform for a
    centred ball) and over the colatitude in d = 2, both about ``center``
    (default origin) from ``axis`` (default e_0).  ``meta['primitive_mass']``
    holds the fraction of hits landing on each primitive with its stderr.
    """
    d = shape.d
    r_a = geometry.r_out(shape)
    start_r = start_factor * r_a
    outer = 4.0 * start_r
    run = cfg.with_(horizon=max(cfg.horizon, 8.0 * outer * outer))
    batch = simulate(shape, ("sphere", start_r), run, outer_radius=outer)
    hits = batch.hit
    n_hits = int(hits.sum())
    ax = np.zeros(d)
    ax[0] = 1.0
    if axis is not None:
        ax = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    centre = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    rel = batch.site[hits] - centre
    cos = np.clip(rel @ ax / np.linalg.norm(rel, axis=1), -1.0, 1.0)
    if d == 3:
        coord = cos
        edges = np.linspace(-1.0, 1.0, bins + 1) if np.ndim(bins) == 0 else np.asarray(bins, float)
    else:
        coord = np.arccos(cos)
        edges = np.linspace(0.0, math.pi, bins + 1) if np.ndim(bins) == 0 else np.asarray(bins, float)
    counts, _ = np.histogram(coord, edges)
    frac = counts / max(n_hits, 1)
    err = np.sqrt(frac * (1 - frac) / max(n_hits, 1))
    prim_counts = np.bincount(batch.prim[hits], minlength=len(shape.primitives))
    prim_frac = prim_counts / max(n_hits, 1)
    prim_err = np.sqrt(prim_frac * (1 - prim_frac) / max(n_hits, 1))
    return Histogram(edges=edges, values=frac, stderr=err, n=n_hits, seed=cfg.seed,
                     meta={"kind": "mass", "coordinate": "cos_colatitude" if d == 3 else "colatitude",
                           "start_radius": start_r, "paths": batch.n, "hits": n_hits,
                           "flag_low_count": n_hits < 1000,
                           "primitive_mass": [float(v) for v in prim_frac],
                           "primitive_stderr": [float(v) for v in prim_err]})


# ---------------------------------------------------------------------------
# summary


@dataclass
class PotentialSummary:
    d: int
    cap: Optional[Estimate] = None
    p_escape_at: dict = field(default_factory=dict)
    e_at: dict = field(default_factory=dict)
    robin: Optional[Estimate] = None
    lcap: Optional[Estimate] = None
    beta: Optional[Estimate] = None
    hinf: Optional[Histogram] = None

    def to_json(self) -> dict:
        def pts(mapping):
            return [{"x": list(k), **v.to_json()} for k, v in mapping.items()]

        out = {"d": self.d}
        if self.cap is not None:
            out["cap"] = self.cap.to_json()
        if self.p_escape_at:
            out["p_escape_at"] = pts(self.p_escape_at)
        if self.e_at:
            out["e_at"] = pts(self.e_at)
        for name in ("robin", "lcap", "beta"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val.to_json()
        if self.hinf is not None:
            out["hinf"] = self.hinf.to_json()
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def potential_summary(shape: ShapeSpec, cfg: SimConfig, points: Sequence = (), bins: int = 12) -> PotentialSummary:
    """Everything the general-set formulas consume, for one shape."""
    out = PotentialSummary(d=shape.d)
    if shape.d >= 3:
        out.cap = capacity_mc(shape, cfg)
        for k, x in enumerate(points):
            out.p_escape_at[tuple(float(c) for c in x)] = escape_prob(shape, x, cfg.with_(seed=derived_seed(cfg.seed, k + 2)))
    else:
        rob = robin_const(shape, cfg)
        out.robin, out.lcap, out.beta = rob.robin, rob.lcap, rob.mean_e
        for k, x in enumerate(points):
            solve = green_e_mc(shape, x, cfg.with_(seed=derived_seed(cfg.seed, k + 2)))
            out.e_at[tuple(float(c) for c in x)] = solve.e
    out.hinf = harmonic_measure_inf(shape, cfg.with_(seed=derived_seed(cfg.seed, 99)), bins=bins)
    return out
