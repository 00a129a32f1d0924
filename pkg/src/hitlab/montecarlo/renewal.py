"""Hitting probabilities without horizon truncation, via two absorbing radii.

A path is run until it hits A or reaches the sphere of radius rho.  A path
that reaches rho comes back to U(R) (R = 2 r_out) with the exact probability
c = (R/rho)^{d-2}; after returning it is credited with the hit probability
from the uniform law on the sphere of radius R.  The residual error of that
approximation is O(R/rho), and combining two radii rho_2 = 2 rho_1 linearly
in 1/rho removes the first-order part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .. import geometry
from ..geometry import ShapeSpec
from ..specfun import DomainError, Order, g_density
from .core import SimConfig, simulate
from .stats import Estimate

_SEED_OFFSET = 0x9E3779B97F4A7C15


def derived_seed(seed: int, k: int = 1) -> int:
    """Deterministic companion seed for an auxiliary simulation."""
    return (int(seed) + k * _SEED_OFFSET) % 2 ** 64


@dataclass(frozen=True)
class Radii:
    reference: float
    rho1: float
    rho2: float

    def returns(self, d: int) -> tuple[float, float]:
        nu2 = d - 2
        return (self.reference / self.rho1) ** nu2, (self.reference / self.rho2) ** nu2

    @property
    def weights(self) -> tuple[float, float]:
        span = self.rho2 - self.rho1
        return self.rho1 / span, self.rho2 / span


def default_radii(shape: ShapeSpec, start_radius: float = 0.0) -> Radii:
    ref = 2.0 * geometry.r_out(shape)
    rho1 = max(4.0 * ref, 2.0 * start_radius)
    return Radii(ref, rho1, 2.0 * rho1)


def _renewal_cfg(cfg: SimConfig, radii: Radii) -> SimConfig:
    # a path alive at the horizon is credited as if it had reached rho2; a
    # horizon of 8 rho2^2 keeps those paths rare
    return cfg.with_(horizon=max(cfg.horizon, 8.0 * radii.rho2 ** 2))


def sphere_hit_probability(shape: ShapeSpec, cfg: SimConfig, radii: Optional[Radii] = None) -> Estimate:
    """P[sigma_A < inf] for starts uniform on the sphere of radius 2 r_out (d >= 3)."""
    if shape.d < 3:
        raise DomainError("hit probability below 1 requires d >= 3")
    radii = radii or default_radii(shape)
    batch = simulate(shape, ("sphere", radii.reference), _renewal_cfg(cfg, radii),
                     outer_radius=radii.rho2, mark_radius=radii.rho1)
    h2 = batch.hit.astype(float)
    h1 = (batch.hit & ~batch.marked).astype(float)
    c1, c2 = radii.returns(shape.d)
    w1, w2 = radii.weights
    a1, a2 = h1.mean(), h2.mean()

    def renew(a, c):
        den = 1.0 - (1.0 - a) * c
        return a / den, (1.0 - c) / den ** 2

    p1, dp1 = renew(a1, c1)
    p2, dp2 = renew(a2, c2)
    mean = w2 * p2 - w1 * p1
    influence = w2 * dp2 * (h2 - a2) - w1 * dp1 * (h1 - a1)
    stderr = float(influence.std(ddof=1) / math.sqrt(batch.n))
    return Estimate(float(mean), stderr, batch.n, cfg.seed)


def point_hit_probability(shape: ShapeSpec, x, cfg: SimConfig, radii: Optional[Radii] = None,
                          sphere_estimate: Optional[Estimate] = None) -> Estimate:
    """P_x[sigma_A < inf] (d >= 3) from the point x."""
    if shape.d < 3:
        raise DomainError("hit probability below 1 requires d >= 3")
    x = np.asarray(x, dtype=float)
    radii = radii or default_radii(shape, float(np.linalg.norm(x)))
    if np.linalg.norm(x) >= radii.rho1:
        raise DomainError("start must lie inside the first absorbing radius")
    if sphere_estimate is None:
        sphere_estimate = sphere_hit_probability(shape, cfg.with_(seed=derived_seed(cfg.seed)),
                                                 Radii(radii.reference, radii.rho1, radii.rho2))
    pbar = sphere_estimate.mean
    batch = simulate(shape, x, _renewal_cfg(cfg, radii), outer_radius=radii.rho2, mark_radius=radii.rho1)
    c1, c2 = radii.returns(shape.d)
    w1, w2 = radii.weights
    h1 = (batch.hit & ~batch.marked).astype(float)
    e1 = batch.marked.astype(float)
    h2 = batch.hit.astype(float)
    e2 = (~batch.hit).astype(float)
    y1 = h1 + e1 * c1 * pbar
    y2 = h2 + e2 * c2 * pbar
    per_path = w2 * y2 - w1 * y1
    mean = float(per_path.mean())
    var_main = per_path.var(ddof=1) / batch.n
    sens = w2 * c2 * e2.mean() - w1 * c1 * e1.mean()
    stderr = math.sqrt(var_main + (sens * sphere_estimate.stderr) ** 2)
    return Estimate(mean, stderr, batch.n, cfg.seed)


def lambda_profile_mc(shape: ShapeSpec, v: float, selector: Optional[Callable], cfg: SimConfig,
                      e=None) -> Estimate:
    """lambda_A(v e; E) = R^{2 nu} E_{xi ~ g_{Rv} m_1}[e^{-v^2 sigma/2} 1{B_sigma in E}], R = r_out.

    Starts R xi are drawn uniformly and importance-weighted by g_{Rv}(theta(xi)),
    theta measured from ``e`` (default e_0).  A start in the closed set has sigma = 0.
    At v = 0 paths leaving the sphere of radius 16 R get the renewal credit
    described in the module docstring.
    """
    if v < 0:
        raise DomainError("v must be >= 0")
    d = shape.d
    rad = geometry.r_out(shape)
    ev = np.zeros(d)
    ev[0] = 1.0
    if e is not None:
        ev = np.asarray(e, dtype=float) / np.linalg.norm(e)
    nu2 = d - 2
    if v > 0:
        # e^{-v^2 sigma / 2} < e^{-40} past this horizon
        horizon = 80.0 / (v * v)
        outer = math.inf
    else:
        outer = 16.0 * rad
        horizon = max(cfg.horizon, 8.0 * outer * outer)
    run_cfg = cfg.with_(horizon=max(horizon, 100.0 * cfg.step))
    batch = simulate(shape, ("sphere", rad), run_cfg, outer_radius=outer, check_start=False)
    starts = batch.starts
    inside = np.asarray(geometry.contains(shape, starts), dtype=bool)
    sigma = np.where(inside, 0.0, batch.sigma)
    sites = np.where(inside[:, None], starts, batch.site)
    hit = inside | batch.hit
    theta = np.arccos(np.clip(starts @ ev / rad, -1.0, 1.0))
    weight = g_density(Order(d), rad * v, theta)
    in_e = np.ones(batch.n, dtype=bool)
    if selector is not None:
        in_e = np.zeros(batch.n, dtype=bool)
        if hit.any():
            in_e[hit] = np.asarray(selector(sites[hit]), dtype=bool)
    decay = np.where(hit, np.exp(-0.5 * v * v * np.nan_to_num(sigma, nan=0.0)), 0.0)
    y_e = weight * decay * (hit & in_e)
    scale = rad ** nu2
    if v > 0:
        mean = float(y_e.mean())
        return Estimate(scale * mean, scale * float(y_e.std(ddof=1) / math.sqrt(batch.n)), batch.n, cfg.seed)
    # v = 0: weights are 1; renewal credit for paths that left the outer sphere
    c = (rad / outer) ** nu2 if nu2 > 0 else 1.0
    y_hit = hit.astype(float)
    a_e, a_hit = y_e.mean(), y_hit.mean()
    den = 1.0 - c * (1.0 - a_hit)
    p = a_e / den
    influence = (y_e - a_e) / den - a_e * c * (y_hit - a_hit) / den ** 2
    stderr = float(influence.std(ddof=1) / math.sqrt(batch.n)) if batch.n > 1 else 0.0
    return Estimate(scale * float(p), scale * stderr, batch.n, cfg.seed)
