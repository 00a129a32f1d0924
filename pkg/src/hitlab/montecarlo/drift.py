"""Cameron-Martin comparison of drifted and reweighted driftless hitting statistics."""
from __future__ import annotations

import math
from typing import Callable, Mapping

import numpy as np

from ..geometry import ShapeSpec
from ..specfun import DomainError
from .core import HitBatch, SimConfig, drifted_hit, first_hit
from .renewal import derived_seed
from .stats import Estimate, estimate_of

Functional = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def standard_functionals(e, horizon: float) -> dict[str, Functional]:
    """Five bounded functionals of (sigma, xi), all vanishing on {sigma > horizon}."""
    ev = np.asarray(e, dtype=float)
    half = 0.5 * horizon

    def hit(h, s, x):
        return h.astype(float)

    def early(h, s, x):
        return (h & (s <= half)).astype(float)

    def front(h, s, x):
        return (h & (x @ ev > 0)).astype(float)

    def decay(h, s, x):
        return np.where(h, np.exp(-np.where(h, s, 0.0)), 0.0)

    def facing(h, s, x):
        norms = np.linalg.norm(np.where(h[:, None], x, 1.0), axis=1)
        cos = np.where(h, (np.where(h[:, None], x, 0.0) @ ev) / norms, 0.0)
        return np.where(h, 0.5 * (1.0 + cos), 0.0)

    return {"hit": hit, "hit_before_half_horizon": early, "hit_front": front,
            "exp_minus_sigma": decay, "facing_cosine": facing}


def _values(batch: HitBatch, func: Functional) -> np.ndarray:
    site = np.nan_to_num(batch.site, nan=0.0)
    sigma = np.nan_to_num(batch.sigma, nan=0.0)
    return np.asarray(func(batch.hit, sigma, site), dtype=float)


def cameron_martin_pair(shape: ShapeSpec, start, v_vec, cfg: SimConfig,
                        functionals: Mapping[str, Functional] | None = None) -> dict[str, tuple[Estimate, Estimate]]:
    """E[phi(sigma, xi)] for the motion B_s - v s, estimated twice.

    The first estimate simulates the drifted motion.  The second simulates
    driftless paths (independent seed) and weights each hit by
    exp(v.x - |v|^2 sigma / 2 - v.xi).  Both runs stop at ``cfg.horizon`` and
    every functional must vanish on {sigma > horizon}.
    """
    v = np.asarray(v_vec, dtype=float)
    x = np.asarray(start, dtype=float)
    if v.shape != x.shape or x.shape != (shape.d,):
        raise DomainError("start and v must be points in R^d")
    norm = float(np.linalg.norm(v))
    e = v / norm if norm > 0 else np.eye(shape.d)[0]
    funcs = functionals or standard_functionals(e, cfg.horizon)
    drifted = drifted_hit(shape, x, v, cfg)
    plain = first_hit(shape, x, cfg.with_(seed=derived_seed(cfg.seed, 7)))
    sigma = np.nan_to_num(plain.sigma, nan=0.0)
    site = np.nan_to_num(plain.site, nan=0.0)
    logw = float(v @ x) - 0.5 * norm * norm * sigma - site @ v
    weight = np.where(plain.hit, np.exp(np.where(plain.hit, logw, 0.0)), 0.0)
    out = {}
    for name, func in funcs.items():
        out[name] = (estimate_of(_values(drifted, func), cfg.seed),
                     estimate_of(_values(plain, func) * weight, plain.seed))
    return out


def intervals_overlap(a: Estimate, b: Estimate) -> bool:
    lo_a, hi_a = a.ci95
    lo_b, hi_b = b.ci95
    return max(lo_a, lo_b) <= min(hi_a, hi_b)


def paired_z(a: Estimate, b: Estimate) -> float:
    se = math.hypot(a.stderr, b.stderr)
    return 0.0 if se == 0 else (a.mean - b.mean) / se
