"""Brownian bridges and voxelized Wiener sausages."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import geometry
from ..geometry import ShapeSpec
from ..specfun import DomainError
from . import _kernel
from .core import ResourceError, SimConfig, run_chunks
from .stats import Accumulator, Estimate

DEFAULT_MAX_GRID_BYTES = 1 << 30


@dataclass(frozen=True)
class BridgeSampler:
    """Brownian bridge on [0, t] from the origin to ``endpoint`` on a grid of pitch ~``step``.

    The path is W_s + drift*s - (s/t)(W_t + drift*t - endpoint); the drift
    cancels exactly, so bridges of drifted and driftless motion coincide.
    """

    t: float
    endpoint: np.ndarray
    n_steps: int
    drift: Optional[np.ndarray] = None

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t, self.n_steps + 1)

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Array of shape (n, n_steps + 1, d)."""
        d = self.endpoint.size
        h = self.t / self.n_steps
        incr = rng.standard_normal((n, self.n_steps, d)) * math.sqrt(h)
        w = np.zeros((n, self.n_steps + 1, d))
        np.cumsum(incr, axis=1, out=w[:, 1:, :])
        s = self.times[None, :, None]
        if self.drift is not None:
            w += s * self.drift[None, None, :]
        return w - (s / self.t) * (w[:, -1:, :] - self.endpoint[None, None, :])


def bridge_paths(t: float, endpoint, cfg: SimConfig, drift=None) -> BridgeSampler:
    if not t > 0:
        raise DomainError("t must be > 0")
    end = np.asarray(endpoint, dtype=float)
    n_steps = max(1, int(math.ceil(t / cfg.step - 1e-9)))
    return BridgeSampler(float(t), end, n_steps, None if drift is None else np.asarray(drift, dtype=float))


def max_grid_bytes() -> int:
    raw = os.environ.get("LAB_MAX_GRID_BYTES")
    if raw is None:
        return DEFAULT_MAX_GRID_BYTES
    try:
        val = int(float(raw))
    except ValueError:
        raise DomainError(f"LAB_MAX_GRID_BYTES must be a number, got {raw!r}") from None
    if val <= 0:
        raise DomainError("LAB_MAX_GRID_BYTES must be positive")
    return val


def _primitive_extent(shape: ShapeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-primitive bounding boxes of A (relative offsets for the voxel scan)."""
    d = shape.d
    lo = np.empty((len(shape.primitives), d))
    hi = np.empty((len(shape.primitives), d))
    for j, prim in enumerate(shape.primitives):
        if isinstance(prim, geometry.Ball):
            c = np.array(prim.center)
            lo[j], hi[j] = c - prim.radius, c + prim.radius
        elif isinstance(prim, geometry.Box):
            lo[j], hi[j] = prim.min, prim.max
        elif isinstance(prim, geometry.Segment):
            pts = np.array([prim.p, prim.q])
            lo[j], hi[j] = pts.min(axis=0), pts.max(axis=0)
        else:
            base, u = np.array(prim.base_center), np.array(prim.axis)
            top = base + prim.height * u
            spread = prim.radius * np.sqrt(np.clip(1.0 - u * u, 0.0, 1.0))
            lo[j] = np.minimum(base, top) - spread
            hi[j] = np.maximum(base, top) + spread
    return lo, hi


def _mark_volume(path, kinds, params, off_lo, off_hi, voxel, cap):
    d = path.shape[1]
    lo = path.min(axis=0) + off_lo.min(axis=0)
    hi = path.max(axis=0) + off_hi.max(axis=0)
    origin = np.floor(lo / voxel) * voxel - voxel
    shape = np.ceil((hi - origin) / voxel).astype(np.int64) + 2
    n_bytes = int(np.prod(shape))
    if n_bytes > cap:
        raise ResourceError(f"sausage grid needs {n_bytes} bytes (cap {cap}); "
                            "raise LAB_MAX_GRID_BYTES or use a coarser voxel")
    grid = np.zeros(tuple(shape) + ((1,) if d == 2 else ()), dtype=np.bool_)
    return _kernel.mark_sausage(path, kinds, params, origin, voxel, shape, grid, off_lo, off_hi) * voxel ** d


def _sausage_task(payload, rng, n):
    sampler, kinds, params, off_lo, off_hi, voxel, cap, coarsen = payload
    out = np.empty((n, 2))
    for k in range(n):
        path = sampler.sample(rng, 1)[0]
        out[k, 0] = _mark_volume(path, kinds, params, off_lo, off_hi, voxel, cap)
        if coarsen > 1:
            out[k, 1] = _mark_volume(path[::coarsen], kinds, params, off_lo, off_hi, voxel, cap)
        else:
            out[k, 1] = out[k, 0]
    return out


def sausage_volume_mc(shape: ShapeSpec, t: float, endpoint, cfg: SimConfig, voxel: float,
                      extrapolate: bool = True) -> Estimate:
    """E_0[vol S_A(t) | B_t = endpoint] by voxel counting along bridge paths.

    A voxel is marked when its centre z satisfies z - B_s in A for a sampled s.
    The time step is reduced below ``cfg.step`` when needed so that consecutive
    path points are less than a voxel apart, both through the mean motion
    (|endpoint| h / t) and through the fluctuations (sqrt h).

    Sampling the path at step h misses part of the sausage, with a deficit
    close to c sqrt(h).  With ``extrapolate`` every path is also marked at
    step 4h (its own subsample) and the two volumes are combined as
    2 V(h) - V(4h), which cancels that term.  ``systematic`` then reports
    |V(h) - V(4h)| / 4 as a rough size for the remaining discretisation error.
    """
    rad = geometry.r_out(shape)
    if not 0 < voxel <= rad / 4.0:
        raise DomainError(f"voxel must lie in (0, r_out/4] = (0, {rad / 4.0}]")
    end = np.asarray(endpoint, dtype=float)
    if end.shape != (shape.d,):
        raise DomainError("endpoint dimension mismatch")
    step = min(cfg.step, voxel * voxel)
    speed = float(np.linalg.norm(end)) / t
    if speed > 0:
        step = min(step, 0.5 * voxel / speed)
    sampler = bridge_paths(t, end, cfg.with_(step=min(step, t / 100.0)))
    kinds, params = shape.encode()
    off_lo, off_hi = _primitive_extent(shape)
    h = t / sampler.n_steps
    # the sqrt(h) law holds while fluctuations dominate the per-step motion;
    # in the drift-dominated case the fine step alone is already accurate
    diffusive = speed * math.sqrt(4.0 * h) <= 1.0
    coarsen = 4 if extrapolate and diffusive and sampler.n_steps >= 400 else 1
    payload = (sampler, kinds, params, off_lo, off_hi, float(voxel), max_grid_bytes(), coarsen)
    parts = run_chunks(_sausage_task, payload, cfg.n_paths, cfg.seed, cfg.workers,
                       chunk_size=max(1, min(cfg.chunk_size, 16)))
    vols = np.concatenate(parts)
    fine, coarse = vols[:, 0], vols[:, 1]
    combined = 2.0 * fine - coarse if coarsen > 1 else fine
    est = Accumulator().add(combined).estimate(cfg.seed)
    gap = abs(float(fine.mean() - coarse.mean())) / 4.0
    return Estimate(est.mean, est.stderr, est.n, cfg.seed, systematic=gap)
