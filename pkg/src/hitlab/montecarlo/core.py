"""Path simulation front end: configuration, chunked parallel execution and
first-hit sampling."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import multiprocessing
import numpy as np

from .. import geometry
from ..geometry import ShapeSpec
from ..specfun import DomainError
from . import _kernel
from .stats import Estimate, Histogram, estimate_of

DEFAULT_CHUNK = 10_000


class ResourceError(RuntimeError):
    """A memory or size cap would be exceeded."""


@dataclass(frozen=True)
class SimConfig:
    step: float
    horizon: float
    n_paths: int
    seed: int = 0
    workers: int = 1
    chunk_size: int = DEFAULT_CHUNK
    k_ratio: float = 4.0

    def __post_init__(self):
        if not (self.step > 0 and self.horizon > 0):
            raise DomainError("step and horizon must be > 0")
        if self.step > self.horizon / 100.0:
            raise DomainError(f"step must be <= horizon/100 (step={self.step}, horizon={self.horizon})")
        if int(self.n_paths) != self.n_paths or self.n_paths < 100:
            raise DomainError("n_paths must be an integer >= 100")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise DomainError("workers must be a positive integer")
        if self.chunk_size < 1:
            raise DomainError("chunk_size must be positive")
        if not self.k_ratio >= 1.0:
            raise DomainError("k_ratio must be >= 1")

    def with_(self, **changes) -> "SimConfig":
        from dataclasses import replace
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# deterministic chunked execution


def chunk_plan(n: int, chunk_size: int) -> list[int]:
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def run_chunks(task: Callable, payload: tuple, n: int, seed: int, workers: int,
               chunk_size: int = DEFAULT_CHUNK) -> list:
    """Run ``task(payload, rng, n_chunk)`` over fixed-size chunks.

    Chunk i always gets the generator seeded by child i of ``SeedSequence(seed)``,
    so results do not depend on the number of workers.  Results come back in
    chunk order.
    """
    sizes = chunk_plan(n, chunk_size)
    children = np.random.SeedSequence(int(seed)).spawn(len(sizes))
    jobs = [(task, payload, child, size) for child, size in zip(children, sizes)]
    if workers <= 1 or len(jobs) == 1:
        return [_execute(job) for job in jobs]
    ctx = multiprocessing.get_context("fork") if hasattr(os, "fork") else None
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_execute, jobs))


def _execute(job):
    task, payload, child, size = job
    return task(payload, np.random.Generator(np.random.PCG64(child)), size)


# ---------------------------------------------------------------------------
# start distributions


def uniform_sphere(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((n, d))
    return radius * g / np.linalg.norm(g, axis=1, keepdims=True)


def _starts(spec: tuple, rng, n: int, d: int) -> np.ndarray:
    kind = spec[0]
    if kind == "point":
        return np.tile(np.asarray(spec[1], dtype=float), (n, 1))
    if kind == "sphere":
        return uniform_sphere(rng, n, d, spec[1])
    raise ValueError(f"unknown start spec {kind}")


# ---------------------------------------------------------------------------
# first-hit simulation


@dataclass(frozen=True)
class HitSample:
    hit: bool
    sigma: Optional[float]
    site: Optional[tuple]

    def __post_init__(self):
        if self.hit != (self.sigma is not None and self.site is not None):
            raise ValueError("hit must hold exactly when sigma and site are present")


@dataclass
class HitBatch:
    """Column-wise outcome of many simulated paths.

    status: 0 hit, 1 horizon reached, 2 left the outer sphere.
    marked: the path reached the mark radius before stopping.
    """

    status: np.ndarray
    sigma: np.ndarray
    site: np.ndarray
    prim: np.ndarray
    marked: np.ndarray
    starts: np.ndarray
    seed: int
    step: float

    @property
    def n(self) -> int:
        return int(self.status.size)

    @property
    def hit(self) -> np.ndarray:
        return self.status == _kernel.STATUS_HIT

    @property
    def exited(self) -> np.ndarray:
        return self.status == _kernel.STATUS_EXIT

    @property
    def survived(self) -> np.ndarray:
        return self.status == _kernel.STATUS_HORIZON

    def frequency(self) -> Estimate:
        return estimate_of(self.hit.astype(float), self.seed)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> HitSample:
        if self.hit[i]:
            return HitSample(True, float(self.sigma[i]), tuple(float(c) for c in self.site[i]))
        return HitSample(False, None, None)

    def __iter__(self) -> Iterator[HitSample]:
        for i in range(self.n):
            yield self[i]


def _hit_task(payload, rng, n):
    kinds, params, d, start_spec, drift, horizon, step, k_ratio, outer, mark = payload
    starts = _starts(start_spec, rng, n, d)
    status = np.empty(n, dtype=np.int8)
    sigma = np.empty(n)
    site = np.empty((n, d))
    prim = np.empty(n, dtype=np.int32)
    marked = np.empty(n, dtype=np.bool_)
    _kernel.simulate_paths(rng, starts, drift, horizon, kinds, params, step, k_ratio,
                           outer, mark, status, sigma, site, prim, marked)
    return status, sigma, site, prim, marked, starts


def simulate(shape: ShapeSpec, start, cfg: SimConfig, drift=None, outer_radius: float = math.inf,
             mark_radius: float = 0.0, check_start: bool = True) -> HitBatch:
    """Simulate ``cfg.n_paths`` paths of B_s + drift*s until they hit ``shape``.

    ``start`` is a point, or ``("sphere", R)`` for starts uniform on the sphere
    of radius R about the origin.
    """
    d = shape.d
    if isinstance(start, tuple) and len(start) == 2 and start[0] == "sphere":
        start_spec = ("sphere", float(start[1]))
    else:
        point = np.asarray(start, dtype=float)
        if point.shape != (d,):
            raise DomainError(f"start must be a point in R^{d}")
        if check_start and geometry.contains(shape, point):
            raise DomainError("start lies inside the shape")
        start_spec = ("point", tuple(point))
    drift_vec = np.zeros(d) if drift is None else np.asarray(drift, dtype=float)
    if drift_vec.shape != (d,):
        raise DomainError("drift dimension mismatch")
    kinds, params = shape.encode()
    payload = (kinds, params, d, start_spec, drift_vec, float(cfg.horizon), float(cfg.step),
               float(cfg.k_ratio), float(outer_radius), float(mark_radius))
    parts = run_chunks(_hit_task, payload, cfg.n_paths, cfg.seed, cfg.workers, cfg.chunk_size)
    cols = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    return HitBatch(*cols, seed=cfg.seed, step=cfg.step)


def first_hit(shape: ShapeSpec, start, cfg: SimConfig, outer_radius: float = math.inf) -> HitBatch:
    """Driftless first-hit samples (sigma_A, B(sigma_A)); misses carry no time/site."""
    return simulate(shape, start, cfg, outer_radius=outer_radius)


def drifted_hit(shape: ShapeSpec, start, v_vec, cfg: SimConfig, outer_radius: float = math.inf) -> HitBatch:
    """First-hit samples of the drifted motion B_s - v s."""
    return simulate(shape, start, cfg, drift=-np.asarray(v_vec, dtype=float), outer_radius=outer_radius)


def hit_histogram(shape: ShapeSpec, start, cfg: SimConfig, time_bins: Sequence[float],
                  batch: Optional[HitBatch] = None) -> Histogram:
    """Density histogram of sigma_A on ``time_bins`` (counts / (n * width))."""
    edges = np.asarray(time_bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("time_bins must be increasing edges")
    if batch is None:
        batch = first_hit(shape, start, cfg)
    times = batch.sigma[batch.hit]
    counts, _ = np.histogram(times, edges)
    n = batch.n
    p = counts / n
    widths = np.diff(edges)
    return Histogram(edges=edges, values=p / widths, stderr=np.sqrt(p * (1 - p) / n) / widths, n=n,
                     seed=cfg.seed, meta={"kind": "density", "hits": int(batch.hit.sum()),
                                          "hit_frequency": float(batch.hit.mean()), "step": cfg.step})


def weighted_histogram(values: np.ndarray, weights: np.ndarray, n_total: int, edges: np.ndarray):
    """Self-normalised weighted histogram with delta-method standard errors.

    ``values``/``weights`` cover the selected samples; unselected samples count
    as zero-weight members of the ``n_total`` draws.
    """
    w_full = np.zeros(n_total)
    w_full[: weights.size] = weights
    idx = np.full(n_total, -1)
    idx[: values.size] = np.digitize(values, edges) - 1
    total = w_full.mean()
    masses = np.empty(edges.size - 1)
    errs = np.empty(edges.size - 1)
    for b in range(edges.size - 1):
        wb = np.where(idx == b, w_full, 0.0)
        p = wb.mean() / total if total > 0 else 0.0
        infl = (wb - p * w_full) / total if total > 0 else wb
        masses[b] = p
        errs[b] = infl.std(ddof=1) / math.sqrt(n_total)
    return masses, errs


def site_histogram(shape: ShapeSpec, start, cfg: SimConfig, angular_bins, time_window: float,
                   t_target: Optional[float] = None, tilt: bool = True, center=None) -> Histogram:
    """Histogram of the hitting-site colatitude among hits with sigma in
    [t(1 - dw), t(1 + dw)], colatitude measured about ``center`` from the
    direction of ``start``.

    With ``tilt`` the paths are driven by the drift -start/t (toward the set),
    which makes the conditioning window a typical rather than an exponentially
    rare event; the exact Cameron-Martin weights restore the driftless law.
    """
    start = np.asarray(start, dtype=float)
    d = shape.d
    centre = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    t_c = float(t_target if t_target is not None else cfg.horizon / (1.0 + time_window) / 1.01)
    if not 0 < time_window < 1:
        raise DomainError("time_window must lie in (0, 1)")
    edges = np.asarray(angular_bins, dtype=float)
    if edges.ndim == 0:
        edges = np.linspace(0.0, math.pi, int(edges) + 1)
    u = -start / t_c if tilt else np.zeros(d)
    horizon = max(cfg.horizon, t_c * (1.0 + time_window) * 1.001)
    batch = simulate(shape, start, cfg.with_(horizon=horizon), drift=u)
    lo, hi = t_c * (1.0 - time_window), t_c * (1.0 + time_window)
    sel = batch.hit & (batch.sigma >= lo) & (batch.sigma <= hi)
    sites = batch.site[sel]
    sig = batch.sigma[sel]
    axis = (start - centre) / np.linalg.norm(start - centre)
    rel = sites - centre
    cos = np.clip(rel @ axis / np.linalg.norm(rel, axis=1), -1.0, 1.0)
    theta = np.arccos(cos)
    # dP/dQ = exp(-u.(B_sigma - x) + |u|^2 sigma / 2); constants cancel on normalising
    logw = -(sites - start) @ u + 0.5 * float(u @ u) * sig
    w = np.exp(logw - logw.max()) if logw.size else logw
    masses, errs = weighted_histogram(theta, w, batch.n, edges)
    ess = float(w.sum() ** 2 / (w * w).sum()) if w.size else 0.0
    return Histogram(edges=edges, values=masses, stderr=errs, n=batch.n, seed=cfg.seed,
                     meta={"kind": "mass", "window": [lo, hi], "delta_w": time_window, "t": t_c,
                           "hits_in_window": int(sel.sum()), "effective_sample_size": ess,
                           "flag_low_count": bool(sel.sum() < 1000), "tilted": bool(tilt)})
