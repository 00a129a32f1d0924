"""Closed-form large-time asymptotics for Brownian hitting of balls and general sets.

Every function drops the o(1)/O(.) corrections of the underlying asymptotic
statement; comparisons against simulation are meant to report ratios.

Logarithms are natural.  In d = 2 the general-set formulas contain bare
``lg t``/``lg(t/x)`` terms that are not scale covariant.  They are written
here with an explicit length scale ``ell`` (``lg(t/ell^2)``, ``lg(t/(x ell))``),
which only changes lower-order terms.  ``ell`` defaults to lcap(A) when the
summary carries one and to r_out otherwise; ``ell = 1`` gives the
unscaled expressions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import geometry
from .geometry import Direction, ShapeSpec
from .montecarlo.stats import Histogram
from .specfun import (EULER_GAMMA, KAPPA_2D, DomainError, Order, gauss_kernel, g_density, lambda_nu,
                      lower_gamma, n_of_lambda, sphere_average, upper_gamma)

REGIMES = ("small_v", "order_v", "large_v")


class PreconditionError(DomainError):
    """Arguments fall outside the regime in which a formula is stated."""


@dataclass(frozen=True)
class FormulaPoint:
    d: int
    x: float
    t: float
    a: Optional[float] = None
    theta: Optional[float] = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise DomainError(f"d must be an integer >= 2, got {self.d}")
        if not self.t > 0:
            raise DomainError(f"t must be > 0, got {self.t}")
        if self.x < 0:
            raise DomainError(f"x must be >= 0, got {self.x}")
        if self.a is not None and not self.a > 0:
            raise DomainError(f"a must be > 0, got {self.a}")
        if self.theta is not None and not 0.0 <= self.theta <= math.pi:
            raise DomainError("theta must lie in [0, pi]")

    @property
    def nu(self) -> float:
        return self.d / 2.0 - 1.0

    @property
    def order(self) -> Order:
        return Order(self.d)

    @property
    def v(self) -> float:
        return self.x / self.t

    def scaled(self, r: float) -> "FormulaPoint":
        """(a, x, t) -> (r a, r x, r^2 t)."""
        return replace(self, x=r * self.x, t=r * r * self.t, a=None if self.a is None else r * self.a)

    def require_exterior(self):
        if self.a is None:
            raise DomainError("ball radius a is required")
        if not self.x > self.a:
            raise DomainError(f"need x > a (x={self.x}, a={self.a})")


@dataclass(frozen=True)
class GeneralSetSummary:
    r_out: float
    cap: Optional[float] = None
    p_escape: Optional[float] = None
    e_of_x: Optional[float] = None
    lcap: Optional[float] = None

    def __post_init__(self):
        if not self.r_out > 0:
            raise DomainError("r_out must be > 0")
        for name in ("cap", "lcap"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise DomainError(f"{name} must be > 0")
        if self.p_escape is not None and not 0.0 <= self.p_escape <= 1.0:
            raise DomainError("p_escape must lie in [0, 1]")
        if self.e_of_x is not None and self.e_of_x < 0:
            raise DomainError("e_of_x must be >= 0")

    @property
    def length_scale(self) -> float:
        return self.lcap if self.lcap is not None else self.r_out

    def scaled(self, r: float, d: int) -> "GeneralSetSummary":
        """Summary of the dilated set r A (capacity is homogeneous of degree d-2)."""
        return GeneralSetSummary(
            r_out=r * self.r_out,
            cap=None if self.cap is None else r ** (d - 2) * self.cap,
            p_escape=self.p_escape,
            e_of_x=self.e_of_x,
            lcap=None if self.lcap is None else r * self.lcap,
        )

    def need(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise DomainError(f"summary is missing {', '.join(missing)}")


def ball_summary(d: int, a: float, x: float) -> GeneralSetSummary:
    """Exact summary for U(a) seen from distance x."""
    if d >= 3:
        cap = a ** (d - 2) / _green_at_one(d)
        p_escape = 1.0 - (a / x) ** (d - 2) if x > a else None
        return GeneralSetSummary(r_out=a, cap=cap, p_escape=p_escape)
    return GeneralSetSummary(r_out=a, e_of_x=math.log(x / a) if x > a else None, lcap=a)


def _green_at_one(d: int) -> float:
    nu = d / 2.0 - 1.0
    return math.gamma(nu) / (2.0 * math.pi ** (nu + 1))


def _ell(summary: Optional[GeneralSetSummary], ell: Optional[float], fallback: Optional[float] = None) -> float:
    if ell is not None:
        if not ell > 0:
            raise DomainError("length scale must be > 0")
        return ell
    if summary is not None:
        return summary.length_scale
    if fallback is not None:
        return fallback
    raise DomainError("a length scale is required")


# ---------------------------------------------------------------------------
# balls


def q_ball(fp: FormulaPoint, tail_corrected: bool = False) -> float:
    """Leading term of the hitting-time density of U(a) at time t from distance x."""
    fp.require_exterior()
    a, x, t, nu = fp.a, fp.x, fp.t, fp.nu
    p = gauss_kernel(fp.d, t, x)
    if fp.d >= 3:
        val = a ** (2 * nu) * lambda_nu(fp.order, a * x / t) * p * (1.0 - (a / x) ** (2 * nu))
    elif x <= math.sqrt(t):
        val = p * 4.0 * math.pi * math.log(x / a) / math.log(t / (a * a)) ** 2
    else:
        val = p * lambda_nu(fp.order, a * x / t)
    if tail_corrected:
        val *= math.exp(-a * a / (2.0 * t))
    return val


def q_ball_exact_d3(a: float, x: float, t: float) -> float:
    """Exact d=3 hitting density (a/x)(x-a)(2 pi t^3)^{-1/2} exp(-(x-a)^2/2t)."""
    return (a / x) * (x - a) / math.sqrt(2.0 * math.pi * t ** 3) * math.exp(-(x - a) ** 2 / (2.0 * t))


def q_ball_smalltime(fp: FormulaPoint) -> float:
    """Short-time hitting density for 0 < t < a^2."""
    fp.require_exterior()
    a, x, t = fp.a, fp.x, fp.t
    if not t < a * a:
        raise PreconditionError(f"small-time formula needs t < a^2 (t={t}, a={a})")
    return ((x - a) / (math.sqrt(2.0 * math.pi) * t ** 1.5) * math.exp(-(x - a) ** 2 / (2.0 * t))
            * (a / x) ** ((fp.d - 1) / 2.0))


def q_ball_bound(fp: FormulaPoint) -> float:
    """Shape of the two-sided bound on the ball hitting density (constants omitted)."""
    fp.require_exterior()
    a, x, t, nu = fp.a, fp.x, fp.t, fp.nu
    if fp.d >= 3:
        return (1.0 - a / x) * a ** (2 * nu) * gauss_kernel(fp.d, t, x - a) * min(1.0, t / (a * x)) ** (nu - 0.5)
    if x < math.sqrt(t):
        return math.log(x / a) / (t * math.log(t / (a * a)) ** 2)
    if x < t / a:
        return gauss_kernel(2, t, x) / (1.0 + math.log(t / (a * x)))
    return math.sqrt(a * x / t) * math.exp(a * x / t) * gauss_kernel(2, t, x)


def hit_within_t_ball(fp: FormulaPoint) -> float:
    """P_x[sigma <= t] for U(a) in the range x > sqrt(t / lg t)."""
    fp.require_exterior()
    a, x, t, nu = fp.a, fp.x, fp.t, fp.nu
    if t > 1.0 and not x > math.sqrt(t / math.log(t)):
        raise PreconditionError("formula needs x > sqrt(t / lg t)")
    z = x * x / (2.0 * t)
    return ((a / x) ** (2 * nu) * lambda_nu(fp.order, a * x / t) * 2.0 ** nu / (2.0 * math.pi) ** (nu + 1)
            * upper_gamma(nu, z))


def hit_within_t_disc(fp: FormulaPoint) -> float:
    """P_x[sigma <= t] for a disc, a < x < sqrt(t), with kappa = 2 e^{-2 gamma}."""
    if fp.d != 2:
        raise DomainError("disc formula is for d = 2")
    fp.require_exterior()
    a, x, t = fp.a, fp.x, fp.t
    if not x < math.sqrt(t):
        raise PreconditionError("disc formula needs x < sqrt(t)")
    big_l = math.log(KAPPA_2D * t / (a * a))
    return (1.0 / big_l) * (1.0 - EULER_GAMMA / big_l) * upper_gamma(0.0, x * x / (2.0 * t))


def site_density_ball(fp: FormulaPoint) -> float:
    """Limit density of the hitting site on U(a) given sigma = t, relative to m_1,
    at colatitude theta measured from the direction of the start."""
    if fp.a is None or fp.theta is None:
        raise DomainError("site density needs a and theta")
    return g_density(fp.order, fp.a * fp.v, fp.theta)


def site_density_transverse(e_dot_xi: float, v: float, a: float) -> float:
    """Shape (xi.e) 1{xi.e >= 0} of the transverse-regime site measure on U(a),
    with ``e_dot_xi`` the cosine between xi and e."""
    if not v > 0:
        raise DomainError("transverse regime needs v > 0")
    if not a > 0:
        raise DomainError("a must be > 0")
    if not -1.0 - 1e-12 <= e_dot_xi <= 1.0 + 1e-12:
        raise DomainError("e_dot_xi is a cosine and must lie in [-1, 1]")
    return max(0.0, min(1.0, e_dot_xi))


def ball_transverse_measure(fp: FormulaPoint, cos_theta: float) -> float:
    """Full transverse-regime density of H_{U(a)}(x, t; d xi) against m_a:
    omega_{d-1} a^{2 nu} v p_t(x) e^{a x cos(theta)/t} (a cos theta)^+."""
    if fp.a is None:
        raise DomainError("ball radius a is required")
    a, d = fp.a, fp.d
    omega = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    shape = site_density_transverse(cos_theta, fp.v, a)
    return (omega * a ** (2 * fp.nu) * fp.v * gauss_kernel(d, fp.t, fp.x)
            * math.exp(a * fp.x * cos_theta / fp.t) * a * shape)


def lambda0_small_y(y: float) -> float:
    """Small-y law of Lambda_0: pi / (-lg(e^gamma y / 2))."""
    return math.pi / -math.log(math.exp(EULER_GAMMA) * y / 2.0)


# ---------------------------------------------------------------------------
# general sets


def q_general(summary: GeneralSetSummary, fp: FormulaPoint, ell: Optional[float] = None) -> float:
    """Hitting-time density of a general set in the regime x/t -> 0."""
    p = gauss_kernel(fp.d, fp.t, fp.x)
    if fp.d >= 3:
        summary.need("cap", "p_escape")
        return summary.cap * summary.p_escape * p
    scale_len = _ell(summary, ell)
    t, x = fp.t, fp.x
    if x <= math.sqrt(t):
        summary.need("e_of_x")
        return 4.0 * math.pi * summary.e_of_x * p / math.log(t / scale_len ** 2) ** 2
    return math.pi * p / math.log(t / (x * scale_len))


def site_law_limit(hist: Histogram, fp: FormulaPoint, max_v: float = 0.1) -> Histogram:
    """Limit conditional law of the hitting site given sigma = t when x/t -> 0:
    the harmonic measure from infinity, returned as the supplied histogram."""
    if fp.v > max_v:
        raise PreconditionError(f"small-v limit requested at v = {fp.v} > {max_v}")
    return hist.with_meta(regime="small_v", limit="harmonic measure from infinity", x=fp.x, t=fp.t)


def _top_at(shape: ShapeSpec, ev: np.ndarray, z: np.ndarray) -> float:
    best = -math.inf
    for prim in shape.primitives:
        top = geometry._TOP[type(prim)](prim, z[None, :], ev)[0]
        if not math.isnan(top):
            best = max(best, top)
    return best


def h_transverse(shape: ShapeSpec, e: Direction, fp: FormulaPoint, xi, tol: float = 1e-9) -> float:
    """Density of the transverse-regime hitting-site measure at boundary point xi,
    relative to m_{K,e}: v p_t(x) e^{v e.xi} on the e-facing boundary, 0 elsewhere."""
    ev = np.asarray(e.e, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if xi.size != shape.d or ev.size != shape.d:
        raise DomainError("dimension mismatch")
    height = float(xi @ ev)
    top = _top_at(shape, ev, xi - height * ev)
    if not math.isfinite(top) or height < top - tol * max(1.0, geometry.r_out(shape)):
        return 0.0
    return fp.v * gauss_kernel(fp.d, fp.t, fp.x) * math.exp(fp.v * height)


def h_transverse_mass(shape: ShapeSpec, e: Direction, fp: FormulaPoint, cell: float,
                      selector: Optional[Callable] = None) -> float:
    """Raster sum of v p_t(x) e^{v e.xi} m_{K,e}(d xi) over the selected boundary."""
    raster = geometry.project(shape, e, cell)
    lifted = raster.lifted()
    if selector is not None:
        lifted = lifted[np.asarray(selector(lifted), dtype=bool)]
    weights = np.exp(fp.v * (lifted @ raster.e))
    return fp.v * gauss_kernel(fp.d, fp.t, fp.x) * float(weights.sum()) * cell ** (shape.d - 1)


# ---------------------------------------------------------------------------
# Wiener sausage


def sausage_expect(regime: str, fp: FormulaPoint, summary: Optional[GeneralSetSummary] = None,
                   shape: Optional[ShapeSpec] = None, e: Optional[Direction] = None,
                   cell: Optional[float] = None, ell: Optional[float] = None) -> float:
    """Leading term of E_0[vol S_A(t) | B_t = x] in the requested regime.

    small_v : needs ``summary`` (cap for d>=3; optional lcap as length scale in d=2)
    large_v : needs ``shape`` and ``e``; the projected volume is rasterized at ``cell``
    order_v : ball only, needs ``fp.a``
    """
    if regime not in REGIMES:
        raise DomainError(f"regime must be one of {REGIMES}")
    d, x, t = fp.d, fp.x, fp.t
    if regime == "small_v":
        if d >= 3:
            if summary is None:
                raise DomainError("small_v regime needs a summary with cap")
            summary.need("cap")
            return summary.cap * t
        scale_len = _ell(summary, ell, fp.a)
        if x <= math.sqrt(t):
            return 2.0 * math.pi * t / math.log(t / scale_len ** 2)
        return math.pi * t / math.log(t / (x * scale_len))
    if regime == "large_v":
        if shape is None or e is None:
            raise DomainError("large_v regime needs shape and direction")
        if shape.d != d:
            raise DomainError("shape dimension does not match the formula point")
        if cell is None:
            cell = geometry.r_out(shape) / 64.0
        return geometry.project(shape, e, cell).area * x
    if fp.a is None:
        raise DomainError("order_v regime is available for balls only (set fp.a)")
    a, nu, v = fp.a, fp.nu, fp.v
    alpha = a * v
    if alpha == 0.0:
        if d == 2:
            raise DomainError("order_v at v = 0 is undefined in d = 2")
        return a ** (2 * nu) * t * lambda_nu(fp.order, 0.0)
    order = fp.order
    avg = sphere_average(order, lambda th: np.exp(-alpha * np.cos(th)) * g_density(order, alpha, th),
                         rel_tol=1e-11)
    return a ** (2 * nu) * t * lambda_nu(order, alpha) * avg


def sausage_disc_refined(a: float, x: float, t: float) -> float:
    """2 pi t N(kappa t/a^2) + pi x^2 lg(t/(x^2 v a^2)) / (lg(t/a^2))^2, the O(1) dropped."""
    if not (a > 0 and t > 0 and x >= 0):
        raise DomainError("need a > 0, t > 0, x >= 0")
    if t <= a * a:
        raise DomainError(f"refined disc formula needs t > a^2 (t={t}, a={a})")
    base = 2.0 * math.pi * t * n_of_lambda(KAPPA_2D * t / (a * a))
    if x == 0:
        return base
    return base + math.pi * x * x * math.log(t / max(x * x, a * a)) / math.log(t / (a * a)) ** 2


# ---------------------------------------------------------------------------
# distribution of sigma


def heat_integral(d: int, x: float, t: float, upper: bool = False) -> float:
    """int_0^t p_s(x) ds (or int_t^inf with ``upper``) for d >= 3."""
    if d < 3:
        raise DomainError("heat integral converges only for d >= 3")
    nu = d / 2.0 - 1.0
    z = x * x / (2.0 * t)
    pref = (2.0 * math.pi) ** (-d / 2.0) * 2.0 ** nu * x ** (-2 * nu)
    return pref * (lower_gamma(nu, z) if upper else upper_gamma(nu, z))


def tail_prob(summary: GeneralSetSummary, fp: FormulaPoint, kind: str = "tail",
              ell: Optional[float] = None) -> float:
    """Asymptotic distribution of sigma_A for x/t -> 0.

    kind="tail": P_x[t < sigma_A < inf] (d>=3) or P_x[sigma_A > t] (d=2, x <= sqrt t)
    kind="cdf" : P_x[sigma_A <= t]      (d>=3, x large; d=2, x >= sqrt(t/lg t))
    """
    if kind not in ("tail", "cdf"):
        raise DomainError("kind must be 'tail' or 'cdf'")
    d, x, t = fp.d, fp.x, fp.t
    if d >= 3:
        summary.need("cap")
        if kind == "cdf":
            return summary.cap * heat_integral(d, x, t)
        summary.need("p_escape")
        return summary.cap * summary.p_escape * heat_integral(d, x, t, upper=True)
    scale_len = _ell(summary, ell)
    if kind == "tail":
        if x > math.sqrt(t):
            raise PreconditionError("d=2 tail formula needs x <= sqrt(t)")
        summary.need("e_of_x")
        return 2.0 * summary.e_of_x / math.log(t / scale_len ** 2)
    if t > 1.0 and x < math.sqrt(t / math.log(t)):
        raise PreconditionError("d=2 distribution formula needs x >= sqrt(t / lg t)")
    return upper_gamma(0.0, x * x / (2.0 * t)) / (2.0 * math.log(t / (x * scale_len)))


# ---------------------------------------------------------------------------
# drift and the lambda kernel


def drift_weight(v_vec, x_vec, s: float, xi) -> float:
    """Cameron-Martin factor e^{v.x - v^2 s/2 - v.xi}."""
    if not s > 0:
        raise DomainError("s must be > 0")
    v = np.asarray(v_vec, dtype=float)
    return math.exp(float(v @ np.asarray(x_vec, dtype=float)) - 0.5 * float(v @ v) * s
                    - float(v @ np.asarray(xi, dtype=float)))


def _sphere_grid(d: int, n: int):
    """Midpoint grid on S^{d-1} (north pole e_0) with weights summing to 1."""
    if d == 2:
        phi = (np.arange(4 * n) + 0.5) * (2.0 * math.pi / (4 * n))
        pts = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return pts, np.full(phi.size, 1.0 / phi.size), np.abs(np.arccos(np.clip(pts[:, 0], -1, 1)))
    theta = (np.arange(n) + 0.5) * (math.pi / n)
    phi = (np.arange(2 * n) + 0.5) * (math.pi / n)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    pts = np.stack([np.cos(th), np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph)], axis=-1).reshape(-1, 3)
    w = np.sin(th).ravel()
    return pts, w / w.sum(), th.ravel()


def lambda_kernel_ball(a: float, v: float, selector: Optional[Callable] = None, d: int = 3,
                       resolution: int = 400) -> float:
    """lambda_{U(a)}(v; E) with v along e_0.

    Starting points a xi lie on the ball itself, so the inner hitting law is a
    point mass at time 0 and the kernel reduces to a^{2 nu} int g_{av} 1_E dm_1.
    ``selector`` receives boundary points (n, d) and returns a boolean mask.
    """
    if d not in (2, 3):
        raise DomainError("lambda_kernel_ball supports d in {2, 3}")
    if not a > 0 or v < 0:
        raise DomainError("need a > 0 and v >= 0")
    nu = d / 2.0 - 1.0
    if selector is None:
        return a ** (2 * nu)
    pts, w, theta = _sphere_grid(d, resolution)
    mask = np.asarray(selector(a * pts), dtype=bool)
    levels, inverse = np.unique(theta, return_inverse=True)
    g = np.asarray(g_density(Order(d), a * v, levels))[inverse]
    return a ** (2 * nu) * float(np.sum(w * g * mask))
