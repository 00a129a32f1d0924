"""Bounded sets as finite unions of simple primitives.

A :class:`ShapeSpec` is immutable.  Besides membership and the outer radius,
it supports the directional quantities used in the transverse regime: the
projection of the set onto the hyperplane orthogonal to a direction ``e``,
the height function h(z) = sup{s : z + s e in K} over that projection, and
the surface measure m_{K,e} obtained by lifting projected cells to the
e-facing boundary.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .specfun import DomainError


class PreconditionError(DomainError):
    """A documented precondition (e.g. raster resolution) is violated."""


def _vec(values, d=None, name="point") -> tuple:
    arr = tuple(float(v) for v in values)
    if d is not None and len(arr) != d:
        raise DomainError(f"{name} must have {d} coordinates, got {len(arr)}")
    if not all(math.isfinite(v) for v in arr):
        raise DomainError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, name="center"))
        if not self.radius > 0:
            raise DomainError("ball radius must be > 0")

    def r_out(self) -> float:
        return float(np.linalg.norm(self.center)) + self.radius

    def scaled(self, r: float) -> "Ball":
        return Ball(tuple(r * c for c in self.center), r * self.radius)

    def to_json(self) -> dict:
        return {"ball": {"center": list(self.center), "radius": self.radius}}


@dataclass(frozen=True)
class Box:
    min: tuple
    max: tuple

    def __post_init__(self):
        object.__setattr__(self, "min", _vec(self.min, name="min"))
        object.__setattr__(self, "max", _vec(self.max, len(self.min), name="max"))
        if not all(lo < hi for lo, hi in zip(self.min, self.max)):
            raise DomainError("box requires min < max componentwise")

    def r_out(self) -> float:
        return math.sqrt(sum(max(lo * lo, hi * hi) for lo, hi in zip(self.min, self.max)))

    def scaled(self, r: float) -> "Box":
        return Box(tuple(r * v for v in self.min), tuple(r * v for v in self.max))

    def to_json(self) -> dict:
        return {"box": {"min": list(self.min), "max": list(self.max)}}


@dataclass(frozen=True)
class Segment:
    p: tuple
    q: tuple

    def __post_init__(self):
        object.__setattr__(self, "p", _vec(self.p, 2, name="p"))
        object.__setattr__(self, "q", _vec(self.q, 2, name="q"))
        if self.p == self.q:
            raise DomainError("segment endpoints must differ")

    def r_out(self) -> float:
        return max(math.hypot(*self.p), math.hypot(*self.q))

    def scaled(self, r: float) -> "Segment":
        return Segment(tuple(r * v for v in self.p), tuple(r * v for v in self.q))

    def to_json(self) -> dict:
        return {"segment": {"p": list(self.p), "q": list(self.q)}}


@dataclass(frozen=True)
class Cylinder:
    base_center: tuple
    axis: tuple
    radius: float
    height: float

    def __post_init__(self):
        object.__setattr__(self, "base_center", _vec(self.base_center, 3, name="base_center"))
        axis = _vec(self.axis, 3, name="axis")
        norm = math.sqrt(sum(a * a for a in axis))
        if abs(norm - 1.0) > 1e-9:
            raise DomainError("cylinder axis must be a unit vector")
        object.__setattr__(self, "axis", tuple(a / norm for a in axis))
        if not (self.radius > 0 and self.height > 0):
            raise DomainError("cylinder radius and height must be > 0")

    def r_out(self) -> float:
        base = np.array(self.base_center)
        u = np.array(self.axis)
        best = 0.0
        for c in (base, base + self.height * u):
            along = float(c @ u)
            perp = float(np.linalg.norm(c - along * u))
            best = max(best, math.hypot(along, perp + self.radius))
        return best

    def scaled(self, r: float) -> "Cylinder":
        return Cylinder(tuple(r * v for v in self.base_center), self.axis, r * self.radius, r * self.height)

    def to_json(self) -> dict:
        return {"cylinder": {"base_center": list(self.base_center), "axis": list(self.axis),
                             "radius": self.radius, "height": self.height}}


Primitive = Union[Ball, Box, Segment, Cylinder]
_KIND = {Ball: 0, Box: 1, Segment: 2, Cylinder: 3}


@dataclass(frozen=True)
class ShapeSpec:
    d: int
    primitives: tuple

    def __post_init__(self):
        if self.d not in (2, 3):
            raise DomainError(f"shape dimension must be 2 or 3, got {self.d}")
        prims = tuple(self.primitives)
        if not prims:
            raise DomainError("shape needs at least one primitive")
        for prim in prims:
            if isinstance(prim, Segment) and self.d != 2:
                raise DomainError("segments are only supported in d=2")
            if isinstance(prim, Cylinder) and self.d != 3:
                raise DomainError("cylinders are only supported in d=3")
            if isinstance(prim, Ball) and len(prim.center) != self.d:
                raise DomainError("ball center dimension mismatch")
            if isinstance(prim, Box) and len(prim.min) != self.d:
                raise DomainError("box dimension mismatch")
        object.__setattr__(self, "primitives", prims)

    # -- JSON ---------------------------------------------------------------
    @classmethod
    def from_json(cls, doc: Union[str, dict]) -> "ShapeSpec":
        if isinstance(doc, str):
            try:
                doc = json.loads(doc)
            except json.JSONDecodeError as exc:
                raise DomainError(f"invalid shape JSON: {exc}") from None
        if not isinstance(doc, dict) or set(doc) != {"d", "primitives"}:
            raise DomainError('shape JSON must have exactly the keys "d" and "primitives"')
        prims = []
        builders = {"ball": (Ball, {"center", "radius"}), "box": (Box, {"min", "max"}),
                    "segment": (Segment, {"p", "q"}),
                    "cylinder": (Cylinder, {"base_center", "axis", "radius", "height"})}
        if not isinstance(doc["primitives"], list):
            raise DomainError("primitives must be a list")
        for item in doc["primitives"]:
            if not isinstance(item, dict) or len(item) != 1:
                raise DomainError(f"each primitive must be a single-key object, got {item!r}")
            (name, body), = item.items()
            if name not in builders:
                raise DomainError(f"unknown primitive {name!r}")
            ctor, keys = builders[name]
            if not isinstance(body, dict) or set(body) != keys:
                raise DomainError(f"{name} needs exactly the fields {sorted(keys)}")
            try:
                prims.append(ctor(**body))
            except TypeError as exc:
                raise DomainError(f"bad {name} fields: {exc}") from None
        d = doc["d"]
        if not isinstance(d, int) or isinstance(d, bool):
            raise DomainError("d must be an integer")
        return cls(d, tuple(prims))

    def to_json(self) -> dict:
        return {"d": self.d, "primitives": [p.to_json() for p in self.primitives]}

    # -- compiled encoding ----------------------------------------------------
    def encode(self) -> tuple[np.ndarray, np.ndarray]:
        """Kind codes and an 8-column parameter matrix for the simulation kernels."""
        kinds = np.empty(len(self.primitives), dtype=np.int64)
        params = np.zeros((len(self.primitives), 8))
        for j, prim in enumerate(self.primitives):
            kinds[j] = _KIND[type(prim)]
            if isinstance(prim, Ball):
                row = list(prim.center) + [prim.radius]
            elif isinstance(prim, Box):
                row = list(prim.min) + list(prim.max)
            elif isinstance(prim, Segment):
                row = list(prim.p) + list(prim.q)
            else:
                row = list(prim.base_center) + list(prim.axis) + [prim.radius, prim.height]
            params[j, :len(row)] = row
        return kinds, params


def ball(d: int, radius: float = 1.0, center=None) -> ShapeSpec:
    """Convenience constructor for U(a) (optionally off-centre)."""
    center = tuple(center) if center is not None else (0.0,) * d
    return ShapeSpec(d, (Ball(center, radius),))


@dataclass(frozen=True)
class Direction:
    e: tuple

    def __post_init__(self):
        e = _vec(self.e, name="direction")
        if abs(math.sqrt(sum(c * c for c in e)) - 1.0) > 1e-12:
            raise DomainError("direction must be a unit vector (|e| = 1 within 1e-12)")
        object.__setattr__(self, "e", e)

    @classmethod
    def normalized(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        return cls(tuple(v / np.linalg.norm(v)))


# ---------------------------------------------------------------------------
# membership


def _primitive_contains(prim: Primitive, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if isinstance(prim, Ball):
        return np.linalg.norm(pts - np.array(prim.center), axis=-1) <= prim.radius + tol
    if isinstance(prim, Box):
        return np.all((pts >= np.array(prim.min) - tol) & (pts <= np.array(prim.max) + tol), axis=-1)
    if isinstance(prim, Segment):
        p, q = np.array(prim.p), np.array(prim.q)
        dq = q - p
        s = np.clip(((pts - p) @ dq) / (dq @ dq), 0.0, 1.0)
        return np.linalg.norm(pts - p - s[..., None] * dq, axis=-1) <= tol
    base, u = np.array(prim.base_center), np.array(prim.axis)
    w = pts - base
    s = w @ u
    radial = np.linalg.norm(w - s[..., None] * u, axis=-1)
    return (radial <= prim.radius + tol) & (s >= -tol) & (s <= prim.height + tol)


def contains(shape: ShapeSpec, p) -> bool:
    """True iff ``p`` lies in the closed union of the primitives."""
    pts = np.asarray(p, dtype=float)
    if pts.shape[-1] != shape.d:
        raise DomainError(f"point has dimension {pts.shape[-1]}, shape has {shape.d}")
    inside = np.zeros(pts.shape[:-1], dtype=bool)
    for prim in shape.primitives:
        inside |= _primitive_contains(prim, pts)
    return bool(inside) if inside.ndim == 0 else inside


def r_out(shape: ShapeSpec) -> float:
    """R_A = sup{|y| : y in A}."""
    return max(prim.r_out() for prim in shape.primitives)


def scale(shape: ShapeSpec, r: float) -> ShapeSpec:
    """Dilate every primitive about the origin by ``r``."""
    if not r > 0:
        raise DomainError("scale factor must be > 0")
    return ShapeSpec(shape.d, tuple(prim.scaled(r) for prim in shape.primitives))


# ---------------------------------------------------------------------------
# line intersections: largest s with z + s e in the primitive (nan if none)


def _top_ball(prim: Ball, z, e):
    w = z - np.array(prim.center)
    b = w @ e
    disc = b * b - (np.einsum("ij,ij->i", w, w) - prim.radius ** 2)
    return np.where(disc >= 0, -b + np.sqrt(np.maximum(disc, 0.0)), np.nan)


def _top_box(prim: Box, z, e):
    lo, hi = np.array(prim.min), np.array(prim.max)
    s_lo = np.full(z.shape[0], -np.inf)
    s_hi = np.full(z.shape[0], np.inf)
    for i in range(z.shape[1]):
        if abs(e[i]) < 1e-15:
            outside = (z[:, i] < lo[i]) | (z[:, i] > hi[i])
            s_hi = np.where(outside, -np.inf, s_hi)
            continue
        a = (lo[i] - z[:, i]) / e[i]
        b = (hi[i] - z[:, i]) / e[i]
        s_lo = np.maximum(s_lo, np.minimum(a, b))
        s_hi = np.minimum(s_hi, np.maximum(a, b))
    return np.where(s_lo <= s_hi, s_hi, np.nan)


def _top_segment(prim: Segment, z, e):
    p, q = np.array(prim.p), np.array(prim.q)
    dq = q - p
    den = e[0] * dq[1] - e[1] * dq[0]
    if abs(den) < 1e-15:
        return np.full(z.shape[0], np.nan)
    w = p - z
    s = (w[:, 0] * dq[1] - w[:, 1] * dq[0]) / den
    u = (w[:, 0] * e[1] - w[:, 1] * e[0]) / den
    return np.where((u >= 0) & (u <= 1), s, np.nan)


def _top_cylinder(prim: Cylinder, z, e):
    base, u = np.array(prim.base_center), np.array(prim.axis)
    w = z - base
    eu = e @ u
    wu = w @ u
    # slab 0 <= (w + s e).u <= H
    if abs(eu) < 1e-15:
        inside = (wu >= 0) & (wu <= prim.height)
        s_lo = np.where(inside, -np.inf, np.inf)
        s_hi = np.where(inside, np.inf, -np.inf)
    else:
        a = -wu / eu
        b = (prim.height - wu) / eu
        s_lo, s_hi = np.minimum(a, b), np.maximum(a, b)
    # radial |w_perp + s e_perp| <= R
    wp = w - wu[:, None] * u
    ep = e - eu * u
    aa = ep @ ep
    if aa < 1e-15:
        inside = np.einsum("ij,ij->i", wp, wp) <= prim.radius ** 2
        r_lo = np.where(inside, -np.inf, np.inf)
        r_hi = np.where(inside, np.inf, -np.inf)
    else:
        bb = wp @ ep
        cc = np.einsum("ij,ij->i", wp, wp) - prim.radius ** 2
        disc = bb * bb - aa * cc
        root = np.sqrt(np.maximum(disc, 0.0))
        r_lo = np.where(disc >= 0, (-bb - root) / aa, np.inf)
        r_hi = np.where(disc >= 0, (-bb + root) / aa, -np.inf)
    lo = np.maximum(s_lo, r_lo)
    hi = np.minimum(s_hi, r_hi)
    return np.where(lo <= hi, hi, np.nan)


_TOP = {Ball: _top_ball, Box: _top_box, Segment: _top_segment, Cylinder: _top_cylinder}


def _plane_basis(e: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane orthogonal to e."""
    d = e.size
    m = np.eye(d)
    m[:, 0] = e
    q, _ = np.linalg.qr(m)
    basis = q[:, 1:].T
    return basis


@dataclass(frozen=True)
class Raster:
    """Projection of a shape on the hyperplane orthogonal to ``e``.

    Cell (i, j, ...) has centre ``origin + cell*(index + 1/2)`` in the plane
    coordinates given by the rows of ``basis``.
    """

    cell: float
    origin: np.ndarray
    occupancy: np.ndarray
    height: np.ndarray
    basis: np.ndarray = field(repr=False)
    e: np.ndarray = field(repr=False)

    @property
    def area(self) -> float:
        return float(self.occupancy.sum()) * self.cell ** (self.basis.shape[0])

    def centers(self) -> np.ndarray:
        """Plane points (in R^d) of every cell centre, shape (*grid, d)."""
        axes = [self.origin[i] + self.cell * (np.arange(n) + 0.5) for i, n in enumerate(self.occupancy.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack(mesh, axis=-1)
        return coords @ self.basis

    def lifted(self) -> np.ndarray:
        """Boundary points z + h(z) e of the occupied cells, shape (n_occupied, d)."""
        pts = self.centers()[self.occupancy]
        return pts + self.height[self.occupancy][:, None] * self.e

    def jump_fraction(self, factor: float = 8.0) -> float:
        """Fraction of occupied cells whose height differs from an occupied
        neighbour by more than ``factor * cell``; a rough indicator of how much
        of the projection sits on discontinuities of h."""
        flagged = np.zeros_like(self.occupancy)
        h = self.height
        for axis in range(h.ndim):
            a = [slice(None)] * h.ndim
            b = [slice(None)] * h.ndim
            a[axis] = slice(None, -1)
            b[axis] = slice(1, None)
            a, b = tuple(a), tuple(b)
            both = self.occupancy[a] & self.occupancy[b]
            with np.errstate(invalid="ignore"):
                jump = both & (np.abs(h[a] - h[b]) > factor * self.cell)
            flagged[a] |= jump
            flagged[b] |= jump
        n_occ = int(self.occupancy.sum())
        return float(flagged.sum()) / n_occ if n_occ else 0.0


def project(shape: ShapeSpec, e: Direction, cell: float) -> Raster:
    """Rasterize pr_e K with the height function h(z) = sup{s : z + s e in K}."""
    rad = r_out(shape)
    if not cell > 0 or cell > rad / 8.0:
        raise PreconditionError(f"cell must lie in (0, r_out/8] = (0, {rad / 8.0}], got {cell}")
    ev = np.asarray(e.e, dtype=float)
    if ev.size != shape.d:
        raise DomainError("direction dimension does not match shape")
    basis = _plane_basis(ev)
    n_cells = int(math.ceil(2.0 * rad / cell))
    origin = np.full(shape.d - 1, -0.5 * n_cells * cell)
    grid_shape = (n_cells,) * (shape.d - 1)
    axes = [origin[i] + cell * (np.arange(n_cells) + 0.5) for i in range(shape.d - 1)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, shape.d - 1)
    z = coords @ basis
    height = np.full(z.shape[0], -np.inf)
    for prim in shape.primitives:
        top = _TOP[type(prim)](prim, z, ev)
        height = np.where(np.isnan(top), height, np.maximum(height, np.nan_to_num(top, nan=-np.inf)))
    height = height.reshape(grid_shape)
    return Raster(cell=float(cell), origin=origin, occupancy=np.isfinite(height), height=height, basis=basis, e=ev)


def m_measure(shape: ShapeSpec, e: Direction, cell: float,
              selector: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """m_{K,e}(E): projected (d-1)-volume of the e-facing boundary points selected by E."""
    raster = project(shape, e, cell)
    if selector is None:
        return raster.area
    lifted = raster.lifted()
    keep = np.asarray(selector(lifted), dtype=bool)
    return float(keep.sum()) * cell ** (shape.d - 1)
