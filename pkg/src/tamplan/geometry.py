"""Half-space polygons, C-obstacles, tunnels and the workspace-safety formula."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from . import lp
from .ltlk import (
    Always,
    Formula,
    Next,
    TemporalTerm,
    as_fraction,
    conj,
    disj,
    linear,
)

PX = "px"
PY = "py"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Check:
    """Outcome of a validator: truthy when ``ok``; ``index`` locates the first failure."""

    ok: bool
    message: str = ""
    index: int | None = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class Facet:
    """The closed half-plane ``h . p <= c``."""

    h: tuple[Fraction, Fraction]
    c: Fraction

    def __post_init__(self):
        h = tuple(as_fraction(x) for x in self.h)
        if len(h) != 2:
            raise GeometryError("facet normals are 2-vectors")
        if h == (0, 0):
            raise GeometryError("zero facet normal")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "c", as_fraction(self.c))

    def value(self, p) -> Fraction:
        return self.h[0] * p[0] + self.h[1] * p[1]

    def holds(self, p) -> bool:
        return self.value(p) <= self.c

    def complement(self) -> "Facet":
        """``-h . p <= -c``: the closed outside of this facet."""
        return Facet((-self.h[0], -self.h[1]), -self.c)

    def as_ineq(self, strict: bool = False) -> lp.Ineq:
        return lp.Ineq(self.h, self.c, strict)

    def atom(self) -> Formula:
        return linear([(self.h[0], TemporalTerm(PX)), (self.h[1], TemporalTerm(PY))], "<=", self.c)


@dataclass(frozen=True)
class HPolytope:
    facets: tuple[Facet, ...]

    def __post_init__(self):
        object.__setattr__(self, "facets", tuple(self.facets))

    @classmethod
    def box(cls, xmin, ymin, xmax, ymax) -> "HPolytope":
        xmin, ymin, xmax, ymax = (as_fraction(v) for v in (xmin, ymin, xmax, ymax))
        return cls((
            Facet((1, 0), xmax),
            Facet((0, 1), ymax),
            Facet((-1, 0), -xmin),
            Facet((0, -1), -ymin),
        ))

    @classmethod
    def from_vertices(cls, points: Sequence) -> "HPolytope":
        """Counter-clockwise convex polygon vertices to facets."""
        pts = [(as_fraction(x), as_fraction(y)) for x, y in points]
        facets = []
        for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
            h = (y1 - y0, x0 - x1)
            facets.append(Facet(h, h[0] * x0 + h[1] * y0))
        return cls(tuple(facets))

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    def contains(self, p) -> bool:
        p = (as_fraction(p[0]), as_fraction(p[1]))
        return all(f.holds(p) for f in self.facets)

    def ineqs(self, strict: bool = False) -> list[lp.Ineq]:
        return [f.as_ineq(strict) for f in self.facets]

    def is_empty(self) -> bool:
        return not lp.feasible(self.ineqs(), 2)

    def is_bounded(self) -> bool:
        return lp.bounded(self.ineqs(), 2)

    def interior_meets(self, other: "HPolytope") -> bool:
        """True iff ``other`` meets the open interior of ``self``."""
        return lp.feasible(self.ineqs(strict=True) + other.ineqs(), 2)

    def subset_of(self, other: "HPolytope") -> bool:
        mine = self.ineqs()
        for f in other.facets:
            # some point of self strictly beyond a facet of other?
            beyond = lp.Ineq((-f.h[0], -f.h[1]), -f.c, True)
            if lp.feasible(mine + [beyond], 2):
                return False
        return True

    def vertices(self) -> list[tuple[Fraction, Fraction]]:
        """Exact vertices, counter-clockwise (bounded, nonempty polygons)."""
        pts = set()
        fs = self.facets
        for i in range(len(fs)):
            for j in range(i + 1, len(fs)):
                (a, b), c = fs[i].h, fs[i].c
                (d, e), g = fs[j].h, fs[j].c
                det = a * e - b * d
                if det == 0:
                    continue
                p = ((c * e - b * g) / det, (a * g - c * d) / det)
                if self.contains(p):
                    pts.add(p)
        if not pts:
            return []
        cx = sum(p[0] for p in pts) / len(pts)
        cy = sum(p[1] for p in pts) / len(pts)
        return sorted(pts, key=lambda p: math.atan2(p[1] - cy, p[0] - cx))

    def to_json(self) -> list[dict]:
        return [{"h": [_jnum(f.h[0]), _jnum(f.h[1])], "c": _jnum(f.c)} for f in self.facets]

    @classmethod
    def from_json(cls, data) -> "HPolytope":
        if isinstance(data, dict) and "box" in data:
            return cls.box(*(_parse_num(v) for v in data["box"]))
        if isinstance(data, dict) and "facets" in data:
            data = data["facets"]
        return cls(tuple(Facet(tuple(_parse_num(v) for v in f["h"]), _parse_num(f["c"])) for f in data))


def _jnum(q: Fraction):
    q = as_fraction(q)
    return q.numerator if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _parse_num(v) -> Fraction:
    if isinstance(v, bool):
        raise GeometryError("boolean where a number was expected")
    if isinstance(v, float):
        return Fraction(str(v))
    return as_fraction(v)


def polytopes_intersect(p1: HPolytope, p2: HPolytope) -> bool:
    return lp.feasible(p1.ineqs() + p2.ineqs(), 2)


@dataclass(frozen=True)
class Workspace:
    boundary: HPolytope
    obstacles: tuple[HPolytope, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.boundary.is_empty() or not self.boundary.is_bounded():
            raise GeometryError("workspace boundary must be a nonempty bounded polygon")
        for i, ob in enumerate(self.obstacles):
            if ob.is_empty():
                raise GeometryError(f"obstacle {i} is empty")


@dataclass(frozen=True)
class CObstacle:
    inflated: HPolytope
    source: int
    radius: Fraction


def sqrt_upper(x: Fraction, scale: int = 10**9) -> Fraction:
    """Smallest multiple of ``1/(den*scale)`` not below ``sqrt(x)``; exact for rational roots."""
    x = as_fraction(x)
    if x < 0:
        raise ValueError("negative radicand")
    n, d = x.numerator, x.denominator
    root = math.isqrt(n * d)
    if root * root == n * d:
        return Fraction(root, d)
    r = math.isqrt(n * d * scale * scale)
    if r * r != n * d * scale * scale:
        r += 1
    return Fraction(r, d * scale)


def c_obstacle(obstacle: HPolytope, radius, source: int = 0) -> CObstacle:
    """Offset every facet outward by ``radius``; over-approximates the disc Minkowski sum."""
    radius = as_fraction(radius)
    if radius < 0:
        raise GeometryError("negative inflation radius")
    if obstacle.is_empty():
        raise GeometryError(f"obstacle {source} is empty")
    facets = tuple(
        Facet(f.h, f.c + radius * sqrt_upper(f.h[0] ** 2 + f.h[1] ** 2)) for f in obstacle.facets
    )
    return CObstacle(HPolytope(facets), source, radius)


def c_obstacles(workspace: Workspace, radius) -> list[CObstacle]:
    return [c_obstacle(ob, radius, i) for i, ob in enumerate(workspace.obstacles)]


def build_phi_safe(workspace: Workspace, cobstacles: Sequence[CObstacle]) -> Formula:
    """Always inside the workspace and, per C-obstacle, on one outer half-plane now and next."""
    stay_in = [f.atom() for f in workspace.boundary.facets]
    avoid = []
    for cb in cobstacles:
        sides = []
        for f in cb.inflated.facets:
            b = f.complement().atom()
            sides.append(conj(b, Next(b)))
        avoid.append(disj(*sides))
    return Always(conj(*stay_in, *avoid))


@dataclass(frozen=True)
class Tunnel:
    polytopes: tuple[HPolytope, ...]

    def __post_init__(self):
        object.__setattr__(self, "polytopes", tuple(self.polytopes))

    def __len__(self) -> int:
        return len(self.polytopes)

    def __getitem__(self, i: int) -> HPolytope:
        return self.polytopes[i]


def tunnel_valid(tunnel: Tunnel, workspace: Workspace, cobstacles: Sequence[CObstacle]) -> Check:
    """Check the tunnel invariants; indices in messages are 1-based plan steps."""
    if not len(tunnel):
        return Check(False, "empty tunnel", 0)
    for k, poly in enumerate(tunnel.polytopes, start=1):
        if poly.is_empty():
            return Check(False, f"polytope {k} is empty", k)
        if not poly.subset_of(workspace.boundary):
            return Check(False, f"polytope {k} leaves the workspace", k)
        for cb in cobstacles:
            if cb.inflated.interior_meets(poly):
                return Check(False, f"polytope {k} overlaps C-obstacle {cb.source}", k)
    for k in range(1, len(tunnel)):
        if not polytopes_intersect(tunnel[k - 1], tunnel[k]):
            return Check(False, f"gap between {k} and {k + 1}", k)
    return Check(True, "ok")


def segment_hits_interior(a, b, poly: HPolytope) -> bool:
    """Does the closed segment ``a -> b`` meet the open interior of ``poly``?"""
    a = (as_fraction(a[0]), as_fraction(a[1]))
    b = (as_fraction(b[0]), as_fraction(b[1]))
    d = (b[0] - a[0], b[1] - a[1])
    rows = [lp.Ineq((Fraction(-1),), Fraction(0)), lp.Ineq((Fraction(1),), Fraction(1))]
    for f in poly.facets:
        # h . (a + t d) < c
        rows.append(lp.Ineq((f.h[0] * d[0] + f.h[1] * d[1],), f.c - f.value(a), True))
    return lp.feasible(rows, 1)


def point_polygon_distance(p, vertices: Sequence) -> float:
    """Euclidean distance from ``p`` to a convex polygon (0 inside); float helper for tests/sim."""
    px, py = float(p[0]), float(p[1])
    vs = [(float(x), float(y)) for x, y in vertices]
    inside = True
    best = math.inf
    for (x0, y0), (x1, y1) in zip(vs, vs[1:] + vs[:1]):
        ex, ey = x1 - x0, y1 - y0
        if ex * (py - y0) - ey * (px - x0) < 0:
            inside = False
        L = ex * ex + ey * ey
        t = 0.0 if L == 0 else max(0.0, min(1.0, ((px - x0) * ex + (py - y0) * ey) / L))
        best = min(best, math.hypot(px - (x0 + t * ex), py - (y0 + t * ey)))
    return 0.0 if inside else best
