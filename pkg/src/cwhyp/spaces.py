"""Points and metrics on the flat torus, the pillowcase sphere and products.

The sphere is the quotient of the torus by p ~ -p.  A class is stored by a
canonical torus representative.  Distances on the torus are the flat
quotient distance of the unit square; on the sphere the minimum over both
lifts; on products the maximum over factors.

Scalar functions take the small point classes below.  The ``*_arr``
functions take (n, 2) float arrays and are what the rest of the package
uses internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

TORUS = "torus"
SPHERE = "sphere"
PRODUCT = "product"
CHARTS = (TORUS, SPHERE)


def _red(v: float) -> float:
    r = v % 1.0
    # v % 1 can round up to exactly 1.0 for tiny negative v
    return 0.0 if r >= 1.0 else r


@dataclass(frozen=True)
class PlanePoint:
    x: float
    y: float

    def to_json(self):
        return [self.x, self.y]


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", _red(float(self.x)))
        object.__setattr__(self, "y", _red(float(self.y)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_json(self):
        return [self.x, self.y]

    @classmethod
    def from_json(cls, obj):
        return cls(obj[0], obj[1])


@dataclass(frozen=True)
class SpherePoint:
    rep: TorusPoint

    def as_array(self) -> np.ndarray:
        return self.rep.as_array()

    def to_json(self):
        return {"rep": self.rep.to_json()}

    @classmethod
    def from_json(cls, obj):
        return canonicalize(TorusPoint.from_json(obj["rep"]))


@dataclass(frozen=True)
class ProductPoint:
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    def to_json(self):
        return [f.to_json() for f in self.factors]


Point = Union[TorusPoint, SpherePoint, ProductPoint]


def reduce(p) -> TorusPoint:
    if isinstance(p, (TorusPoint, PlanePoint)):
        return TorusPoint(p.x, p.y)
    return TorusPoint(p[0], p[1])


def antipode(p: TorusPoint) -> TorusPoint:
    return TorusPoint(-p.x, -p.y)


def canonicalize(p) -> SpherePoint:
    """Class of p in the sphere; representative is the lexicographic min."""
    a = reduce(p)
    b = antipode(a)
    return SpherePoint(a if (a.x, a.y) <= (b.x, b.y) else b)


def torus_dist(a: TorusPoint, b: TorusPoint) -> float:
    dx = a.x - b.x
    dy = a.y - b.y
    dx -= np.floor(dx + 0.5)
    dy -= np.floor(dy + 0.5)
    return float(np.hypot(dx, dy))


def sphere_dist(a: SpherePoint, b: SpherePoint) -> float:
    return min(torus_dist(a.rep, b.rep), torus_dist(a.rep, antipode(b.rep)))


def product_dist(a: ProductPoint, b: ProductPoint) -> float:
    if len(a.factors) != len(b.factors):
        raise ValueError("factor count mismatch")
    return max(dist(u, v) for u, v in zip(a.factors, b.factors))


def dist(a: Point, b: Point) -> float:
    if isinstance(a, SpherePoint) and isinstance(b, SpherePoint):
        return sphere_dist(a, b)
    if isinstance(a, TorusPoint) and isinstance(b, TorusPoint):
        return torus_dist(a, b)
    if isinstance(a, ProductPoint) and isinstance(b, ProductPoint):
        return product_dist(a, b)
    raise TypeError(f"cannot measure {type(a).__name__} against {type(b).__name__}")


def singular_points() -> frozenset:
    """The four classes fixed by the antipodal map."""
    return frozenset(canonicalize((u, v)) for u in (0.0, 0.5) for v in (0.0, 0.5))


SINGULAR = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]])


# ---------------------------------------------------------------------------
# array versions


def wrap(d: np.ndarray) -> np.ndarray:
    """Representative of d mod Z^2 in [-1/2, 1/2)."""
    return d - np.floor(d + 0.5)


def reduce_arr(P: np.ndarray) -> np.ndarray:
    R = np.mod(P, 1.0)
    R[R >= 1.0] = 0.0
    return R


def canonicalize_arr(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    a = reduce_arr(P)
    b = reduce_arr(-a)
    swap = (b[..., 0] < a[..., 0]) | ((b[..., 0] == a[..., 0]) & (b[..., 1] < a[..., 1]))
    return np.where(swap[..., None], b, a)


def project_arr(P: np.ndarray, chart: str) -> np.ndarray:
    if chart == SPHERE:
        return canonicalize_arr(P)
    return reduce_arr(np.asarray(P, dtype=float))


def torus_dist_arr(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = wrap(np.asarray(A, dtype=float) - np.asarray(B, dtype=float))
    return np.hypot(d[..., 0], d[..., 1])


def quotient_dist_arr(A: np.ndarray, B: np.ndarray, chart: str) -> np.ndarray:
    d = torus_dist_arr(A, B)
    if chart == SPHERE:
        d = np.minimum(d, torus_dist_arr(A, -np.asarray(B, dtype=float)))
    return d


def nearest_lift(p: np.ndarray, ref: np.ndarray, chart: str) -> np.ndarray:
    """Lift of the class of p closest (in the plane) to ref."""
    p = np.asarray(p, dtype=float)
    ref = np.asarray(ref, dtype=float)
    c = ref + wrap(p - ref)
    if chart == SPHERE:
        c2 = ref + wrap(-p - ref)
        far = np.sum((c2 - ref) ** 2, axis=-1) < np.sum((c - ref) ** 2, axis=-1)
        c = np.where(far[..., None], c2, c)
    return c


def to_array(p: Point) -> np.ndarray:
    if isinstance(p, (TorusPoint, SpherePoint)):
        return p.as_array()
    if isinstance(p, PlanePoint):
        return np.array([p.x, p.y])
    return np.asarray(p, dtype=float)


def from_array(v: Sequence[float], chart: str) -> Point:
    return canonicalize(v) if chart == SPHERE else reduce(v)


def point_from_json(obj, chart: str) -> Point:
    if chart == SPHERE:
        return SpherePoint.from_json(obj) if isinstance(obj, dict) else canonicalize(obj)
    return TorusPoint.from_json(obj)
