"""The maps: linear Anosov f_A, the family f_t, sphere quotients, products.

    f_t(x, y) = (2x + y - s, x + y - s),   s = t sin(2 pi x) / (2 pi)

f_t is odd and Z^2-equivariant with linear part A = [[2, 1], [1, 1]], so it
descends to the torus and to the sphere T^2 / (p ~ -p).  Other hyperbolic
unimodular matrices are accepted at t = 0 only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from . import spaces
from .spaces import PRODUCT, SPHERE, TORUS, ProductPoint, SpherePoint, TorusPoint

STANDARD = ((2, 1), (1, 1))
TWO_PI = 2.0 * np.pi


class UnsupportedSpec(ValueError):
    pass


@dataclass(frozen=True)
class MapSpec:
    space: str = TORUS
    matrix: Tuple[Tuple[int, int], Tuple[int, int]] = STANDARD
    t: float = 0.0
    factors: Optional[tuple] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "matrix", tuple(tuple(int(v) for v in row) for row in self.matrix))
        object.__setattr__(self, "t", float(self.t))
        if self.space not in (TORUS, SPHERE, PRODUCT):
            raise UnsupportedSpec(f"unknown space {self.space!r}")
        if self.space == PRODUCT:
            if not self.factors or len(self.factors) < 2:
                raise UnsupportedSpec("a product needs at least two factors")
            object.__setattr__(self, "factors", tuple(self.factors))
            for f in self.factors:
                if f.space == PRODUCT:
                    raise UnsupportedSpec("nested products are not supported")
            return
        if self.factors:
            raise UnsupportedSpec("factors given for a non-product space")
        (a, b), (c, d) = self.matrix
        det = a * d - b * c
        if det not in (1, -1):
            raise UnsupportedSpec(f"det(A) = {det}, expected +-1")
        tr = a + d
        # no eigenvalue on the unit circle
        if (det == 1 and abs(tr) <= 2) or (det == -1 and tr == 0):
            raise UnsupportedSpec("matrix is not hyperbolic")
        if not 0.0 <= self.t <= 1.0:
            raise UnsupportedSpec("t must lie in [0, 1]")
        if self.t > 0.0 and self.matrix != STANDARD:
            raise UnsupportedSpec("t > 0 is only defined for A = [[2,1],[1,1]]")

    @property
    def chart(self) -> str:
        return self.space

    @property
    def A(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    @property
    def is_standard(self) -> bool:
        return self.matrix == STANDARD

    def to_dict(self) -> dict:
        if self.space == PRODUCT:
            return {"space": PRODUCT, "factors": [f.to_dict() for f in self.factors]}
        return {"space": self.space, "matrix": [list(r) for r in self.matrix], "t": self.t}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MapSpec":
        if d.get("space") == PRODUCT:
            return cls(space=PRODUCT, factors=tuple(cls.from_dict(f) for f in d["factors"]))
        return cls(space=d.get("space", TORUS), matrix=tuple(map(tuple, d.get("matrix", STANDARD))),
                   t=d.get("t", 0.0))

    @classmethod
    def from_json(cls, s: str) -> "MapSpec":
        return cls.from_dict(json.loads(s))


def torus(t: float = 0.0, matrix=STANDARD) -> MapSpec:
    return MapSpec(TORUS, matrix, t)


def sphere(t: float = 0.0, matrix=STANDARD) -> MapSpec:
    return MapSpec(SPHERE, matrix, t)


def product(*specs: MapSpec) -> MapSpec:
    return MapSpec(PRODUCT, factors=tuple(specs))


@dataclass(frozen=True)
class EigenData:
    mu_u: float
    mu_s: float
    v_u: np.ndarray
    v_s: np.ndarray
    w_u: np.ndarray  # dual covectors: p = (w_u.p) v_u + (w_s.p) v_s
    w_s: np.ndarray

    def coords(self, P: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        P = np.asarray(P, dtype=float)
        return P @ self.w_u, P @ self.w_s


@lru_cache(maxsize=None)
def _eigen(matrix) -> EigenData:
    A = np.array(matrix, dtype=float)
    (a, b), (c, d) = matrix
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(tr * tr - 4.0 * det)
    l1 = (tr + disc) / 2.0
    l2 = (tr - disc) / 2.0
    lu, ls = (l1, l2) if abs(l1) > abs(l2) else (l2, l1)

    def vec(lam):
        # (A - lam I) v = 0; use the better-conditioned row
        if abs(b) >= abs(c):
            v = np.array([b, lam - a], dtype=float)
        else:
            v = np.array([lam - d, c], dtype=float)
        v /= np.hypot(*v)
        return v

    vu = vec(lu)
    vs = vec(ls)
    # fixed orientations: v_u with positive first entry, v_s with positive second
    if vu[0] < 0 or (vu[0] == 0 and vu[1] < 0):
        vu = -vu
    if vs[1] < 0 or (vs[1] == 0 and vs[0] < 0):
        vs = -vs
    W = np.linalg.inv(np.stack([vu, vs], axis=1))
    for arr in (vu, vs):
        arr.setflags(write=False)
    wu = W[0].copy()
    ws = W[1].copy()
    wu.setflags(write=False)
    ws.setflags(write=False)
    assert np.allclose(A @ vu, lu * vu, atol=1e-12) and np.allclose(A @ vs, ls * vs, atol=1e-12)
    return EigenData(float(lu), float(ls), vu, vs, wu, ws)


def eigenstructure(spec: MapSpec) -> EigenData:
    if spec.space == PRODUCT:
        raise UnsupportedSpec("eigenstructure is per factor")
    return _eigen(spec.matrix)


# ---------------------------------------------------------------------------
# lifts (arrays, shape (..., 2))


def apply_lift_arr(spec: MapSpec, P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if spec.t == 0.0:
        return P @ spec.A.T
    s = spec.t / TWO_PI * np.sin(TWO_PI * P[..., 0])
    return np.stack([2.0 * P[..., 0] + P[..., 1] - s, P[..., 0] + P[..., 1] - s], axis=-1)


def apply_inverse_lift_arr(spec: MapSpec, P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if spec.t == 0.0:
        (a, b), (c, d) = spec.matrix
        det = a * d - b * c
        Ainv = np.array([[d, -b], [-c, a]], dtype=float) * det
        return P @ Ainv.T
    x = P[..., 0] - P[..., 1]
    y = P[..., 1] - x + spec.t / TWO_PI * np.sin(TWO_PI * x)
    return np.stack([x, y], axis=-1)


def iterate_lift_arr(spec: MapSpec, P: np.ndarray, n: int) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    step = apply_lift_arr if n >= 0 else apply_inverse_lift_arr
    for _ in range(abs(n)):
        P = step(spec, P)
    return P


def iterate_arr(spec: MapSpec, P: np.ndarray, n: int) -> np.ndarray:
    """n-fold map on the quotient, reducing after every step."""
    P = spaces.project_arr(np.asarray(P, dtype=float), spec.chart)
    step = apply_lift_arr if n >= 0 else apply_inverse_lift_arr
    for _ in range(abs(n)):
        P = spaces.project_arr(step(spec, P), spec.chart)
    return P


def orbit_arr(spec: MapSpec, x: np.ndarray, n: int) -> np.ndarray:
    """Points x, f(x), ..., f^(n-1)(x) (reduced)."""
    out = np.empty((n,) + np.shape(x))
    p = spaces.project_arr(np.asarray(x, dtype=float), spec.chart)
    for k in range(n):
        out[k] = p
        p = spaces.project_arr(apply_lift_arr(spec, p), spec.chart)
    return out


def jacobian_arr(spec: MapSpec, P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    c = spec.t * np.cos(TWO_PI * P[..., 0])
    J = np.empty(P.shape[:-1] + (2, 2))
    if spec.t == 0.0:
        J[...] = spec.A
        return J
    J[..., 0, 0] = 2.0 - c
    J[..., 0, 1] = 1.0
    J[..., 1, 0] = 1.0 - c
    J[..., 1, 1] = 1.0
    return J


def lipschitz(spec: MapSpec) -> float:
    """Sup over the torus of the operator norm of Df (sampled, 1% margin)."""
    if spec.space == PRODUCT:
        return max(lipschitz(f) for f in spec.factors)
    if spec.t == 0.0:
        return float(np.linalg.norm(spec.A, 2))
    xs = np.linspace(0.0, 1.0, 2049)
    J = jacobian_arr(spec, np.stack([xs, np.zeros_like(xs)], axis=1))
    return 1.01 * float(np.linalg.norm(J, 2, axis=(1, 2)).max())


# ---------------------------------------------------------------------------
# point-level API


def _check_plane(spec: MapSpec):
    if spec.space == PRODUCT:
        raise UnsupportedSpec("lifts act on torus/sphere factors, not on products")


def apply_lift(spec: MapSpec, p) -> spaces.PlanePoint:
    _check_plane(spec)
    v = apply_lift_arr(spec, spaces.to_array(p))
    return spaces.PlanePoint(float(v[0]), float(v[1]))


def jacobian_at(spec: MapSpec, p) -> np.ndarray:
    _check_plane(spec)
    return jacobian_arr(spec, spaces.to_array(p))


def _typed(spec: MapSpec, p, fn):
    if spec.space == PRODUCT:
        if not isinstance(p, ProductPoint) or len(p.factors) != len(spec.factors):
            raise TypeError("product spec needs a ProductPoint with matching factor count")
        return ProductPoint(tuple(_typed(f, q, fn) for f, q in zip(spec.factors, p.factors)))
    want = SpherePoint if spec.space == SPHERE else TorusPoint
    if not isinstance(p, want):
        raise TypeError(f"{spec.space} spec needs a {want.__name__}, got {type(p).__name__}")
    v = fn(spec, spaces.to_array(p))
    return spaces.from_array(v, spec.space)


def apply(spec: MapSpec, p):
    return _typed(spec, p, apply_lift_arr)


def apply_inverse(spec: MapSpec, p):
    return _typed(spec, p, apply_inverse_lift_arr)
