"""Polyline continua with two marked vertices, and their iteration.

A continuum is stored as a connected lift: consecutive vertices are at
plane distance <= h_max, and the quotient (torus or sphere) is applied only
when measuring.  Iterating maps the whole lift; gaps that grow past h_max
are closed by bisecting the *source* segment and re-mapping, so the image is
a faithful polyline of the true image arc.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels, spaces
from .systems import MapSpec, apply_inverse_lift_arr, apply_lift_arr

DEFAULT_MAX_VERTICES = 1_000_000
EXACT_DIAM_LIMIT = 4000


class VertexBudgetExceeded(RuntimeError):
    pass


class NotChained(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MarkedContinuum:
    chart: str
    vertices: np.ndarray
    mark_p: int
    mark_q: int
    h_max: float

    def __post_init__(self):
        V = np.ascontiguousarray(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or len(V) < 1:
            raise ValueError("vertices must be a non-empty (n, 2) array")
        if self.chart not in spaces.CHARTS:
            raise ValueError(f"unknown chart {self.chart!r}")
        n = len(V)
        if not (0 <= self.mark_p < n and 0 <= self.mark_q < n):
            raise ValueError("mark index out of range")
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def p(self) -> np.ndarray:
        return self.vertices[self.mark_p]

    @property
    def q(self) -> np.ndarray:
        return self.vertices[self.mark_q]

    def max_gap(self) -> float:
        if len(self.vertices) < 2:
            return 0.0
        d = np.diff(self.vertices, axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).max())

    def swapped(self) -> "MarkedContinuum":
        return MarkedContinuum(self.chart, self.vertices, self.mark_q, self.mark_p, self.h_max)

    def with_marks(self, p: int, q: int) -> "MarkedContinuum":
        return MarkedContinuum(self.chart, self.vertices, p, q, self.h_max)

    def sub(self, i: int, j: int) -> "MarkedContinuum":
        """Sub-arc between vertices i <= j, marked at its ends."""
        return MarkedContinuum(self.chart, self.vertices[i:j + 1], 0, j - i, self.h_max)

    def to_json(self) -> dict:
        return {"chart": self.chart, "vertices": self.vertices.tolist(),
                "mark_p": int(self.mark_p), "mark_q": int(self.mark_q), "h_max": self.h_max}

    @classmethod
    def from_json(cls, d: dict) -> "MarkedContinuum":
        return cls(d["chart"], np.array(d["vertices"], dtype=float), d["mark_p"], d["mark_q"],
                   d.get("h_max", math.inf))


def make_segment(center, direction, length: float, h_max: float, chart: str = spaces.TORUS
                 ) -> MarkedContinuum:
    if not length > 0:
        raise ValueError("segment length must be positive")
    if not h_max > 0:
        raise ValueError("h_max must be positive")
    c = spaces.to_array(center).astype(float)
    u = np.asarray(direction, dtype=float)
    u = u / np.hypot(*u)
    n_seg = max(1, math.ceil(length / h_max - 1e-9))
    s = np.linspace(-0.5 * length, 0.5 * length, n_seg + 1)
    V = c[None, :] + s[:, None] * u[None, :]
    return MarkedContinuum(chart, V, 0, n_seg, h_max)


def _insert_midpoints(src: np.ndarray, bad: np.ndarray, track: np.ndarray):
    pos = np.flatnonzero(bad)
    mids = 0.5 * (src[pos] + src[pos + 1])
    new = np.insert(src, pos + 1, mids, axis=0)
    before = np.concatenate([[0], np.cumsum(bad)])
    return new, track + before[track]


def step_refined(spec: MapSpec, V: np.ndarray, h_max: float, track: np.ndarray, forward: bool = True,
                 max_vertices: int = DEFAULT_MAX_VERTICES) -> Tuple[np.ndarray, np.ndarray]:
    """Image of the lift polyline under one step; ``track`` indices follow their points."""
    step = apply_lift_arr if forward else apply_inverse_lift_arr
    src = V
    track = np.asarray(track, dtype=np.int64)
    while True:
        img = step(spec, src)
        if len(img) < 2:
            return img, track
        d = np.diff(img, axis=0)
        bad = np.hypot(d[:, 0], d[:, 1]) > h_max
        if not bad.any():
            return img, track
        if len(src) + int(bad.sum()) > max_vertices:
            raise VertexBudgetExceeded(f"refinement needs more than {max_vertices} vertices")
        src, track = _insert_midpoints(src, bad, track)


def iterate_continuum(C: MarkedContinuum, spec: MapSpec, n: int, n_cap: Optional[int] = 10_000,
                      max_vertices: int = DEFAULT_MAX_VERTICES) -> MarkedContinuum:
    if n_cap is not None and abs(n) > n_cap:
        raise ValueError(f"|n| = {abs(n)} exceeds the cap {n_cap}")
    V = np.array(C.vertices)
    track = np.array([C.mark_p, C.mark_q], dtype=np.int64)
    for _ in range(abs(n)):
        V, track = step_refined(spec, V, C.h_max, track, n > 0, max_vertices)
    return MarkedContinuum(C.chart, V, int(track[0]), int(track[1]), C.h_max)


def _farthest_point_subsample(P: np.ndarray, k: int, chart: str) -> np.ndarray:
    idx = np.empty(k, dtype=np.int64)
    idx[0] = 0
    dmin = spaces.quotient_dist_arr(P, P[0], chart)
    for i in range(1, k):
        j = int(np.argmax(dmin))
        idx[i] = j
        dmin = np.minimum(dmin, spaces.quotient_dist_arr(P, P[j], chart))
    return idx


def continuum_diam_info(C: MarkedContinuum, limit: int = EXACT_DIAM_LIMIT):
    V = C.vertices
    if len(V) <= 1:
        return 0.0, {"subsampled": False, "n_used": len(V)}
    sphere = C.chart == spaces.SPHERE
    if len(V) <= limit:
        return float(_kernels.max_pairwise(V, sphere)), {"subsampled": False, "n_used": len(V)}
    idx = _farthest_point_subsample(V, limit, C.chart)
    d = float(_kernels.max_pairwise(np.ascontiguousarray(V[idx]), sphere))
    return d, {"subsampled": True, "n_used": limit}


def continuum_diam(C: MarkedContinuum) -> float:
    return continuum_diam_info(C)[0]


def _align(part: np.ndarray, end: np.ndarray, chart: str, tol: float):
    """Deck transform of ``part`` making its first vertex equal ``end``, or None."""
    d = spaces.wrap(part[0] - end)
    if np.hypot(*d) <= tol:
        return part - np.round(part[0] - end)
    if chart == spaces.SPHERE:
        d = spaces.wrap(-part[0] - end)
        if np.hypot(*d) <= tol:
            return -part - np.round(-part[0] - end)
    return None


def chain_union(parts: Sequence[MarkedContinuum], a, c, tol: float = 1e-9) -> MarkedContinuum:
    """Concatenate arcs that touch end-to-start (either orientation) into one arc."""
    if not parts:
        raise NotChained("no parts given")
    chart = parts[0].chart
    if any(p.chart != chart for p in parts):
        raise NotChained("parts live in different charts")
    acc = np.array(parts[0].vertices)
    if len(parts) > 1:
        # the first part may need reversing to end where the second begins
        nxt = parts[1].vertices
        ends = (nxt[0], nxt[-1])
        touches = lambda v: any(spaces.quotient_dist_arr(v, e, chart) <= tol for e in ends)
        if not touches(acc[-1]) and touches(acc[0]):
            acc = acc[::-1].copy()
    for k, part in enumerate(parts[1:], start=1):
        V = part.vertices
        placed = _align(V, acc[-1], chart, tol)
        if placed is None:
            placed = _align(V[::-1], acc[-1], chart, tol)
        if placed is None:
            raise NotChained(f"part {k} does not start where part {k - 1} ends")
        acc = np.concatenate([acc, placed[1:]], axis=0)
    h = max(p.h_max for p in parts)
    ia = int(np.argmin(spaces.quotient_dist_arr(acc, spaces.to_array(a), chart)))
    ic = int(np.argmin(spaces.quotient_dist_arr(acc, spaces.to_array(c), chart)))
    for name, i, pt in (("a", ia, a), ("c", ic, c)):
        if spaces.quotient_dist_arr(acc[i], spaces.to_array(pt), chart) > tol:
            raise NotChained(f"mark {name} is not a vertex of the union")
    return MarkedContinuum(chart, acc, ia, ic, h)
