"""cwN certificates, products and periodic-point separation.

A certificate sweeps the grid i/n of the unit square and brackets every
point with itself, x in C^s_eps(x) cap C^u_eps(x).  All counted points come
from :func:`foliation.bracket_batch` with membership verification on, so a
reported count is never geometric only.  Points of maximal count are kept
as witnesses and can be re-checked with :meth:`CwNReport.reverify`.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import foliation, spaces
from .foliation import IntersectionSet
from .systems import MapSpec, product

CHUNK = 4096
MAX_PRODUCT_FACTORS = 3
FACTOR_WITNESSES = 4  # witnesses per factor entering a product


class EmptyCensus(ValueError):
    pass


@dataclass
class CwNReport:
    eps: float
    max_count: int
    witness_points: List[Tuple[np.ndarray, IntersectionSet]]
    grid_n: int
    spec: Optional[MapSpec] = None
    histogram: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.witness_points:
            assert self.max_count == max(len(s) for _, s in self.witness_points)

    def singular_distances(self) -> np.ndarray:
        """Distance of each witness to the nearest singular class."""
        if not self.witness_points:
            return np.zeros(0)
        P = np.array([p for p, _ in self.witness_points])
        if P.shape[1] != 2:
            raise ValueError("singular classes are defined for a single sphere factor")
        D = np.stack([spaces.quotient_dist_arr(P, s, spaces.SPHERE) for s in spaces.SINGULAR], 1)
        return D.min(axis=1)

    def reverify(self, conj=None) -> bool:
        if self.spec is None:
            raise ValueError("report carries no spec")
        for p, S in self.witness_points:
            if not _verify_product_points(self.spec, p, S.points, self.eps, conj):
                return False
        return True

    def to_json(self) -> dict:
        return {"eps": self.eps, "max_count": int(self.max_count), "grid_n": self.grid_n,
                "spec": None if self.spec is None else self.spec.to_dict(),
                "histogram": {str(k): int(v) for k, v in sorted(self.histogram.items())},
                "witness_points": [{"point": np.asarray(p, dtype=float).tolist(), "set": S.to_json()}
                                   for p, S in self.witness_points]}


def count_self_intersections(spec: MapSpec, x, eps: float, conj=None) -> IntersectionSet:
    """All points of C^s_eps(x) cap C^u_eps(x); x itself is always one of them."""
    return foliation.bracket(spec, x, x, eps, conj)


def canonical_grid(grid_n: int) -> np.ndarray:
    g = np.arange(grid_n) / grid_n
    Xg, Yg = np.meshgrid(g, g, indexing="ij")
    return np.stack([Xg.ravel(), Yg.ravel()], 1)


def _sweep(spec, X, eps, conj, threads):
    chunks = [X[i:i + CHUNK] for i in range(0, len(X), CHUNK)]
    job = lambda C: foliation.bracket_batch(spec, C, C, eps, conj, verify=True)
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(job, chunks))
    else:
        parts = [job(C) for C in chunks]
    Z = np.concatenate([p[0] for p in parts])
    count = np.concatenate([p[1] for p in parts])
    return Z, count


def cwN_certificate(spec: MapSpec, eps: float, grid_n: int = 200, conj=None,
                    max_witnesses: Optional[int] = None, threads: int = 1) -> CwNReport:
    if grid_n < 50:
        raise ValueError("grid_n must be at least 50")
    X = canonical_grid(grid_n)
    Z, count = _sweep(spec, X, eps, conj, threads)
    if (count == 0).any():
        # x always lies in both of its own leaves
        raise RuntimeError(f"{int((count == 0).sum())} grid points failed to bracket with themselves")
    top = int(count.max())
    idx = np.flatnonzero(count == top)
    if max_witnesses is not None:
        idx = idx[:max_witnesses]
    wit = [(X[i].copy(), IntersectionSet(Z[i, :top].copy(), foliation.DEDUP_TOL, spec.chart))
           for i in idx]
    hist = {int(k): int(v) for k, v in zip(*np.unique(count, return_counts=True))}
    return CwNReport(eps, top, wit, grid_n, spec, hist)


def _verify_product_points(spec: MapSpec, x, Z, eps, conj=None) -> bool:
    """z in C^u_eps(x) cap C^s_eps(x) for every row of Z, factor by factor.

    In the maximum metric a product orbit stays eps-close iff every factor
    does, so membership splits into factor tests.
    """
    x = np.asarray(x, dtype=float)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    factors = spec.factors if spec.factors else (spec,)
    conjs = conj if isinstance(conj, (list, tuple)) else [conj] * len(factors)
    for j, (f, cj) in enumerate(zip(factors, conjs)):
        sl = slice(2 * j, 2 * j + 2)
        X = np.repeat(x[None, sl], len(Z), axis=0)
        ok, _ = foliation.verify_membership(f, Z[:, sl], X, X, eps)
        if not ok.all():
            return False
    return True


def product_cw_analysis(specs: Sequence[MapSpec], eps: float, grid_n: int = 50, conj=None,
                        threads: int = 1) -> CwNReport:
    """cwN certificate of a product from certificates of its factors.

    The intersection at (x_1, .., x_k) is the Cartesian product of the factor
    intersections; each product point is re-tested in the product metric.
    """
    if not 2 <= len(specs) <= MAX_PRODUCT_FACTORS:
        raise ValueError(f"products of 2..{MAX_PRODUCT_FACTORS} factors are supported")
    conjs = conj if isinstance(conj, (list, tuple)) else [conj] * len(specs)
    reps = [cwN_certificate(s, eps, grid_n, c, max_witnesses=None, threads=threads)
            for s, c in zip(specs, conjs)]
    pspec = product(*specs)
    # spread the chosen witnesses over each factor's list
    picks = []
    for r in reps:
        w = r.witness_points
        sel = np.unique(np.linspace(0, len(w) - 1, min(FACTOR_WITNESSES, len(w))).round().astype(int))
        picks.append([w[i] for i in sel])
    wit = []
    for combo in itertools.product(*picks):
        x = np.concatenate([p for p, _ in combo])
        pts = np.array([np.concatenate(zs) for zs in itertools.product(*[S.points for _, S in combo])])
        if not _verify_product_points(pspec, x, pts, eps, conjs):
            raise RuntimeError(f"product point failed membership at {x.tolist()}")
        wit.append((x, IntersectionSet(pts, foliation.DEDUP_TOL, spaces.PRODUCT)))
    top = max(len(S) for _, S in wit)
    hist = {top: len(wit)}
    return CwNReport(eps, top, wit, grid_n, pspec, hist)


def eps_ladder_counts(spec: MapSpec, eps_values: Sequence[float], grid_n: int = 50, conj=None) -> list:
    """max_count along an increasing eps ladder (it should not decrease)."""
    return [cwN_certificate(spec, e, grid_n, conj).max_count for e in sorted(eps_values)]


def singular_probe(spec: MapSpec, eps: float, sigma: Optional[float] = None, n: int = 8,
                   conj=None) -> dict:
    """Self-intersection counts at points sigma * 2^-j off each singular class."""
    sigma = 0.25 * eps if sigma is None else sigma
    radii = sigma * 2.0 ** -np.arange(n)
    th = 0.3
    off = np.array([math.cos(th), math.sin(th)])
    out = {}
    for s in spaces.SINGULAR:
        X = s[None, :] + radii[:, None] * off[None, :]
        _, count = foliation.bracket_batch(spec, X, X, eps, conj)
        out[tuple(map(float, s))] = {"radii": radii.tolist(), "counts": count.tolist()}
    return out


def fixed_point_separation(spec: MapSpec, k: int, eps: Optional[float] = None, census=None) -> float:
    """Minimum pairwise quotient distance among period-k points.

    ``eps`` is the cw constant the separation is compared against; it does
    not enter the computation.  One point gives math.inf.
    """
    from .shadowing import periodic_census
    c = periodic_census(spec, k) if census is None else census
    P = np.asarray(c.points, dtype=float)
    if len(P) == 0:
        raise EmptyCensus(f"no period-{k} points found")
    if len(P) == 1:
        return math.inf
    D = np.stack([spaces.quotient_dist_arr(P, p, spec.chart) for p in P])
    D[np.diag_indices(len(P))] = np.inf
    return float(D.min())
