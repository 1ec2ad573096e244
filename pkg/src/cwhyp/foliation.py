"""Local stable/unstable leaves and the local product bracket.

At t = 0 the leaves are straight: C^u_eps(x) is the segment of diameter eps
through x along v_u (v_s for the stable leaf), and on the sphere the
projection of that segment, folded at the branch points.  For t > 0 leaves
are carried over from the linear model through h^-1.

bracket(x, y) lists the points of C^u_eps(x) cap C^s_eps(y).  In the linear
chart this is a 2x2 solve per lift of y (the antipodal lift included on the
sphere).  For t > 0 the linear answer for h(x), h(y) is pulled back through
h^-1 and then polished in f-space by multiple shooting, which solves for the
orbit that follows x backwards and y forwards.  Every reported point is
re-validated by :func:`verify_membership`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels, spaces
from .continua import MarkedContinuum, continuum_diam, iterate_continuum, make_segment
from .systems import (MapSpec, UnsupportedSpec, apply_inverse_lift_arr, apply_lift_arr,
                      eigenstructure)

STABLE = "stable"
UNSTABLE = "unstable"
DEDUP_TOL = 1e-7
N_DIRECT = 20  # direct-iteration depth of the membership test, capped further for tiny eps
SHOOT_KMAX = 400
SHOOT_GROW = 1e12
SHOOT_K0 = 30


class ConjugacyMissing(ValueError):
    pass


class EmptyIntersection(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class TrimFailed(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LeafSegment:
    base: np.ndarray
    kind: str
    eps: float
    continuum: MarkedContinuum

    def to_json(self) -> dict:
        return {"base": list(map(float, self.base)), "kind": self.kind, "eps": self.eps,
                "continuum": self.continuum.to_json()}


@dataclass(frozen=True, eq=False)
class IntersectionSet:
    points: np.ndarray
    tolerance: float
    chart: str

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def to_json(self) -> dict:
        pts = spaces.project_arr(self.points, self.chart) if len(self.points) else self.points
        return {"points": np.asarray(pts).tolist(), "tolerance": self.tolerance}


def _plain(spec: MapSpec):
    if spec.space == spaces.PRODUCT:
        raise ValueError("leaves of products are products of factor leaves; pass a factor spec")
    if not spec.is_standard:
        raise UnsupportedSpec("leaves are implemented for A = [[2,1],[1,1]] only")


def _need_conj(spec: MapSpec, conj):
    if spec.t > 0 and conj is None:
        raise ConjugacyMissing("t > 0 needs a solved conjugacy (conjugacy.franks_solve)")
    if conj is not None and conj.t is not None and abs(conj.t - spec.t) > 1e-15:
        raise ValueError(f"conjugacy was solved for t={conj.t}, spec has t={spec.t}")


# ---------------------------------------------------------------------------
# leaves


def _leaf_ok(C: MarkedContinuum, spec: MapSpec, kind: str, eps: float, n_check: int) -> bool:
    step = 1 if kind == STABLE else -1
    D = C
    cap = eps * (1.0 + 1e-12)  # the segment itself has diameter eps up to rounding
    for _ in range(n_check + 1):
        if continuum_diam(D) > cap:
            return False
        D = iterate_continuum(D, spec, step)
    return True


def _linear_leaf(spec, x, kind, L, h):
    ed = eigenstructure(spec)
    v = ed.v_s if kind == STABLE else ed.v_u
    return make_segment(x, v, L, h, spec.chart)


def _pulled_back_leaf(spec, x, kind, L, h, conj):
    from .conjugacy import h_full, invert_h
    ed = eigenstructure(spec)
    v = ed.v_s if kind == STABLE else ed.v_u
    hx = h_full(conj, x)[0]
    n_seg = max(2, 2 * math.ceil(L / h / 2))
    s = np.linspace(-0.5 * L, 0.5 * L, n_seg + 1)
    for _ in range(20):
        W = hx[None, :] + s[:, None] * v[None, :]
        P = invert_h(conj, W, tol=1e-9)
        # unwrap into one connected lift, anchored at x
        mid = len(s) // 2
        Q = np.empty_like(P)
        Q[mid] = x
        for i in range(mid + 1, len(P)):
            Q[i] = spaces.nearest_lift(P[i], Q[i - 1], spaces.TORUS)
        for i in range(mid - 1, -1, -1):
            Q[i] = spaces.nearest_lift(P[i], Q[i + 1], spaces.TORUS)
        gaps = np.hypot(*np.diff(Q, axis=0).T)
        if gaps.max() <= h:
            return MarkedContinuum(spec.chart, Q, 0, len(Q) - 1, h)
        bad = np.flatnonzero(gaps > h)
        s = np.sort(np.concatenate([s, 0.5 * (s[bad] + s[bad + 1])]))
        # keep the base node at the centre
        s = np.unique(np.concatenate([s, -s]))
    raise TrimFailed("could not resolve the pulled-back leaf below h_max")


def leaf(spec: MapSpec, x, kind: str, eps: float, h: Optional[float] = None, conj=None,
         n_check: int = 12) -> LeafSegment:
    """C^s_eps(x) or C^u_eps(x) as a polyline of diameter (close to) eps."""
    _plain(spec)
    if kind not in (STABLE, UNSTABLE):
        raise ValueError("kind must be 'stable' or 'unstable'")
    if not 0 < eps < 0.25:
        raise ValueError("eps must lie in (0, 1/4)")
    _need_conj(spec, conj)
    x = spaces.to_array(x).astype(float)
    h = h if h is not None else eps / 40.0
    if spec.t == 0.0:
        C = _linear_leaf(spec, x, kind, eps, h)
        if not _leaf_ok(C, spec, kind, eps, n_check):
            raise TrimFailed("linear leaf violates the iterate-diameter condition")
        return LeafSegment(x, kind, eps, C)
    # grow/shrink the linear length so the pulled-back leaf is as long as allowed
    lo, hi = 0.0, 2.0 * eps
    best = None
    for _ in range(14):
        L = 0.5 * (lo + hi)
        C = _pulled_back_leaf(spec, x, kind, L, h, conj)
        if _leaf_ok(C, spec, kind, eps, n_check):
            best, lo = C, L
        else:
            hi = L
    if best is None:
        raise TrimFailed("no admissible leaf length found")
    return LeafSegment(x, kind, eps, best)


# ---------------------------------------------------------------------------
# bracket


def _signs(spec: MapSpec):
    return (1.0, -1.0) if spec.chart == spaces.SPHERE else (1.0,)


def _linear_candidates(spec: MapSpec, X: np.ndarray, Y: np.ndarray, w: float):
    """Linear-chart intersections x + s v_u = sigma y + m + r v_s with |s|, |r| <= w.

    Returns arrays (Z, sigma, s, r, ok), each with a leading axis over signs.
    """
    ed = eigenstructure(spec)
    out = []
    for sg in _signs(spec):
        d = spaces.wrap(sg * Y - X)
        s = d @ ed.w_u
        r = -(d @ ed.w_s)
        Z = X + s[:, None] * ed.v_u[None, :]
        ok = (np.abs(s) <= w) & (np.abs(r) <= w)
        out.append((Z, sg, s, r, ok))
    return out


def _shoot(spec, X, Yt, Z0):
    ed = eigenstructure(spec)
    return _kernels.bracket_shoot(np.ascontiguousarray(X, dtype=float),
                                  np.ascontiguousarray(Yt, dtype=float),
                                  np.ascontiguousarray(Z0, dtype=float), float(spec.t),
                                  SHOOT_KMAX, SHOOT_GROW, np.array(ed.w_u), np.array(ed.w_s),
                                  SHOOT_K0)


def _accept(info: np.ndarray, eps: float):
    half = 0.5 * eps
    tail = 1e-6 * eps + 1e-14
    return ((info[:, 0] <= half) & (info[:, 1] <= half) & (info[:, 4] <= 1e-10)
            & (info[:, 2] <= tail) & (info[:, 3] <= tail))


def bracket_batch(spec: MapSpec, X, Y, eps: float, conj=None, verify: bool = True,
                  tol: float = DEDUP_TOL):
    """Brackets of many pairs at once.

    Returns (Z, count): Z has shape (n, 2, 2) holding up to two points per
    pair (lifts near x; NaN where absent), count the number found.
    """
    _plain(spec)
    _need_conj(spec, conj)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = len(X)
    cands = []
    if spec.t == 0.0:
        for Z, sg, s, r, ok in _linear_candidates(spec, X, Y, 0.5 * eps):
            cands.append((Z, ok, sg))
    else:
        from .conjugacy import h_full, invert_h
        HX = h_full(conj, X)
        HY = h_full(conj, Y)
        for Zl, sg, s, r, ok in _linear_candidates(spec, HX, HY, eps):
            Z = np.full((n, 2), np.nan)
            idx = np.flatnonzero(ok)
            if len(idx):
                Z0 = invert_h(conj, Zl[idx], check=False)
                Z0 = X[idx] + spaces.wrap(Z0 - X[idx])
                Yt = Z0 + spaces.wrap(sg * Y[idx] - Z0)
                Zp, info = _shoot(spec, X[idx], Yt, Z0)
                good = _accept(info, eps)
                Z[idx[good]] = Zp[good]
            cands.append((Z, ~np.isnan(Z[:, 0]), sg))
    out = np.full((n, 2, 2), np.nan)
    sig = np.ones((n, 2))
    count = np.zeros(n, dtype=np.int64)
    for Z, ok, sg in cands:
        for i in np.flatnonzero(ok):
            if count[i] and any(spaces.quotient_dist_arr(out[i, k], Z[i], spec.chart) <= tol
                                for k in range(count[i])):
                continue
            if count[i] >= 2:
                raise RuntimeError("more than two bracket points in one pair; eps too large")
            out[i, count[i]] = Z[i]
            sig[i, count[i]] = sg
            count[i] += 1
    if verify:
        for k in range(2):
            idx = np.flatnonzero(count > k)
            if len(idx):
                good = verify_membership(spec, out[idx, k], X[idx], Y[idx], eps,
                                         sigma_y=sig[idx, k])[0]
                bad = idx[~good]
                out[bad, k] = np.nan
        # compact so valid points come first
        for i in range(n):
            keep = [out[i, k].copy() for k in range(2) if not np.isnan(out[i, k, 0])]
            out[i] = np.nan
            for k, z in enumerate(keep):
                out[i, k] = z
            count[i] = len(keep)
    return out, count


def bracket(spec: MapSpec, x, y, eps: float, conj=None, tol: float = DEDUP_TOL) -> IntersectionSet:
    """C^u_eps(x) cap C^s_eps(y)."""
    X = spaces.to_array(x).astype(float)[None, :]
    Y = spaces.to_array(y).astype(float)[None, :]
    Z, count = bracket_batch(spec, X, Y, eps, conj, verify=True, tol=tol)
    if count[0] == 0:
        ed = eigenstructure(spec)
        diag = {"dist": float(spaces.quotient_dist_arr(X[0], Y[0], spec.chart)), "eps": eps}
        for sg in _signs(spec):
            d = spaces.wrap(sg * Y[0] - X[0])
            diag[f"sigma{int(sg):+d}"] = {"s": float(d @ ed.w_u), "r": float(-(d @ ed.w_s))}
        raise EmptyIntersection("leaves do not meet; d(x, y) exceeds delta(eps)", diag)
    return IntersectionSet(Z[0, :count[0]].copy(), tol, spec.chart)


# ---------------------------------------------------------------------------
# membership


def _direct_devs(spec, Z, P, n, forward):
    step = apply_lift_arr if forward else apply_inverse_lift_arr
    worst = spaces.quotient_dist_arr(Z, P, spec.chart)
    for _ in range(n):
        Z = spaces.reduce_arr(step(spec, Z))
        P = spaces.reduce_arr(step(spec, P))
        worst = np.maximum(worst, spaces.quotient_dist_arr(Z, P, spec.chart))
    return worst


def verify_membership(spec: MapSpec, Z, X, Y, eps: float, n_cap: int = 200, sigma_y=None):
    """Test z in C^u_eps(x) cap C^s_eps(y) row-wise.

    Two parts: the orbits are iterated directly for N_DIRECT steps and
    distances to the orbits of y (forward) and x (backward) compared with
    eps; beyond that, the shooting solve started at z must return z itself,
    with both half-orbit deviations <= eps up to its horizon and end-point
    deviations below 1e-6 eps, past which hyperbolic contraction takes over.
    ``sigma_y`` optionally names the lift (+-y) expected on the stable side.
    Returns (ok, detail) with ok a boolean array.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    # keep amplified rounding (~ 3^n 1e-16) a hundred times below eps
    nd = int(min(N_DIRECT, n_cap, max(0.0, math.log(0.01 * eps / 1e-16) / math.log(3.0))))
    fw = _direct_devs(spec, Z.copy(), Y.copy(), nd, True)
    bw = _direct_devs(spec, Z.copy(), X.copy(), nd, False)
    direct = (fw <= eps) & (bw <= eps)
    tail = 1e-6 * eps + 1e-14
    ok = np.zeros(len(Z), dtype=bool)
    info = np.full((len(Z), 5), np.inf)
    moved = np.full(len(Z), np.inf)
    # on the sphere the leaves may pass through either lift of x and of y;
    # the hinted lift of y (if any) goes first, other pairings only for rows
    # that have not passed yet
    combos = [(sx, sy) for sx in _signs(spec) for sy in _signs(spec)]
    hint = np.ones(len(Z)) if sigma_y is None else np.asarray(sigma_y, dtype=float)
    for c, (sx, sy) in enumerate([(1.0, None)] + combos):
        rows = np.flatnonzero(~ok & direct)
        if not len(rows):
            break
        SY = hint[rows] if sy is None else sy
        Zr = Z[rows]
        Xl = Zr + spaces.wrap(sx * X[rows] - Zr)
        Yl = Zr + spaces.wrap(np.reshape(SY, (-1, 1)) * Y[rows] - Zr)
        Zp, inf = _shoot(spec, Xl, Yl, Zr)
        mv = spaces.torus_dist_arr(Zp, Zr)
        good = ((mv <= 1e-9) & (inf[:, 0] <= eps) & (inf[:, 1] <= eps)
                & (inf[:, 2] <= tail) & (inf[:, 3] <= tail) & (inf[:, 4] <= 1e-10))
        info[rows[good]] = inf[good]
        moved[rows[good]] = mv[good]
        ok[rows[good]] = True
    ok &= direct
    return ok, {"forward": fw, "backward": bw, "shoot": info, "moved": moved}


# ---------------------------------------------------------------------------
# calibration


def _probe_pairs(probe_grid: int, delta: float, n_dir: int = 8):
    g = (np.arange(probe_grid) + 0.5) / probe_grid
    Xg, Yg = np.meshgrid(g, g, indexing="ij")
    X = np.stack([Xg.ravel(), Yg.ravel()], 1)
    th = np.pi * np.arange(n_dir) / n_dir * 2
    U = np.stack([np.cos(th), np.sin(th)], 1)
    XX = np.repeat(X, n_dir, axis=0)
    YY = XX + np.tile(U, (len(X), 1)) * (delta * (1 - 1e-9))
    return XX, YY


def calibrate(spec: MapSpec, eps: float, probe_grid: int = 10, conj=None, n_dir: int = 8,
              max_halvings: int = 30) -> dict:
    """Largest delta = eps / 2^k such that every probed pair at distance < delta brackets."""
    _plain(spec)
    delta = eps
    census = []
    for _ in range(max_halvings):
        X, Y = _probe_pairs(probe_grid, delta, n_dir)
        _, count = bracket_batch(spec, X, Y, eps, conj)
        fails = int((count == 0).sum())
        census.append({"delta": delta, "pairs": len(X), "failures": fails})
        if fails == 0:
            return {"delta": delta, "census": census, "probe_grid": probe_grid, "eps": eps}
        delta *= 0.5
    return {"delta": 0.0, "census": census, "probe_grid": probe_grid, "eps": eps}
