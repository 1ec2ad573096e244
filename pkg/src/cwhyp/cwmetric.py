"""Hyperbolic cw-metric: expansion times, rho, the chain infimum D, checks.

N(C) is the least |n| with diam(f^n C) > eps (n = 0, +-1, +-2, ...), and
rho(C) = lambda^N(C) with lambda = 2^(-1/m) for a Kato constant m.  D is the
infimum of sum rho(A_i) over chains covering C from p to q; here the
infimum runs over contiguous vertex-aligned decompositions of the arc, which
bounds the true D from above.

Most work happens in :func:`range_expansion_times`.  Given breakpoints
b_0 < ... < b_k on a polyline it returns N of every sub-arc [b_i, b_j] from
a single forward/backward sweep, reusing pairwise block maxima.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import _kernels, spaces
from .continua import (DEFAULT_MAX_VERTICES, MarkedContinuum, continuum_diam, make_segment,
                       step_refined)
from .systems import MapSpec, eigenstructure

TRIVIAL_DIAM = 1e-12
UNDET = -2
SAT = -1


class _Saturated:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "Saturated"

    def __reduce__(self):
        return (_Saturated, ())


Saturated = _Saturated()


class TrivialContinuum(ValueError):
    pass


class SaturatedSample(RuntimeError):
    pass


@dataclass(frozen=True)
class CwContext:
    eps: float
    m: int
    n_cap: int = 200
    h_frac: float = 1.0 / 40.0  # vertex spacing of seed continua, in units of eps

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if int(self.m) < 1:
            raise ValueError("m must be a positive integer")
        object.__setattr__(self, "m", int(self.m))
        if self.eps >= 0.25:
            raise ValueError("eps must stay below half the injectivity radius (1/4)")

    @property
    def lam(self) -> float:
        return 2.0 ** (-1.0 / self.m)

    lambda_ = lam

    @property
    def h(self) -> float:
        return self.eps * self.h_frac

    def to_dict(self) -> dict:
        return {"eps": self.eps, "m": self.m, "lambda": self.lam, "n_cap": self.n_cap}


# ---------------------------------------------------------------------------
# the range engine


def _measure(V, b, lo, hi, und, sphere):
    """diam > eps test for every undetermined range (i, j), lo <= i < j <= hi.

    Returns the matrix of range diameters (inf where not needed).
    """
    nb = hi - lo
    starts = np.ascontiguousarray(b[:nb], dtype=np.int64)
    ends = np.ascontiguousarray(b[1:nb + 1], dtype=np.int64)
    sub = und[lo:hi + 1, lo:hi + 1]
    active = np.zeros((nb, nb), dtype=np.bool_)
    for k in range(nb):
        active[k, k:] = sub[k, k + 1:]
    bm = _kernels.block_max(V, starts, ends, active, sphere)
    R = np.full((nb + 1, nb + 1), np.inf)
    for L in range(1, nb + 1):
        for i in range(0, nb + 1 - L):
            j = i + L
            if not sub[i, j]:
                continue
            r = bm[i, j - 1]
            if L > 1:
                r = max(r, R[i, j - 1], R[i + 1, j])
            R[i, j] = r
    return R


def range_expansion_times(C: MarkedContinuum, spec: MapSpec, eps: float, n_cap: int,
                          bp: Sequence[int], max_vertices: int = DEFAULT_MAX_VERTICES) -> np.ndarray:
    """N for every sub-arc between breakpoints; SAT (-1) when saturated.

    Entry [i, j] (i < j) refers to the sub-arc from vertex bp[i] to bp[j].
    Ranges whose diameter exceeds eps are dropped from the sweep; the
    polyline is cropped to the span of the undetermined ranges, so only
    short ranges drive the cost of long sweeps.
    """
    bp = np.asarray(sorted(set(int(i) for i in bp)), dtype=np.int64)
    nb = len(bp)
    N = np.full((nb, nb), UNDET, dtype=np.int64)
    if nb < 2:
        return N
    und = np.triu(np.ones((nb, nb), dtype=np.bool_), 1)
    sphere = C.chart == spaces.SPHERE
    h = C.h_max
    lo, hi = 0, nb - 1
    fw = [np.array(C.vertices[bp[0]:bp[-1] + 1]), bp - bp[0]]
    bw = [fw[0].copy(), fw[1].copy()]
    for n in range(n_cap + 1):
        for state in ((fw,) if n == 0 else (fw, bw)):
            R = _measure(state[0], state[1], lo, hi, und, sphere)
            hit = np.zeros_like(und)
            hit[lo:hi + 1, lo:hi + 1] = R > eps
            hit &= und
            N[hit] = n
            und &= ~hit
        if not und.any():
            return N
        if n == n_cap:
            break
        rows = np.flatnonzero(und.any(axis=1))
        cols = np.flatnonzero(und.any(axis=0))
        nlo, nhi = int(rows.min()), int(cols.max())
        for state in (fw, bw):
            V, b = state
            cut0 = b[nlo - lo]
            cut1 = b[nhi - lo]
            state[0] = V[cut0:cut1 + 1]
            state[1] = b[nlo - lo:nhi - lo + 1] - cut0
        lo, hi = nlo, nhi
        for state, forward in ((fw, True), (bw, False)):
            state[0], state[1] = step_refined(spec, state[0], h, state[1], forward, max_vertices)
    N[und] = SAT
    return N


# ---------------------------------------------------------------------------
# N, rho, D


def _whole(C: MarkedContinuum):
    return [0, len(C) - 1]


def expansion_time(C: MarkedContinuum, spec: MapSpec, ctx: CwContext):
    if len(C) < 2 or continuum_diam(C) < TRIVIAL_DIAM:
        raise TrivialContinuum("expansion time of a point is undefined")
    N = range_expansion_times(C, spec, ctx.eps, ctx.n_cap, _whole(C))[0, 1]
    return Saturated if N == SAT else int(N)


@dataclass(frozen=True)
class RhoValue:
    value: float
    N: Optional[int]
    saturated: bool


def rho_detail(C: MarkedContinuum, spec: MapSpec, ctx: CwContext) -> RhoValue:
    if len(C) < 2 or continuum_diam(C) < TRIVIAL_DIAM:
        return RhoValue(0.0, None, False)
    N = expansion_time(C, spec, ctx)
    if N is Saturated:
        return RhoValue(ctx.lam ** ctx.n_cap, None, True)
    return RhoValue(ctx.lam ** N, N, False)


def rho(C: MarkedContinuum, spec: MapSpec, ctx: CwContext) -> float:
    return rho_detail(C, spec, ctx).value


def rho_from_N(N: np.ndarray, ctx: CwContext) -> np.ndarray:
    N = np.asarray(N)
    out = ctx.lam ** np.where(N >= 0, N, ctx.n_cap).astype(float)
    return out


def breakpoints(C: MarkedContinuum, max_bp: int = 10, extra: Sequence[int] = ()) -> np.ndarray:
    """Vertex subsample used by chain_D: ends, marks, and evenly spaced fill."""
    V = len(C)
    must = {0, V - 1, C.mark_p, C.mark_q, *extra}
    k = max(0, max_bp - len(must))
    fill = np.round(np.linspace(0, V - 1, k + 2)).astype(int)[1:-1] if k else []
    return np.array(sorted(must.union(int(i) for i in fill)), dtype=np.int64)


def chain_from_rho(R: np.ndarray, ip: int, iq: int, max_pieces: int) -> float:
    """Minimal chain sum over contiguous decompositions.

    R[a, b] is rho of the piece between breakpoints a < b.  The first piece
    starts at breakpoint 0 and contains ip, the last ends at the final
    breakpoint and contains iq (ip <= iq).
    """
    nb = R.shape[0]
    last = nb - 1
    best = R[0, last]
    g = np.full(nb, np.inf)
    g[max(ip, 1):] = R[0, max(ip, 1):]
    g[last] = np.inf  # a one-piece chain is already counted
    for _ in range(2, max_pieces + 1):
        ends = [g[a] + R[a, last] for a in range(1, min(iq, last - 1) + 1)]
        if ends:
            best = min(best, min(ends))
        ng = np.full(nb, np.inf)
        for b in range(2, last):
            ng[b] = min(g[a] + R[a, b] for a in range(1, b))
        g = ng
    return float(best)


def chain_D(C: MarkedContinuum, spec: MapSpec, ctx: CwContext, max_pieces: int = 8,
            max_bp: int = 10, _N: Optional[np.ndarray] = None) -> float:
    if max_pieces < 1:
        raise ValueError("max_pieces must be >= 1")
    if len(C) < 2 or continuum_diam(C) < TRIVIAL_DIAM:
        return 0.0
    if C.mark_p > C.mark_q:
        C = MarkedContinuum(C.chart, C.vertices[::-1], len(C) - 1 - C.mark_p, len(C) - 1 - C.mark_q,
                            C.h_max)
    bp = breakpoints(C, max_bp)
    N = _N if _N is not None else range_expansion_times(C, spec, ctx.eps, ctx.n_cap, bp)
    R = rho_from_N(N, ctx)
    # pieces of zero length are points, with rho 0
    d = np.diff(C.vertices, axis=0)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(d[:, 0], d[:, 1]))])[bp]
    R[(arc[None, :] - arc[:, None]) < TRIVIAL_DIAM] = 0.0
    ip = int(np.searchsorted(bp, C.mark_p))
    iq = int(np.searchsorted(bp, C.mark_q))
    return chain_from_rho(R, ip, iq, max_pieces)


# ---------------------------------------------------------------------------
# Kato constant


def _seed_segments(spec: MapSpec, eps: float, samples: int, rng: np.random.Generator, h: float):
    """Seeds for the Kato constant.

    The first half sweeps directions on a uniform angle grid at length just
    above eps/2, where expansion is slowest; the rest are random (eigen,
    arbitrary, and on the sphere folded through a branch point).
    """
    ed = eigenstructure(spec)
    out = []
    n_grid = samples // 2
    for k in range(n_grid):
        th = np.pi * (k + 0.5) / n_grid
        c = rng.random(2)
        out.append(make_segment(c, _unit(th), 0.5 * eps * (1.0 + 1e-3 * rng.random()), h, spec.chart))
    for k in range(samples - n_grid):
        kind = k % 4 if spec.space == spaces.SPHERE else k % 3
        L = eps * rng.uniform(0.5, 1.0)
        if kind == 0:
            d = ed.v_u
        elif kind == 1:
            d = ed.v_s
        else:
            d = _unit(rng.uniform(0.0, np.pi))
        if kind == 3:
            # centred near a singular class and long enough that the folded
            # image keeps diameter > eps/2
            c = spaces.SINGULAR[rng.integers(4)] + rng.uniform(-0.25, 0.25, 2) * eps
            L = eps * rng.uniform(1.0, 2.0)
        else:
            c = rng.random(2)
        out.append(make_segment(c, d, L, h, spec.chart))
    return out


def estimate_m(spec: MapSpec, ctx_eps: float, samples: int = 400, rng_seed: int = 0,
               n_cap: int = 200, census: Optional[dict] = None) -> int:
    if samples < 100:
        raise ValueError("estimate_m needs at least 100 samples")
    rng = np.random.default_rng(rng_seed)
    h = ctx_eps / 40.0
    counts: Dict[int, int] = {}
    used = 0
    for C in _seed_segments(spec, ctx_eps, samples, rng, h):
        if continuum_diam(C) <= ctx_eps / 2:
            continue
        N = range_expansion_times(C, spec, ctx_eps, n_cap, _whole(C))[0, 1]
        if N == SAT:
            raise SaturatedSample("a seed continuum never exceeded eps; eps is too large")
        counts[int(N)] = counts.get(int(N), 0) + 1
        used += 1
    if census is not None:
        census.update({"used": used, "histogram": {str(k): v for k, v in sorted(counts.items())}})
    return max(1, max(counts) if counts else 1)


def make_context(spec: MapSpec, eps: float = 0.1, samples: int = 400, rng_seed: int = 0,
                 n_cap: int = 200) -> CwContext:
    return CwContext(eps, estimate_m(spec, eps, samples, rng_seed, n_cap), n_cap)


# ---------------------------------------------------------------------------
# compatibility moduli


@dataclass
class Moduli:
    """Empirical conversions between diam and D from a sample of continua.

    gamma_a(d): diam(C) < gamma_a(d)  implies  D(C) < d
    gamma_b(d): D(C) < gamma_b(d)     implies  diam(C) < d
    Both use rho as the bound on D (D <= rho <= 4D).
    """
    diam: np.ndarray
    rho: np.ndarray
    safety: float = 0.5
    cap: float = 1.0

    def gamma_a(self, d: float) -> float:
        sel = self.rho >= d
        if not sel.any():
            return self.cap
        return self.safety * float(self.diam[sel].min())

    def gamma_b(self, d: float) -> float:
        sel = self.diam >= d
        if not sel.any():
            return self.cap
        return self.safety * float((self.rho[sel] / 4.0).min())


def compatibility_moduli(spec: MapSpec, ctx: CwContext, samples: int = 300, rng_seed: int = 0,
                         min_len: float = 1e-12) -> Moduli:
    rng = np.random.default_rng(rng_seed)
    ed = eigenstructure(spec)
    diams = []
    rhos = []
    for k in range(samples):
        L = float(np.exp(rng.uniform(np.log(min_len), np.log(ctx.eps))))
        kind = k % 3
        d = ed.v_u if kind == 0 else ed.v_s if kind == 1 else _unit(rng.uniform(0, np.pi))
        C = make_segment(rng.random(2), d, L, max(L / 4, 1e-15), spec.chart)
        C = MarkedContinuum(C.chart, C.vertices, C.mark_p, C.mark_q, ctx.h)
        diams.append(continuum_diam(C))
        rhos.append(rho(C, spec, ctx))
    return Moduli(np.array(diams), np.array(rhos), cap=ctx.eps)


def _unit(th: float) -> np.ndarray:
    return np.array([np.cos(th), np.sin(th)])


# ---------------------------------------------------------------------------
# theorem checker


def _random_segment(spec, ctx, rng, lmin, lmax, direction=None):
    L = float(np.exp(rng.uniform(np.log(lmin), np.log(lmax))))
    d = direction if direction is not None else _unit(rng.uniform(0, np.pi))
    if spec.space == spaces.SPHERE and rng.random() < 0.25:
        c = spaces.SINGULAR[rng.integers(4)] + rng.uniform(-0.5, 0.5, 2) * L
    else:
        c = rng.random(2)
    return make_segment(c, d, L, min(ctx.h, L / 2), spec.chart)


def check_cw_metric_theorem(spec: MapSpec, ctx: CwContext, trials: int = 1000, rng_seed: int = 0,
                            compat_trials: Optional[int] = None) -> dict:
    """Sampled verification of the cw-metric inequalities; violations are counted, not raised."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    ed = eigenstructure(spec)
    lam = ctx.lam
    tol = 1e-12
    v = {"rho_le_4D": 0, "D_le_rho": 0, "hyperbolicity": 0, "expansion_shift": 0, "frink": 0,
         "two_piece": 0, "monotone": 0, "symmetry": 0, "compat_a": 0, "compat_b": 0}
    saturated = 0
    worst = {"rho_over_4D": 0.0, "hyp_ratio": 0.0, "frink_ratio": 0.0}

    # (i) rho <= 4 D and D <= rho on random continua with random marks
    for _ in range(trials):
        C = _random_segment(spec, ctx, rng, ctx.eps / 50, 2 * ctx.eps)
        p, q = sorted(rng.integers(0, len(C), 2)) if rng.random() < 0.5 else (0, len(C) - 1)
        C = C.with_marks(int(p), int(q))
        bp = breakpoints(C)
        N = range_expansion_times(C, spec, ctx.eps, ctx.n_cap, bp)
        if (N[np.triu_indices(len(bp), 1)] == SAT).any():
            saturated += 1
            continue
        r = lam ** N[0, len(bp) - 1]
        D = chain_D(C, spec, ctx, _N=N)
        if r > 4 * D + tol:
            v["rho_le_4D"] += 1
        if D > r + tol:
            v["D_le_rho"] += 1
        worst["rho_over_4D"] = max(worst["rho_over_4D"], float(r / (4 * D)) if D > 0 else math.inf)
        if rng.random() < 0.1:
            if abs(chain_D(C.swapped(), spec, ctx) - D) > tol:
                v["symmetry"] += 1

    # (ii) D(f^n C) <= 4 lam^n D(C) for stable continua, n <= 2m
    from .continua import iterate_continuum
    for _ in range(trials):
        C = _random_segment(spec, ctx, rng, ctx.eps / 50, ctx.eps, direction=ed.v_s)
        D0 = chain_D(C, spec, ctx)
        N0 = expansion_time(C, spec, ctx)
        if N0 is Saturated:
            saturated += 1
            continue
        Cn = C
        for n in range(1, 2 * ctx.m + 1):
            Cn = iterate_continuum(Cn, spec, 1)
            Dn = chain_D(Cn, spec, ctx)
            if Dn > 4 * lam ** n * D0 + tol:
                v["hyperbolicity"] += 1
            worst["hyp_ratio"] = max(worst["hyp_ratio"], Dn / (4 * lam ** n * D0))
            Nn = expansion_time(Cn, spec, ctx)
            if Nn is Saturated or Nn != n + N0:
                v["expansion_shift"] += 1

    # (iii) Frink chain inequality, two-piece form, monotonicity
    for _ in range(trials):
        C = _random_segment(spec, ctx, rng, ctx.eps / 20, 2 * ctx.eps)
        V = len(C)
        if V < 3:
            continue
        k = int(rng.integers(2, min(6, V - 1) + 1))
        cuts = np.sort(rng.choice(np.arange(1, V - 1), size=k - 1, replace=False))
        bp = np.concatenate([[0], cuts, [V - 1]])
        N = range_expansion_times(C, spec, ctx.eps, ctx.n_cap, bp)
        if (N[np.triu_indices(len(bp), 1)] == SAT).any():
            saturated += 1
            continue
        R = rho_from_N(N, ctx)
        pieces = np.array([R[i, i + 1] for i in range(k)])
        bound = 2 * pieces[0] + 2 * pieces[-1] + 4 * pieces[1:-1].sum()
        whole = R[0, k]
        if whole > bound + tol:
            v["frink"] += 1
        worst["frink_ratio"] = max(worst["frink_ratio"], whole / bound)
        for i in range(k - 1):
            if R[i, i + 2] > 2 * max(R[i, i + 1], R[i + 1, i + 2]) + tol:
                v["two_piece"] += 1
        for j in range(1, k):
            if R[0, j] > R[0, j + 1] + tol:
                v["monotone"] += 1

    # compatibility, using moduli from an independent sample
    nc = compat_trials if compat_trials is not None else max(50, trials // 5)
    mod = compatibility_moduli(spec, ctx, samples=max(100, nc), rng_seed=rng_seed + 1)
    levels = ctx.eps * np.logspace(-6, 0, 7)
    for _ in range(nc):
        L = float(np.exp(rng.uniform(np.log(1e-9), np.log(ctx.eps))))
        C = make_segment(rng.random(2), _unit(rng.uniform(0, np.pi)), L, ctx.h, spec.chart)
        diam = continuum_diam(C)
        D = chain_D(C, spec, ctx)
        for d in levels:
            if diam < mod.gamma_a(d) and not D < d:
                v["compat_a"] += 1
            if D < mod.gamma_b(d) and not diam < d:
                v["compat_b"] += 1

    return {
        "spec": spec.to_dict(),
        "m": ctx.m,
        "lambda": lam,
        "eps": ctx.eps,
        "violations": {
            "hyperbolicity": v["hyperbolicity"] + v["expansion_shift"],
            "frink": v["frink"] + v["two_piece"] + v["monotone"],
            "compatibility": v["compat_a"] + v["compat_b"],
            "rho_le_4D": v["rho_le_4D"] + v["D_le_rho"] + v["symmetry"],
        },
        "detail": v,
        "worst": {k: float(x) for k, x in worst.items()},
        "samples": {"trials": trials, "compat": nc, "saturated": saturated},
        "seed": rng_seed,
    }
