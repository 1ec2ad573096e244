"""Pseudo-orbits, constructive block shadowing, and the periodic census.

The shadowing construction works backwards over blocks of n steps.  The
last point is kept, x'_{Rn} = x_{Rn}; then for r = R, ..., 1

    y'    in  C^u_eps(f^n x_{(r-1)n})  cap  C^s_eps(x'_{rn})
    x'_{(r-1)n} = f^-n(y')

and z = x'_0.  Deviations d(f^k z, x_k) cannot be computed by iterating z
itself (rounding grows like mu_u^k), so the orbit of z is followed block by
block and re-anchored on W^s(x'_{rn}) after every block, which is where the
exact orbit lies.  :func:`verify_shadowing` checks a claimed z without
using the construction: it solves for the true orbit through (the stable
coordinate of) z next to the whole pseudo-orbit by multiple shooting.
"""
from __future__ import annotations

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels, spaces
from .cwmetric import CwContext, Moduli, compatibility_moduli
from .foliation import bracket_batch, calibrate
from .systems import (MapSpec, apply_inverse_lift_arr, apply_lift_arr, eigenstructure,
                      iterate_arr, jacobian_arr, lipschitz)

log = logging.getLogger(__name__)

UNDERFLOW = 1e-10
FLOOR_ABS = 1e-12
START_TOL = 1e-9
DIRECT_HORIZON = 25  # 2.7^25 * 1e-16 < 1e-5
ROUNDING = 1e-15  # per-step floating point drift, unit-size coordinates


class LadderError(RuntimeError):
    pass


class ShadowingFailure(RuntimeError):
    def __init__(self, msg, run=None, block=None):
        super().__init__(msg)
        self.run = run
        self.block = block


# ---------------------------------------------------------------------------
# pseudo-orbits


@dataclass(eq=False)
class PseudoOrbit:
    spec: MapSpec
    points: np.ndarray
    delta: float
    decaying: bool
    step_errors: np.ndarray
    delta_nominal: float = 0.0
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.points)

    def to_json(self) -> dict:
        return {"spec": self.spec.to_dict(), "points": self.points.tolist(), "delta": self.delta,
                "decaying": self.decaying, "delta_nominal": self.delta_nominal, "seed": self.seed}


def step_errors(spec: MapSpec, P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return spaces.quotient_dist_arr(apply_lift_arr(spec, P[:-1]), P[1:], spec.chart)


def gen_pseudo_orbit(spec: MapSpec, x0, n: int, delta: float, decaying: bool = False,
                     rng_seed: int = 0) -> PseudoOrbit:
    """n points; x_{k+1} = f(x_k) + noise, noise uniform in the disk of radius delta_k."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if spec.space == spaces.PRODUCT:
        raise ValueError("pseudo-orbits are generated per factor")
    rng = np.random.default_rng(rng_seed)
    P = np.empty((n, 2))
    P[0] = spaces.project_arr(spaces.to_array(x0).astype(float), spec.chart)
    rad = np.sqrt(rng.random(n - 1))
    th = rng.uniform(0.0, 2 * np.pi, n - 1)
    scale = delta * (2.0 ** (-np.arange(n - 1) / 20.0) if decaying else np.ones(n - 1))
    noise = (scale * rad)[:, None] * np.stack([np.cos(th), np.sin(th)], 1)
    for k in range(n - 1):
        P[k + 1] = spaces.project_arr(apply_lift_arr(spec, P[k]) + noise[k], spec.chart)
    se = step_errors(spec, P) if n > 1 else np.zeros(0)
    return PseudoOrbit(spec, P, float(se.max()) if len(se) else 0.0, decaying, se, float(delta),
                       rng_seed)


# ---------------------------------------------------------------------------
# the constant ladder


@dataclass(frozen=True)
class ConstantLadder:
    beta: float
    c: float
    lam: float
    L: float
    eps_prime: float
    eta: float
    xi: float
    eps: float
    delta: float
    gamma: float
    n_block: int
    alpha: float
    underflow: tuple = ()
    checks: tuple = ()

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("beta", "c", "lam", "L", "eps_prime", "eta", "xi", "eps",
                                           "delta", "gamma", "n_block", "alpha")}
        d["underflow"] = list(self.underflow)
        d["checks"] = [{"name": n, "lhs": a, "rhs": b, "pass": ok} for n, a, b, ok in self.checks]
        return d

    def operational(self, po_delta: float):
        """(leaf eps, block length, certified) used for a pseudo-orbit of the given delta.

        Within the certified range (po_delta <= alpha, no constant underflowed)
        these are the ladder's eps and n_block.  Otherwise the leaves are
        taken at eps' and the block is the longest one (<= n_block) along
        which the accumulated drift stays below eps'/4; the drift counts
        rounding as noise of size ROUNDING per step, so exact orbits still
        get a finite block.
        """
        if po_delta <= self.alpha and not self.underflow:
            return self.eps, self.n_block, True
        d = max(po_delta, ROUNDING)
        b = 1
        while b < self.n_block and d * _geom(self.L, b + 1) < self.eps_prime / 4:
            b += 1
        return self.eps_prime, b, False


def _geom(L: float, n: int) -> float:
    return float(sum(L ** i for i in range(n)))


def derive_ladder(beta: float, ctx: CwContext, spec: MapSpec, conj=None, moduli: Optional[Moduli] = None,
                  c: Optional[float] = None, strict: bool = False, probe_grid: int = 6,
                  rng_seed: int = 0) -> ConstantLadder:
    """The shadowing constants in proof order, with empirical moduli.

    gamma_a / gamma_b of the moduli stand in for the diam <-> D
    compatibility, calibrate() for the local product delta.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    c = ctx.eps if c is None else c
    lam = ctx.lam
    L = lipschitz(spec)
    mod = moduli if moduli is not None else compatibility_moduli(spec, ctx, rng_seed=rng_seed)
    eps_p = min(beta / 3.0, c / 3.0)
    eta = min(mod.gamma_b(eps_p), 0.99 * eps_p)      # D < eta  =>  diam < eps'
    xi = 0.9 * eta * (1.0 - lam) / 4.0               # 4 xi / (1 - lam) < eta
    eps = min(mod.gamma_a(xi) / 2.0, 0.99 * xi)      # diam < 2 eps  =>  D < xi
    cal = calibrate(spec, eps, probe_grid=probe_grid, conj=conj)["delta"]
    delta = min(cal, 0.99 * eps)
    gamma = min(mod.gamma_b(delta / 2.0), 0.99 * delta / 2.0)   # D < gamma => diam < delta/2
    n = 1
    while 4.0 * lam ** n * xi >= gamma:
        n += 1
        if n > 100000:
            raise LadderError("n_block does not exist below 1e5")
    alpha = min(0.99 * (delta / 2.0) / _geom(L, n), 0.99 * gamma)
    vals = {"eps_prime": eps_p, "eta": eta, "xi": xi, "eps": eps, "delta": delta, "gamma": gamma,
            "alpha": alpha}
    under = tuple(k for k, v in vals.items() if v < UNDERFLOW)
    checks = (
        ("eps_prime", eps_p, min(beta / 3, c / 3), eps_p == min(beta / 3, c / 3)),
        ("xi_4_over_1mlam_lt_eta", 4 * xi / (1 - lam), eta, 4 * xi / (1 - lam) < eta),
        ("eta_lt_eps_prime", eta, eps_p, eta < eps_p),
        ("eps_lt_xi", eps, xi, eps < xi),
        ("delta_lt_eps", delta, eps, delta < eps),
        ("gamma_lt_delta_half", gamma, delta / 2, gamma < delta / 2),
        ("4_lam_n_xi_lt_gamma", 4 * lam ** n * xi, gamma, 4 * lam ** n * xi < gamma),
        ("alpha_lt_gamma", alpha, gamma, alpha < gamma),
        ("alpha_positive", alpha, 0.0, alpha > 0),
    )
    bad = [n_ for n_, _, _, ok in checks if not ok]
    if bad:
        raise LadderError(f"ladder inequalities failed: {bad}")
    if under:
        msg = f"ladder constants below {UNDERFLOW:g}: {list(under)}"
        if strict:
            raise LadderError(msg)
        log.info(msg)
    return ConstantLadder(beta, c, lam, L, eps_p, eta, xi, eps, delta, gamma, n, alpha, under, checks)


# ---------------------------------------------------------------------------
# constructive shadowing


@dataclass(eq=False)
class ShadowResult:
    z: np.ndarray
    deviations: np.ndarray
    max_dev: float
    limit_ok: bool
    branch_hist: Dict[int, int] = field(default_factory=dict)
    certified: bool = False
    block: int = 0
    leaf_eps: float = 0.0
    anchor_jump: float = 0.0

    def to_json(self) -> dict:
        return {"z": list(map(float, self.z)), "max_dev": self.max_dev, "limit_ok": self.limit_ok,
                "branch_hist": {str(k): v for k, v in sorted(self.branch_hist.items())},
                "certified": self.certified, "block": self.block, "leaf_eps": self.leaf_eps,
                "anchor_jump": self.anchor_jump, "deviations": self.deviations.tolist()}


def _iterate(spec, P, n):
    return iterate_arr(spec, P, n)


def _pad(spec, P, block):
    n = len(P)
    R = max(1, math.ceil((n - 1) / block))
    M = R * block + 1
    if M == n:
        return P, R
    out = np.empty((M, 2))
    out[:n] = P
    for k in range(n, M):
        out[k] = spaces.project_arr(apply_lift_arr(spec, out[k - 1]), spec.chart)
    return out, R


def shadow_constructive_batch(pos: Sequence[PseudoOrbit], ladder: ConstantLadder, conj=None,
                              on_failure: str = "raise") -> List[ShadowResult]:
    """Constructive shadows of several pseudo-orbits of equal length, in lockstep."""
    if not pos:
        return []
    spec = pos[0].spec
    n = len(pos[0])
    if any(len(p) != n or p.spec != spec for p in pos):
        raise ValueError("batched pseudo-orbits must share spec and length")
    po_delta = max(p.delta for p in pos)
    eps, b, certified = ladder.operational(po_delta)
    padded = [_pad(spec, p.points, b) for p in pos]
    R = padded[0][1]
    X = np.stack([q[0] for q in padded])            # (runs, R*b+1, 2)
    runs = len(pos)
    Xp = np.empty((runs, R + 1, 2))                  # x'_{rb}
    Yp = np.empty((runs, R + 1, 2))                  # y'_{rb}
    Xp[:, R] = X[:, R * b]
    hist: List[Dict[int, int]] = [dict() for _ in range(runs)]
    failed = np.zeros(runs, dtype=bool)
    for r in range(R, 0, -1):
        base = X[:, (r - 1) * b]
        fx = _iterate(spec, base, b)
        Z, cnt = bracket_batch(spec, fx, Xp[:, r], eps, conj)
        for i in np.flatnonzero(cnt == 0):
            if on_failure == "raise":
                raise ShadowingFailure(f"bracket failed in run {i} at block {r}", run=int(i), block=r)
            failed[i] = True
        best = np.full((runs, 2), np.nan)
        bestd = np.full(runs, np.inf)
        bestz = np.full((runs, 2), np.nan)
        for k in range(2):
            rows = np.flatnonzero(cnt > k)
            if not len(rows):
                continue
            back = _iterate(spec, Z[rows, k], -b)
            d = spaces.quotient_dist_arr(back, base[rows], spec.chart)
            take = d < bestd[rows]
            best[rows[take]] = back[take]
            bestz[rows[take]] = Z[rows[take], k]
            bestd[rows[take]] = d[take]
        for i in range(runs):
            hist[i][int(cnt[i])] = hist[i].get(int(cnt[i]), 0) + 1
        # a failed run keeps its pseudo-orbit point so the lockstep continues
        best[failed] = base[failed]
        bestz[failed] = fx[failed]
        Xp[:, r - 1] = best
        Yp[:, r] = bestz
    devs, jumps = _anchored_deviations(spec, X, Xp, b, R, eps, conj)
    out = []
    for i, p in enumerate(pos):
        dv = devs[i, :n]
        res = ShadowResult(spaces.project_arr(Xp[i, 0], spec.chart), dv, float(dv.max()),
                           bool(limit_criterion(dv, p.step_errors)), hist[i], certified, b, eps,
                           float(jumps[i]))
        if failed[i]:
            res.max_dev = math.inf
        out.append(res)
    return out


def _anchored_deviations(spec, X, Xp, b, R, eps, conj):
    runs, M, _ = X.shape
    dev = np.empty((runs, M))
    jump = np.zeros(runs)
    a = Xp[:, 0].copy()
    dev[:, 0] = spaces.quotient_dist_arr(a, X[:, 0], spec.chart)
    for r in range(1, R + 1):
        p = a
        for j in range(1, b + 1):
            p = spaces.project_arr(apply_lift_arr(spec, p), spec.chart)
            if j < b:
                dev[:, (r - 1) * b + j] = spaces.quotient_dist_arr(p, X[:, (r - 1) * b + j], spec.chart)
        # the exact orbit point lies on W^s(x'_{rb}); restore it from the rounded p
        Z, cnt = bracket_batch(spec, p, Xp[:, r], min(2 * eps, 0.2), conj)
        a = p.copy()
        bestd = np.full(runs, np.inf)
        for k in range(2):
            rows = np.flatnonzero(cnt > k)
            d = spaces.quotient_dist_arr(Z[rows, k], p[rows], spec.chart)
            take = d < bestd[rows]
            a[rows[take]] = spaces.project_arr(Z[rows[take], k], spec.chart)
            bestd[rows[take]] = d[take]
        ok = np.isfinite(bestd)
        jump[ok] = np.maximum(jump[ok], bestd[ok])
        jump[~ok] = np.inf
        dev[:, r * b] = spaces.quotient_dist_arr(a, X[:, r * b], spec.chart)
    return dev, jump


def shadow_constructive(po: PseudoOrbit, spec: Optional[MapSpec] = None,
                        ladder: Optional[ConstantLadder] = None, conj=None) -> ShadowResult:
    if spec is not None and spec != po.spec:
        raise ValueError("spec does not match the pseudo-orbit")
    if ladder is None:
        raise ValueError("a ConstantLadder is required")
    return shadow_constructive_batch([po], ladder, conj)[0]


# ---------------------------------------------------------------------------
# linear oracle


def _consistent_lifts(spec: MapSpec, P: np.ndarray, first: Optional[np.ndarray] = None):
    """Representatives A_k of the classes P_k (reduced) with A_{k+1} near f(A_k) mod Z^2."""
    A = np.empty_like(P)
    A[0] = P[0] if first is None else first
    signs = (1.0, -1.0) if spec.chart == spaces.SPHERE else (1.0,)
    for k in range(len(P) - 1):
        fa = apply_lift_arr(spec, A[k])
        best = None
        for sg in signs:
            c = spaces.reduce_arr(sg * P[k + 1])
            d = spaces.torus_dist_arr(c, fa)
            if best is None or d < best[0]:
                best = (d, c)
        A[k + 1] = best[1]
    return A


def shadow_linear_oracle(po: PseudoOrbit) -> np.ndarray:
    """Bounded solution of the linear error recursion, started on W^u(x_0)."""
    spec = po.spec
    if spec.t != 0.0:
        raise ValueError("the closed-form oracle needs a linear spec (t = 0)")
    ed = eigenstructure(spec)
    A = _consistent_lifts(spec, po.points)
    e = spaces.wrap(A[1:] - A[:-1] @ spec.A.T)
    eu = e @ ed.w_u
    w = np.sum(ed.mu_u ** -(np.arange(len(eu)) + 1.0) * eu)
    return spaces.project_arr(po.points[0] + w * ed.v_u, spec.chart)


# ---------------------------------------------------------------------------
# verification


def true_orbit_near(po: PseudoOrbit, z) -> dict:
    """Multiple-shooting orbit p_k = f^k(p_0) with p_0 on W^u of z's stable coordinate.

    The sequence (z, x_1, ..., x_{N-1}) is the base; the stable part of
    p_0 - z and the unstable part of p_{N-1} - x_{N-1} are pinned to 0.
    """
    spec = po.spec
    ed = eigenstructure(spec)
    z = spaces.project_arr(spaces.to_array(z).astype(float), spec.chart)
    first = spaces.reduce_arr(z.copy())
    P = po.points.copy()
    P[0] = first
    A = _consistent_lifts(spec, P, first)
    D, merit = _kernels.orbit_shoot(np.ascontiguousarray(A), float(spec.t), np.array(ed.w_u),
                                    np.array(ed.w_s))
    orbit = A + D
    dev = spaces.quotient_dist_arr(orbit, po.points, spec.chart)
    return {"deviations": dev, "start_offset": float(np.hypot(*D[0])), "merit": float(merit),
            "orbit": orbit}


def _direct_deviations(po: PseudoOrbit, z, n: int) -> np.ndarray:
    spec = po.spec
    n = min(n, len(po))
    O = iterate_arr(spec, spaces.to_array(z).astype(float), 0)
    dev = np.empty(n)
    for k in range(n):
        dev[k] = spaces.quotient_dist_arr(O, po.points[k], spec.chart)
        O = spaces.project_arr(apply_lift_arr(spec, O), spec.chart)
    return dev


def verify_shadowing(po: PseudoOrbit, z, eps: float, n_direct: int = DIRECT_HORIZON):
    """(ok, max_dev, detail); ok needs a true orbit starting within 1e-9 of z.

    The orbit of z itself is also iterated for ``n_direct`` steps (rounding
    stays far below eps there); ``detail["first_exceed"]`` is the first step
    whose deviation passes eps, or None.
    """
    direct = _direct_deviations(po, z, n_direct)
    over = np.flatnonzero(direct > eps)
    first = int(over[0]) if len(over) else None
    if len(po) == 1:
        d = float(direct[0])
        return d <= eps, d, {"start_offset": 0.0, "merit": 0.0, "deviations": direct,
                             "first_exceed": first, "orbit": po.points.copy()}
    info = true_orbit_near(po, z)
    info["first_exceed"] = first
    ok = info["merit"] <= 1e-10 and info["start_offset"] <= START_TOL and first is None
    md = float(info["deviations"].max())
    if info["start_offset"] > START_TOL or first is not None:
        # the solved orbit is not z's own; report what z does
        md = max(md, float(direct.max()))
    ok = ok and md <= eps
    return bool(ok), md, info


def limit_criterion(dev: np.ndarray, step_err: np.ndarray) -> bool:
    """Deviations decay: last-10% max below the middle-10% max and near the noise floor."""
    n = len(dev)
    if n < 20:
        return False
    tail = dev[int(0.9 * n):].max()
    mid = dev[int(0.45 * n):int(0.55 * n) + 1].max()
    se = step_err[int(0.8 * len(step_err)):] if len(step_err) else np.zeros(1)
    floor = max(FLOOR_ABS, 4.0 * float(se.max()))
    return bool(tail < mid and tail <= 2.0 * floor)


def verify_limit_shadowing(po: PseudoOrbit, z) -> bool:
    info = true_orbit_near(po, z)
    if info["start_offset"] > START_TOL or info["merit"] > 1e-10:
        return False
    return limit_criterion(info["deviations"], po.step_errors)


# ---------------------------------------------------------------------------
# periodic census


@dataclass(eq=False)
class Census:
    spec: MapSpec
    k: int
    points: np.ndarray
    grid: int
    skipped: int
    residual: float

    @property
    def count(self) -> int:
        return len(self.points)

    def to_json(self) -> dict:
        return {"k": self.k, "count": self.count, "grid": self.grid, "skipped": self.skipped,
                "residual": self.residual, "points": self.points.tolist()}


def _fk_and_jac(spec, P, k):
    J = np.broadcast_to(np.eye(2), P.shape[:-1] + (2, 2)).copy()
    Q = P.copy()
    for _ in range(k):
        J = jacobian_arr(spec, Q) @ J
        Q = apply_lift_arr(spec, Q)
    return Q, J


def periodic_census(spec: MapSpec, k: int, newton_grid: Optional[int] = None, tol: Optional[float] = None,
                    maxit: int = 100, res_tol: float = 1e-12) -> Census:
    """Points with f^k(x) = x (torus) or f^k(x) = +-x (sphere) mod Z^2.

    Damped Newton from a uniform seed grid; converged roots are merged
    within ``tol`` (quotient metric).  The family's origin is a degenerate
    root for t > 0, where Newton converges only linearly, hence the larger
    default merge radius there.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if spec.space == spaces.PRODUCT:
        raise ValueError("census is per factor")
    ed = eigenstructure(spec)
    G = newton_grid if newton_grid is not None else int(math.ceil(1.5 * ed.mu_u ** k + 16))
    tol = tol if tol is not None else (1e-7 if spec.t == 0.0 else 1e-3)
    g = (np.arange(G) + 0.5) / G
    S = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    roots = []
    resid = []
    skipped = 0
    signs = (1.0, -1.0) if spec.chart == spaces.SPHERE else (1.0,)
    for sg in signs:
        X = S.copy()
        for _ in range(maxit):
            Q, J = _fk_and_jac(spec, X, k)
            F = Q - sg * X
            r = F - np.round(F)
            Jm = J - sg * np.eye(2)
            det = Jm[:, 0, 0] * Jm[:, 1, 1] - Jm[:, 0, 1] * Jm[:, 1, 0]
            det = np.where(np.abs(det) < 1e-300, 1e-300, det)
            dx = (Jm[:, 1, 1] * r[:, 0] - Jm[:, 0, 1] * r[:, 1]) / det
            dy = (-Jm[:, 1, 0] * r[:, 0] + Jm[:, 0, 0] * r[:, 1]) / det
            step = np.stack([dx, dy], 1)
            # damping keeps the step inside one fundamental cell
            nrm = np.hypot(dx, dy)
            step *= np.minimum(1.0, 0.1 / np.maximum(nrm, 1e-300))[:, None]
            X = spaces.reduce_arr(X - step)
        Q, _ = _fk_and_jac(spec, X, k)
        F = Q - sg * X
        r = np.abs(F - np.round(F)).max(axis=1)
        good = r <= res_tol
        skipped += int((~good).sum())
        roots.append(X[good])
        resid.append(r[good])
    R = np.concatenate(roots) if roots else np.zeros((0, 2))
    res = np.concatenate(resid) if resid else np.zeros(0)
    if not len(R):
        return Census(spec, k, R, G, skipped, 0.0)
    R = spaces.project_arr(R, spec.chart)
    tree = cKDTree(R % 1.0, boxsize=1.0)
    order = np.argsort(res, kind="stable")
    taken = np.zeros(len(R), dtype=bool)
    reps = []
    # greedy: the best-converged unassigned root absorbs everything within tol
    for i in order:
        if taken[i]:
            continue
        reps.append(i)
        near = tree.query_ball_point(R[i], tol)
        if spec.chart == spaces.SPHERE:
            near = near + tree.query_ball_point(spaces.reduce_arr(-R[i]) % 1.0, tol)
        taken[near] = True
        taken[i] = True
    reps = np.array(sorted(reps))
    P = spaces.project_arr(R[reps], spec.chart)
    order = np.lexsort((P[:, 1], P[:, 0]))
    return Census(spec, k, P[order], G, skipped, float(res[reps].max()))
