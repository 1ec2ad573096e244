"""Hot loops, compiled with numba when available.

Every kernel exists twice: a ``*_nb`` version written as explicit loops and
jitted with numba, and a ``*_np`` version written with vectorised numpy.
The public name (without suffix) is bound to one of them at import time.
Set ``CWHYP_NO_NUMBA=1`` to force the numpy versions.

All kernels work on the standard family

    f_t(x, y) = (2x + y - s, x + y - s),   s = t sin(2 pi x) / (2 pi)

where a kernel needs the map, and on the flat (or antipodal quotient)
metric of the unit torus where it needs distances.
"""
import os

import numpy as np

TWO_PI = 2.0 * np.pi

_disabled = os.environ.get("CWHYP_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _disabled:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on the environment
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def deco(fn):
            return fn

        return deco


_JIT = dict(cache=True, nogil=True)

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# distances


@njit(**_JIT)
def _tdist_nb(ax, ay, bx, by):
    dx = ax - bx
    dy = ay - by
    dx -= np.floor(dx + 0.5)
    dy -= np.floor(dy + 0.5)
    return np.sqrt(dx * dx + dy * dy)


@njit(**_JIT)
def _qdist_nb(ax, ay, bx, by, sphere):
    d = _tdist_nb(ax, ay, bx, by)
    if sphere:
        d2 = _tdist_nb(ax, ay, -bx, -by)
        if d2 < d:
            d = d2
    return d


def _tdist_np(a, b):
    d = a - b
    d -= np.floor(d + 0.5)
    return np.hypot(d[..., 0], d[..., 1])


def _qdist_np(a, b, sphere):
    d = _tdist_np(a, b)
    if sphere:
        d = np.minimum(d, _tdist_np(a, -b))
    return d


@njit(**_JIT)
def max_pairwise_nb(P, sphere):
    n = P.shape[0]
    best = 0.0
    for i in range(n):
        ax = P[i, 0]
        ay = P[i, 1]
        for j in range(i + 1, n):
            d = _qdist_nb(ax, ay, P[j, 0], P[j, 1], sphere)
            if d > best:
                best = d
    return best


def max_pairwise_np(P, sphere, chunk=512):
    n = P.shape[0]
    best = 0.0
    for i0 in range(0, n, chunk):
        blk = P[i0:i0 + chunk]
        d = _qdist_np(blk[:, None, :], P[None, i0:, :], sphere)
        if d.size:
            best = max(best, float(d.max()))
    return best


@njit(**_JIT)
def block_max_nb(P, starts, ends, active, sphere):
    """Max distance between vertex blocks k and l, for active pairs only."""
    nb = starts.shape[0]
    out = np.zeros((nb, nb))
    for k in range(nb):
        for l in range(k, nb):
            if not active[k, l]:
                continue
            best = 0.0
            for i in range(starts[k], ends[k] + 1):
                ax = P[i, 0]
                ay = P[i, 1]
                j0 = starts[l]
                if k == l:
                    j0 = i + 1
                for j in range(j0, ends[l] + 1):
                    d = _qdist_nb(ax, ay, P[j, 0], P[j, 1], sphere)
                    if d > best:
                        best = d
            out[k, l] = best
            out[l, k] = best
    return out


def block_max_np(P, starts, ends, active, sphere):
    nb = starts.shape[0]
    out = np.zeros((nb, nb))
    for k in range(nb):
        a = P[starts[k]:ends[k] + 1]
        for l in range(k, nb):
            if not active[k, l]:
                continue
            b = P[starts[l]:ends[l] + 1]
            best = 0.0
            for i0 in range(0, a.shape[0], 256):
                d = _qdist_np(a[i0:i0 + 256, None, :], b[None, :, :], sphere)
                if d.size:
                    best = max(best, float(d.max()))
            out[k, l] = out[l, k] = best
    return out


# ---------------------------------------------------------------------------
# exact correction field of the conjugacy (series evaluation)


@njit(**_JIT)
def series_q_nb(P, t, K, mu_u, mu_s, vu, vs, wu, ws):
    n = P.shape[0]
    out = np.empty((n, 2))
    k2 = t / TWO_PI
    for i in range(n):
        x0 = P[i, 0] - np.floor(P[i, 0])
        y0 = P[i, 1] - np.floor(P[i, 1])
        # unstable part: sum over the forward orbit
        x = x0
        y = y0
        w = 1.0
        hu = 0.0
        for _ in range(K):
            s = k2 * np.sin(TWO_PI * x)
            hu -= w * wu[1] * s
            w /= mu_u
            nx = 2.0 * x + y - s
            ny = x + y - s
            x = nx - np.floor(nx)
            y = ny - np.floor(ny)
        # stable part: sum over the backward orbit
        x = x0
        y = y0
        w = mu_s
        hs = 0.0
        for _ in range(K):
            px = x - y
            py = y - px + k2 * np.sin(TWO_PI * px)
            x = px - np.floor(px)
            y = py - np.floor(py)
            s = k2 * np.sin(TWO_PI * x)
            hs += w * ws[1] * s
            w *= mu_s
        out[i, 0] = hu * vu[0] + hs * vs[0]
        out[i, 1] = hu * vu[1] + hs * vs[1]
    return out


def series_q_np(P, t, K, mu_u, mu_s, vu, vs, wu, ws):
    P = np.asarray(P, dtype=float)
    k2 = t / TWO_PI
    z0 = P - np.floor(P)
    x, y = z0[:, 0].copy(), z0[:, 1].copy()
    hu = np.zeros(len(P))
    w = 1.0
    for _ in range(K):
        s = k2 * np.sin(TWO_PI * x)
        hu -= w * wu[1] * s
        w /= mu_u
        nx = 2.0 * x + y - s
        ny = x + y - s
        x = nx - np.floor(nx)
        y = ny - np.floor(ny)
    x, y = z0[:, 0].copy(), z0[:, 1].copy()
    hs = np.zeros(len(P))
    w = mu_s
    for _ in range(K):
        px = x - y
        py = y - px + k2 * np.sin(TWO_PI * px)
        x = px - np.floor(px)
        y = py - np.floor(py)
        hs += w * ws[1] * k2 * np.sin(TWO_PI * x)
        w *= mu_s
    return hu[:, None] * np.asarray(vu)[None, :] + hs[:, None] * np.asarray(vs)[None, :]


# ---------------------------------------------------------------------------
# inverse of the conjugacy by multiple shooting
#
# x = h^{-1}(y) is the unique point whose lifted f-orbit stays within |h - id|
# of the lifted A-orbit (a_n) of y.  The unknowns are the lift differences
# D_n = p_n - a_n for -Kb <= n <= Kf, subject to the one-step equations
#
#     R_n = f(a_n + D_n) - k_n - a_{n+1} - D_{n+1} = 0,   k_n = A a_n - a_{n+1}
#
# and two pins: the stable part of D_{-Kb} and the unstable part of D_{Kf}
# vanish.  The pins are wrong by O(|h - id|), but that error reaches D_0 only
# after division by the expansion along the orbit, so the horizons are grown
# until both expansions pass ``grow``.  Notes:
#   * tracking lifts (not residues mod 1) excludes homoclinic partners of x;
#   * the base orbit a_n is exact: A is unimodular, so on the dyadic grid
#     2^-60 it is integer arithmetic with 2a + b < 2^63;
#   * only one-step maps are evaluated, so no long float orbit ever appears.
# The Newton system is banded (2 sub- and 2 super-diagonals).

_M60 = 1 << 60
_INV60 = 1.0 / float(_M60)
_KL = 2
_KU = 2
_BW = 2 * _KL + _KU + 1


@njit(**_JIT)
def _base_orbit_nb(iy0, iy1, Kf, Kb):
    M = np.int64(1) << 60
    N = Kf + Kb + 1
    a = np.empty((N, 2))
    kk = np.empty((N - 1, 2))
    a[Kb, 0] = iy0 * _INV60
    a[Kb, 1] = iy1 * _INV60
    ia = iy0
    ib = iy1
    for n in range(Kb, N - 1):
        ia, ib = (2 * ia + ib) % M, (ia + ib) % M
        a[n + 1, 0] = ia * _INV60
        a[n + 1, 1] = ib * _INV60
    ia = iy0
    ib = iy1
    for n in range(Kb, 0, -1):
        ia, ib = (ia - ib) % M, (2 * ib - ia) % M
        a[n - 1, 0] = ia * _INV60
        a[n - 1, 1] = ib * _INV60
    for n in range(N - 1):
        kk[n, 0] = np.round(2.0 * a[n, 0] + a[n, 1] - a[n + 1, 0])
        kk[n, 1] = np.round(a[n, 0] + a[n, 1] - a[n + 1, 1])
    return a, kk


@njit(**_JIT)
def _ms_residual_nb(a, kk, D, t, wu, ws, R):
    """Fill R (length 2N) and return its max norm."""
    N = a.shape[0]
    k2 = t / TWO_PI
    R[0] = ws[0] * D[0, 0] + ws[1] * D[0, 1]
    worst = abs(R[0])
    for n in range(N - 1):
        px = a[n, 0] + D[n, 0]
        py = a[n, 1] + D[n, 1]
        s = k2 * np.sin(TWO_PI * px)
        r0 = 2.0 * px + py - s - kk[n, 0] - a[n + 1, 0] - D[n + 1, 0]
        r1 = px + py - s - kk[n, 1] - a[n + 1, 1] - D[n + 1, 1]
        R[1 + 2 * n] = r0
        R[2 + 2 * n] = r1
        worst = max(worst, abs(r0), abs(r1))
    R[2 * N - 1] = wu[0] * D[N - 1, 0] + wu[1] * D[N - 1, 1]
    worst = max(worst, abs(R[2 * N - 1]))
    return worst


@njit(**_JIT)
def _band_solve_nb(B, rhs):
    """Solve a banded system in place (partial pivoting). B[r, c - r + KL]."""
    M = rhs.shape[0]
    kl = _KL
    top = _KL + _KU
    for j in range(M):
        last = min(j + kl, M - 1)
        p = j
        vmax = abs(B[j, kl])
        for r in range(j + 1, last + 1):
            v = abs(B[r, j - r + kl])
            if v > vmax:
                vmax = v
                p = r
        cend = min(j + top, M - 1)
        if p != j:
            for c in range(j, cend + 1):
                tmp = B[j, c - j + kl]
                B[j, c - j + kl] = B[p, c - p + kl]
                B[p, c - p + kl] = tmp
            tmp = rhs[j]
            rhs[j] = rhs[p]
            rhs[p] = tmp
        piv = B[j, kl]
        for r in range(j + 1, last + 1):
            fac = B[r, j - r + kl] / piv
            if fac != 0.0:
                for c in range(j, cend + 1):
                    B[r, c - r + kl] -= fac * B[j, c - j + kl]
                rhs[r] -= fac * rhs[j]
    for j in range(M - 1, -1, -1):
        acc = rhs[j]
        for c in range(j + 1, min(j + top, M - 1) + 1):
            acc -= B[j, c - j + kl] * rhs[c]
        rhs[j] = acc / B[j, kl]


@njit(**_JIT)
def _ms_newton_nb(a, kk, D, t, wu, ws, maxit, tol):
    N = a.shape[0]
    M = 2 * N
    R = np.empty(M)
    Rt = np.empty(M)
    B = np.zeros((M, _BW))
    Dt = np.empty_like(D)
    merit = _ms_residual_nb(a, kk, D, t, wu, ws, R)
    for _ in range(maxit):
        if merit < tol:
            break
        B[:, :] = 0.0
        B[0, _KL] = ws[0]
        B[0, _KL + 1] = ws[1]
        for n in range(N - 1):
            c = t * np.cos(TWO_PI * (a[n, 0] + D[n, 0]))
            r = 1 + 2 * n
            col = 2 * n
            B[r, col - r + _KL] = 2.0 - c
            B[r, col + 1 - r + _KL] = 1.0
            B[r, col + 2 - r + _KL] = -1.0
            r = 2 + 2 * n
            B[r, col - r + _KL] = 1.0 - c
            B[r, col + 1 - r + _KL] = 1.0
            B[r, col + 3 - r + _KL] = -1.0
        B[M - 1, M - 2 - (M - 1) + _KL] = wu[0]
        B[M - 1, _KL] = wu[1]
        for i in range(M):
            Rt[i] = -R[i]
        _band_solve_nb(B, Rt)
        lam = 1.0
        accepted = False
        for _ls in range(12):
            for n in range(N):
                Dt[n, 0] = D[n, 0] + lam * Rt[2 * n]
                Dt[n, 1] = D[n, 1] + lam * Rt[2 * n + 1]
            m2 = _ms_residual_nb(a, kk, Dt, t, wu, ws, R)
            if m2 < (1.0 - 1e-4 * lam) * merit:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            _ms_residual_nb(a, kk, D, t, wu, ws, R)
            break
        D[:, :] = Dt
        merit = m2
    return merit


@njit(**_JIT)
def _ms_growth_nb(a, D, t, Kb, wu, ws):
    """log of the forward unstable and backward stable expansion at time 0."""
    N = a.shape[0]
    c0 = wu[0]
    c1 = wu[1]
    lf = 0.0
    for n in range(N - 2, Kb - 1, -1):
        c = t * np.cos(TWO_PI * (a[n, 0] + D[n, 0]))
        # J^T c with J = [[2 - c, 1], [1 - c, 1]]
        n0 = (2.0 - c) * c0 + (1.0 - c) * c1
        n1 = c0 + c1
        nr = np.sqrt(n0 * n0 + n1 * n1)
        lf += np.log(nr)
        c0 = n0 / nr
        c1 = n1 / nr
    c0 = ws[0]
    c1 = ws[1]
    lb = 0.0
    for n in range(0, Kb):
        c = t * np.cos(TWO_PI * (a[n, 0] + D[n, 0]))
        # J^{-T} c with J^{-1} = [[1, -1], [-(1 - c), 2 - c]]
        n0 = c0 - (1.0 - c) * c1
        n1 = -c0 + (2.0 - c) * c1
        nr = np.sqrt(n0 * n0 + n1 * n1)
        lb += np.log(nr)
        c0 = n0 / nr
        c1 = n1 / nr
    return lf, lb


@njit(**_JIT)
def invert_shoot_nb(Y, t, kmax, grow, wu, ws, k0):
    n = Y.shape[0]
    out = np.empty((n, 2))
    kit = np.zeros(n, dtype=np.int64)
    M = np.int64(1) << 60
    lg = np.log(grow)
    for i in range(n):
        yx = Y[i, 0] - np.floor(Y[i, 0])
        yy = Y[i, 1] - np.floor(Y[i, 1])
        iy0 = np.int64(np.round(yx * 1152921504606846976.0)) % M
        iy1 = np.int64(np.round(yy * 1152921504606846976.0)) % M
        Kf = k0
        Kb = k0
        D = np.zeros((Kf + Kb + 1, 2))
        while True:
            a, kk = _base_orbit_nb(iy0, iy1, Kf, Kb)
            _ms_newton_nb(a, kk, D, t, wu, ws, 60, 1e-15)
            lf, lb = _ms_growth_nb(a, D, t, Kb, wu, ws)
            nf = Kf
            nbk = Kb
            if lf < lg and Kf < kmax:
                nf = min(kmax, Kf + max(8, Kf // 2))
            if lb < lg and Kb < kmax:
                nbk = min(kmax, Kb + max(8, Kb // 2))
            if nf == Kf and nbk == Kb:
                break
            D2 = np.zeros((nf + nbk + 1, 2))
            off = nbk - Kb
            for m in range(Kf + Kb + 1):
                D2[m + off, 0] = D[m, 0]
                D2[m + off, 1] = D[m, 1]
            D = D2
            Kf = nf
            Kb = nbk
        X0 = a[Kb, 0] + D[Kb, 0]
        X1 = a[Kb, 1] + D[Kb, 1]
        out[i, 0] = X0 - np.floor(X0)
        out[i, 1] = X1 - np.floor(X1)
        kit[i] = max(Kf, Kb)
    return out, kit


@njit(**_JIT)
def _f_orbit_nb(x0, x1, y0, y1, t, Kf, Kb):
    """Backward orbit of x (times <= 0) glued to the forward orbit of y."""
    k2 = t / TWO_PI
    N = Kf + Kb + 1
    a = np.empty((N, 2))
    kk = np.empty((N - 1, 2))
    a[Kb, 0] = x0
    a[Kb, 1] = x1
    px = x0 - np.floor(x0)
    py = x1 - np.floor(x1)
    for n in range(Kb, 0, -1):
        qx = px - py
        qy = py - qx + k2 * np.sin(TWO_PI * qx)
        px = qx - np.floor(qx)
        py = qy - np.floor(qy)
        a[n - 1, 0] = px
        a[n - 1, 1] = py
    px = y0
    py = y1
    for n in range(Kb, N - 1):
        s = k2 * np.sin(TWO_PI * px)
        qx = 2.0 * px + py - s
        qy = px + py - s
        px = qx - np.floor(qx)
        py = qy - np.floor(qy)
        a[n + 1, 0] = px
        a[n + 1, 1] = py
    for n in range(N - 1):
        s = k2 * np.sin(TWO_PI * a[n, 0])
        kk[n, 0] = np.round(2.0 * a[n, 0] + a[n, 1] - s - a[n + 1, 0])
        kk[n, 1] = np.round(a[n, 0] + a[n, 1] - s - a[n + 1, 1])
    return a, kk


@njit(**_JIT)
def bracket_shoot_nb(X, Yt, Z0, t, kmax, grow, wu, ws, k0):
    """Point of W^u(x) cap W^s(y) near x, for each row (x, y~).

    y~ must already be the lift of the (possibly antipodal) partner of x that
    lies near x.  Z0 holds initial guesses (NaN rows start from x).  Returns
    the point (lift near x), the max lift distance to the x-orbit over times
    <= 0, the max distance to the y-orbit over times >= 0, the end-point
    distances of both half-orbits, and the final Newton residual.
    """
    n = X.shape[0]
    out = np.empty((n, 2))
    info = np.empty((n, 5))
    lg = np.log(grow)
    for i in range(n):
        Kf = k0
        Kb = k0
        D = np.zeros((Kf + Kb + 1, 2))
        if not np.isnan(Z0[i, 0]):
            D[Kb, 0] = Z0[i, 0] - X[i, 0]
            D[Kb, 1] = Z0[i, 1] - X[i, 1]
        while True:
            a, kk = _f_orbit_nb(X[i, 0], X[i, 1], Yt[i, 0], Yt[i, 1], t, Kf, Kb)
            res = _ms_newton_nb(a, kk, D, t, wu, ws, 60, 1e-15)
            lf, lb = _ms_growth_nb(a, D, t, Kb, wu, ws)
            nf = Kf
            nbk = Kb
            if lf < lg and Kf < kmax:
                nf = min(kmax, Kf + max(8, Kf // 2))
            if lb < lg and Kb < kmax:
                nbk = min(kmax, Kb + max(8, Kb // 2))
            if nf == Kf and nbk == Kb:
                break
            D2 = np.zeros((nf + nbk + 1, 2))
            off = nbk - Kb
            for m in range(Kf + Kb + 1):
                D2[m + off, 0] = D[m, 0]
                D2[m + off, 1] = D[m, 1]
            D = D2
            Kf = nf
            Kb = nbk
        out[i, 0] = X[i, 0] + D[Kb, 0]
        out[i, 1] = X[i, 1] + D[Kb, 1]
        du = 0.0
        for m in range(0, Kb + 1):
            du = max(du, np.hypot(D[m, 0], D[m, 1]))
        ds = np.hypot(out[i, 0] - Yt[i, 0], out[i, 1] - Yt[i, 1])
        for m in range(Kb + 1, Kf + Kb + 1):
            ds = max(ds, np.hypot(D[m, 0], D[m, 1]))
        info[i, 0] = du
        info[i, 1] = ds
        info[i, 2] = np.hypot(D[0, 0], D[0, 1])
        info[i, 3] = np.hypot(D[Kf + Kb, 0], D[Kf + Kb, 1])
        info[i, 4] = res
    return out, info


def _ms_newton_np(a, kk, D, t, wu, ws, maxit=60, tol=1e-15):
    """numpy twin of _ms_newton_nb; returns (D, merit)."""
    from scipy.linalg import solve_banded

    k2 = t / TWO_PI

    def residual(D):
        p = a[:-1] + D[:-1]
        s = k2 * np.sin(TWO_PI * p[:, 0])
        fp = np.stack([2.0 * p[:, 0] + p[:, 1] - s, p[:, 0] + p[:, 1] - s], 1)
        Rm = fp - kk - a[1:] - D[1:]
        return np.concatenate([[D[0] @ ws], Rm.ravel(), [D[-1] @ wu]])

    N = len(a)
    Mn = 2 * N
    R = residual(D)
    merit = np.abs(R).max()
    for _ in range(maxit):
        if merit < tol:
            break
        c = t * np.cos(TWO_PI * (a[:-1, 0] + D[:-1, 0]))
        # LAPACK band layout: ab[KU + r - col, col] = A[r, col]
        ab = np.zeros((_KL + _KU + 1, Mn))
        ab[_KU, 0] = ws[0]
        ab[_KU - 1, 1] = ws[1]
        rows = 1 + 2 * np.arange(N - 1)
        cols = 2 * np.arange(N - 1)
        ab[_KU + rows - cols, cols] = 2.0 - c
        ab[_KU + rows - cols - 1, cols + 1] = 1.0
        ab[_KU + rows - cols - 2, cols + 2] = -1.0
        ab[_KU + rows + 1 - cols, cols] = 1.0 - c
        ab[_KU + rows - cols, cols + 1] = 1.0
        ab[_KU + rows - cols - 2, cols + 3] = -1.0
        ab[_KU + 1, Mn - 2] = wu[0]
        ab[_KU, Mn - 1] = wu[1]
        step = solve_banded((_KL, _KU), ab, -R).reshape(N, 2)
        lam = 1.0
        ok = False
        for _ls in range(12):
            Dt = D + lam * step
            Rt = residual(Dt)
            m2 = np.abs(Rt).max()
            if m2 < (1.0 - 1e-4 * lam) * merit:
                ok = True
                break
            lam *= 0.5
        if not ok:
            break
        D, R, merit = Dt, Rt, m2
    return D, merit


def _ms_point_np(base, D, t, kmax, grow, wu, ws, k0):
    """Multiple-shooting solve for one point; ``base(Kf, Kb) -> (a, kk)``."""
    lg = np.log(grow)
    Kf = Kb = k0
    while True:
        a, kk = base(Kf, Kb)
        N = len(a)
        D, merit = _ms_newton_np(a, kk, D, t, wu, ws)
        p = a + D
        c = t * np.cos(TWO_PI * p[:, 0])
        cv = wu.copy()
        lf = 0.0
        for m in range(N - 2, Kb - 1, -1):
            cv = np.array([(2.0 - c[m]) * cv[0] + (1.0 - c[m]) * cv[1], cv[0] + cv[1]])
            nr = np.hypot(*cv)
            lf += np.log(nr)
            cv /= nr
        cv = ws.copy()
        lb = 0.0
        for m in range(0, Kb):
            cv = np.array([cv[0] - (1.0 - c[m]) * cv[1], -cv[0] + (2.0 - c[m]) * cv[1]])
            nr = np.hypot(*cv)
            lb += np.log(nr)
            cv /= nr
        nf, nbk = Kf, Kb
        if lf < lg and Kf < kmax:
            nf = min(kmax, Kf + max(8, Kf // 2))
        if lb < lg and Kb < kmax:
            nbk = min(kmax, Kb + max(8, Kb // 2))
        if nf == Kf and nbk == Kb:
            return a, D, Kf, Kb, merit
        D2 = np.zeros((nf + nbk + 1, 2))
        D2[nbk - Kb:nbk - Kb + N] = D
        D, Kf, Kb = D2, nf, nbk


def invert_shoot_np(Y, t, kmax, grow, wu, ws, k0):
    """Same algorithm as the numba version, one point at a time."""
    Y = np.asarray(Y, dtype=float)
    Y = Y - np.floor(Y)
    wu = np.asarray(wu, dtype=float)
    ws = np.asarray(ws, dtype=float)
    Mi = _M60
    out = np.empty_like(Y)
    kit = np.zeros(len(Y), dtype=np.int64)

    for i, y in enumerate(Y):
        iy = (int(round(y[0] * Mi)) % Mi, int(round(y[1] * Mi)) % Mi)

        def base(Kf, Kb, iy=iy):
            N = Kf + Kb + 1
            ia = [0] * N
            ib = [0] * N
            ia[Kb], ib[Kb] = iy
            for m in range(Kb, N - 1):
                ia[m + 1], ib[m + 1] = (2 * ia[m] + ib[m]) % Mi, (ia[m] + ib[m]) % Mi
            for m in range(Kb, 0, -1):
                ia[m - 1], ib[m - 1] = (ia[m] - ib[m]) % Mi, (2 * ib[m] - ia[m]) % Mi
            a = np.array([ia, ib], dtype=float).T * _INV60
            kk = np.round(a[:-1] @ np.array([[2.0, 1.0], [1.0, 1.0]]).T - a[1:])
            return a, kk

        a, D, Kf, Kb, _ = _ms_point_np(base, np.zeros((2 * k0 + 1, 2)), t, kmax, grow, wu, ws, k0)
        x = a[Kb] + D[Kb]
        out[i] = x - np.floor(x)
        kit[i] = max(Kf, Kb)
    return out, kit


def bracket_shoot_np(X, Yt, Z0, t, kmax, grow, wu, ws, k0):
    X = np.asarray(X, dtype=float)
    Yt = np.asarray(Yt, dtype=float)
    Z0 = np.asarray(Z0, dtype=float)
    wu = np.asarray(wu, dtype=float)
    ws = np.asarray(ws, dtype=float)
    k2 = t / TWO_PI
    out = np.empty_like(X)
    info = np.empty((len(X), 5))

    def fl(p):
        s = k2 * np.sin(TWO_PI * p[..., 0])
        return np.stack([2.0 * p[..., 0] + p[..., 1] - s, p[..., 0] + p[..., 1] - s], -1)

    for i in range(len(X)):
        x, yt = X[i], Yt[i]

        def base(Kf, Kb, x=x, yt=yt):
            N = Kf + Kb + 1
            a = np.empty((N, 2))
            a[Kb] = x
            p = x - np.floor(x)
            for m in range(Kb, 0, -1):
                qx = p[0] - p[1]
                qy = p[1] - qx + k2 * np.sin(TWO_PI * qx)
                p = np.array([qx, qy])
                p -= np.floor(p)
                a[m - 1] = p
            p = yt.copy()
            for m in range(Kb, N - 1):
                p = fl(p)
                p -= np.floor(p)
                a[m + 1] = p
            kk = np.round(fl(a[:-1]) - a[1:])
            return a, kk

        D = np.zeros((2 * k0 + 1, 2))
        if not np.isnan(Z0[i, 0]):
            D[k0] = Z0[i] - x
        a, D, Kf, Kb, res = _ms_point_np(base, D, t, kmax, grow, wu, ws, k0)
        out[i] = x + D[Kb]
        nrm = np.hypot(D[:, 0], D[:, 1])
        info[i, 0] = nrm[:Kb + 1].max()
        info[i, 1] = max(np.hypot(*(out[i] - yt)), nrm[Kb + 1:].max() if Kf > 0 else 0.0)
        info[i, 2] = nrm[0]
        info[i, 3] = nrm[-1]
        info[i, 4] = res
    return out, info


@njit(**_JIT)
def orbit_shoot_nb(A, t, wu, ws):
    """True orbit next to the sequence A (rows are lifts mod 1).

    Solves p_{n+1} = f(p_n) for p_n = A_n + D_n with the stable part of D_0
    and the unstable part of D_{N-1} pinned to zero.  Returns (D, merit).
    """
    N = A.shape[0]
    k2 = t / TWO_PI
    kk = np.empty((N - 1, 2))
    for n in range(N - 1):
        s = k2 * np.sin(TWO_PI * A[n, 0])
        kk[n, 0] = np.round(2.0 * A[n, 0] + A[n, 1] - s - A[n + 1, 0])
        kk[n, 1] = np.round(A[n, 0] + A[n, 1] - s - A[n + 1, 1])
    D = np.zeros((N, 2))
    merit = _ms_newton_nb(A, kk, D, t, wu, ws, 60, 1e-15)
    return D, merit


def orbit_shoot_np(A, t, wu, ws):
    A = np.asarray(A, dtype=float)
    k2 = t / TWO_PI
    s = k2 * np.sin(TWO_PI * A[:-1, 0])
    f = np.stack([2.0 * A[:-1, 0] + A[:-1, 1] - s, A[:-1, 0] + A[:-1, 1] - s], 1)
    kk = np.round(f - A[1:])
    return _ms_newton_np(A, kk, np.zeros_like(A), t, np.asarray(wu, float), np.asarray(ws, float))


# ---------------------------------------------------------------------------
# dispatch

if HAVE_NUMBA:
    max_pairwise = max_pairwise_nb
    block_max = block_max_nb
    series_q = series_q_nb
    invert_shoot = invert_shoot_nb
    bracket_shoot = bracket_shoot_nb
    orbit_shoot = orbit_shoot_nb
else:
    max_pairwise = max_pairwise_np
    block_max = block_max_np
    series_q = series_q_np
    invert_shoot = invert_shoot_np
    bracket_shoot = bracket_shoot_np
    orbit_shoot = orbit_shoot_np
