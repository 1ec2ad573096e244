"""Franks semiconjugacy h = id + q between f_t and the linear map A.

With F(h) = A^-1 o h o f the fixed-point equation F(id + q) = id + q reads

    (I - F) q = c,   c(x) = A^-1 f(x) - x = (0, -s(x)),

and splits along the eigenlines: F scales the v_u component by 1/mu_u after
composing with f and the v_s component (through F^-1) by mu_s after
composing with f^-1, so

    q^u(x) =  sum_{n >= 0} mu_u^-n c^u(f^n x)
    q^s(x) = -sum_{n >= 1} mu_s^n  c^s(f^-n x).

Fields are stored on a uniform grid of [0,1)^2.  Off-grid evaluation is
bilinear, a truncated sine series, or ("series") the defining sums
themselves evaluated at the query points, which is exact up to truncation.
h is only Hoelder continuous for t > 0, so grid interpolation saturates
well above 1e-6; the series mode is what reaches tight residuals.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import _kernels, spaces
from ._io import atomic_write
from .systems import MapSpec, apply_inverse_lift_arr, apply_lift_arr, eigenstructure

log = logging.getLogger(__name__)

INTERP_MODES = ("bilinear", "fourier", "series")
DEFAULT_MODES = 32


class ConjugacyError(RuntimeError):
    pass


def _check_family(spec: MapSpec):
    if spec.space == spaces.PRODUCT or not spec.is_standard:
        raise ConjugacyError("the conjugacy is implemented for the standard family only")


def grid_points(n: int) -> np.ndarray:
    """Grid nodes (i/n, j/n) as an (n*n, 2) array, row-major in (i, j)."""
    g = np.arange(n) / n
    X, Y = np.meshgrid(g, g, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def _bilinear(values: np.ndarray, P: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    P = np.asarray(P, dtype=float)
    u = (P[:, 0] - np.floor(P[:, 0])) * n
    v = (P[:, 1] - np.floor(P[:, 1])) * n
    i0 = np.floor(u).astype(np.int64)
    j0 = np.floor(v).astype(np.int64)
    fu = (u - i0)[:, None]
    fv = (v - j0)[:, None]
    i0 %= n
    j0 %= n
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    return ((1 - fu) * (1 - fv) * values[i0, j0] + fu * (1 - fv) * values[i1, j0]
            + (1 - fu) * fv * values[i0, j1] + fu * fv * values[i1, j1])


def _sine_coeffs(values: np.ndarray, modes: int):
    n = values.shape[0]
    M = min(modes, n // 2 - 1)
    C = np.fft.fft2(values, axes=(0, 1)) / (n * n)
    k = np.arange(-M, M + 1)
    # odd fields have purely imaginary coefficients; keep only that part
    B = -np.imag(C[np.ix_(k % n, k % n)])
    return k, B


def _sine_eval(k: np.ndarray, B: np.ndarray, P: np.ndarray, chunk: int = 2048) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    out = np.empty((len(P), 2))
    for a in range(0, len(P), chunk):
        Q = P[a:a + chunk]
        sx = np.exp(2j * np.pi * np.outer(Q[:, 0], k))
        sy = np.exp(2j * np.pi * np.outer(Q[:, 1], k))
        for c in range(2):
            # sum_{k,l} B_kl sin(2 pi (k x + l y)) = Im(sx B sy^T) on the diagonal
            out[a:a + chunk, c] = np.imag(np.einsum("pk,kl,pl->p", sx, B[:, :, c], sy))
    return out


@dataclass(eq=False)
class OddPeriodicField:
    """Samples of an odd Z^2-periodic vector field on the n x n grid."""
    grid_n: int
    values: np.ndarray
    interp: str = "bilinear"
    t: Optional[float] = None
    K: Optional[int] = None
    residual: Optional[float] = None
    modes: int = DEFAULT_MODES
    _sine: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        V = np.asarray(self.values, dtype=float)
        if V.shape != (self.grid_n, self.grid_n, 2):
            raise ValueError(f"values must have shape ({self.grid_n}, {self.grid_n}, 2)")
        if self.interp not in INTERP_MODES:
            raise ValueError(f"interp must be one of {INTERP_MODES}")
        if self.interp == "series" and (self.t is None or self.K is None):
            raise ValueError("series interpolation needs t and K")
        self.values = V

    def __call__(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if self.interp == "bilinear":
            return _bilinear(self.values, P)
        if self.interp == "fourier":
            if self._sine is None:
                self._sine = _sine_coeffs(self.values, self.modes)
            return _sine_eval(*self._sine, P)
        return _series(np.ascontiguousarray(P), self.t, self.K)

    def with_interp(self, interp: str) -> "OddPeriodicField":
        return OddPeriodicField(self.grid_n, self.values, interp, self.t, self.K, self.residual,
                                self.modes)

    def oddness_residual(self) -> float:
        n = self.grid_n
        idx = (-np.arange(n)) % n
        return float(np.abs(self.values + self.values[np.ix_(idx, idx)]).max())

    def sup_norm(self) -> float:
        return float(np.hypot(self.values[..., 0], self.values[..., 1]).max())

    def header(self) -> dict:
        return {"grid_n": self.grid_n, "t": self.t, "K": self.K, "residual": self.residual,
                "interp": self.interp}

    def save(self, path) -> None:
        head = json.dumps(self.header(), sort_keys=True).encode() + b"\n"
        body = np.ascontiguousarray(self.values, dtype="<f8").tobytes()
        atomic_write(path, head + body)

    @classmethod
    def load(cls, path) -> "OddPeriodicField":
        with open(path, "rb") as fh:
            head = json.loads(fh.readline())
            body = fh.read()
        n = int(head["grid_n"])
        if len(body) != n * n * 2 * 8:
            raise ValueError("field file is truncated or has the wrong grid size")
        V = np.frombuffer(body, dtype="<f8").reshape(n, n, 2).copy()
        return cls(n, V, head.get("interp", "bilinear"), head.get("t"), head.get("K"),
                   head.get("residual"))


@dataclass(frozen=True)
class SplitField:
    """Eigen-components of a field: q = qs v_s + qu v_u."""
    qs: np.ndarray
    qu: np.ndarray
    v_s: np.ndarray
    v_u: np.ndarray

    @classmethod
    def split(cls, values: np.ndarray, spec: MapSpec) -> "SplitField":
        ed = eigenstructure(spec)
        return cls(values @ ed.w_s, values @ ed.w_u, ed.v_s, ed.v_u)

    def reassemble(self) -> np.ndarray:
        return self.qs[..., None] * self.v_s + self.qu[..., None] * self.v_u


# ---------------------------------------------------------------------------
# the operator and the right-hand side


def _series(P: np.ndarray, t: float, K: int) -> np.ndarray:
    from .systems import torus
    ed = eigenstructure(torus())
    return _kernels.series_q(P, float(t), int(K), ed.mu_u, ed.mu_s, np.array(ed.v_u),
                             np.array(ed.v_s), np.array(ed.w_u), np.array(ed.w_s))


def _Ainv(spec: MapSpec) -> np.ndarray:
    return np.linalg.inv(spec.A)


def franks_rhs(spec: MapSpec, grid_n: int = 256) -> OddPeriodicField:
    _check_family(spec)
    P = grid_points(grid_n)
    c = apply_lift_arr(spec, P) @ _Ainv(spec).T - P
    return OddPeriodicField(grid_n, c.reshape(grid_n, grid_n, 2), t=spec.t)


def franks_operator(spec: MapSpec, inverse: bool = False):
    """F(q) = A^-1 q(f x), or F^-1(q) = A q(f^-1 x), acting on grid fields.

    The composition is evaluated with the field's own interpolation.
    """
    _check_family(spec)
    M = spec.A if inverse else _Ainv(spec)
    step = apply_inverse_lift_arr if inverse else apply_lift_arr

    def F(q: OddPeriodicField) -> OddPeriodicField:
        P = grid_points(q.grid_n)
        V = q(step(spec, P)) @ M.T
        return OddPeriodicField(q.grid_n, V.reshape(q.grid_n, q.grid_n, 2), q.interp, q.t, q.K,
                                modes=q.modes)

    return F


def truncation_bound(spec: MapSpec, K: int) -> float:
    ed = eigenstructure(spec)
    c_norm = spec.t / (2 * np.pi) * float(np.hypot(*ed.w_u) + np.hypot(*ed.w_s))
    return ed.mu_s ** K * c_norm / (1.0 - ed.mu_s)


def franks_solve(spec: MapSpec, K: int = 40, grid_n: int = 512, method: str = "series",
                 interp: Optional[str] = None) -> OddPeriodicField:
    """Correction field q with id + q the semiconjugacy.

    ``method="series"`` samples the exact sums at the nodes and keeps them
    as the evaluator; ``method="iterate"`` runs the Neumann recursion on the
    grid itself, composing through the chosen interpolation at every term.
    """
    _check_family(spec)
    if K < 1:
        raise ValueError("K must be >= 1")
    if grid_n < 64 or grid_n & (grid_n - 1):
        raise ValueError("grid_n must be a power of two >= 64")
    P = grid_points(grid_n)
    if method == "series":
        V = _series(P, spec.t, K).reshape(grid_n, grid_n, 2)
        q = OddPeriodicField(grid_n, V, interp or "series", spec.t, K)
    elif method == "iterate":
        ed = eigenstructure(spec)
        mode = interp or "bilinear"
        if mode == "series":
            raise ValueError("the grid recursion needs bilinear or fourier interpolation")
        c = franks_rhs(spec, grid_n)
        S = SplitField.split(c.values, spec)
        fP = apply_lift_arr(spec, P)
        bP = apply_inverse_lift_arr(spec, P)

        def scalar(vals, at):
            f = OddPeriodicField(grid_n, np.stack([vals, np.zeros_like(vals)], -1), mode)
            return f(at)[:, 0].reshape(grid_n, grid_n)

        hu = np.zeros((grid_n, grid_n))
        term = S.qu
        for _ in range(K):
            hu += term
            term = scalar(term, fP) / ed.mu_u
        hs = np.zeros((grid_n, grid_n))
        term = S.qs
        for _ in range(K):
            term = scalar(term, bP) * ed.mu_s
            hs -= term
        V = SplitField(hs, hu, ed.v_s, ed.v_u).reassemble()
        q = OddPeriodicField(grid_n, V, mode, spec.t, K)
    else:
        raise ValueError("method must be 'series' or 'iterate'")
    q.residual = verify_semiconjugacy(spec, q, probe_n=min(grid_n, 256))
    return q


# ---------------------------------------------------------------------------
# checks


def h_full(q: OddPeriodicField, P) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return P + q(P)


def _probes(probe_n: int) -> np.ndarray:
    # cell centres avoid sitting exactly on the interpolation nodes
    return grid_points(probe_n) + 0.5 / probe_n


def verify_semiconjugacy(spec: MapSpec, q: OddPeriodicField, probe_n: int = 256) -> float:
    """max |A h(x) - h(f x)| over probes, compared modulo Z^2."""
    _check_family(spec)
    P = _probes(probe_n)
    lhs = h_full(q, P) @ spec.A.T
    fP = apply_lift_arr(spec, P)
    rhs = h_full(q, fP)
    return float(spaces.torus_dist_arr(lhs, rhs).max())


def fixed_point_residual(spec: MapSpec, q: OddPeriodicField, probe_n: int = 256) -> float:
    """max |F(id + q) - (id + q)| at probes (equals the above up to A^-1)."""
    P = _probes(probe_n)
    Fh = h_full(q, apply_lift_arr(spec, P)) @ _Ainv(spec).T
    return float(spaces.torus_dist_arr(Fh, h_full(q, P)).max())


def oddness_residual_at(q: OddPeriodicField, P) -> float:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return float(np.abs(spaces.wrap(h_full(q, -P) + h_full(q, P))).max())


def verify_sphere_descent(q: OddPeriodicField, probe_n: int = 100, tol: float = 1e-10) -> dict:
    """Oddness of h on probes and the singular classes mapped to singular classes."""
    P = _probes(probe_n)
    odd = oddness_residual_at(q, P)
    H = h_full(q, spaces.SINGULAR)
    sing = []
    for s, hs in zip(spaces.SINGULAR, H):
        sing.append(float(spaces.quotient_dist_arr(hs, s, spaces.SPHERE)))
    ok = odd <= tol and max(sing) <= tol
    return {"ok": bool(ok), "oddness": odd, "singular_shift": max(sing)}


def measure_contraction(spec: MapSpec, n_max: int = 10, probe_n: int = 512) -> dict:
    """sup|F^n c^u| / sup|c^u| and sup|F^-n c^s| / sup|c^s| against mu_s^n.

    Compositions use the exact maps, so the ratio isolates the operator
    norm; the sup is taken over a probe grid.
    """
    _check_family(spec)
    ed = eigenstructure(spec)
    P = _probes(probe_n)
    Ainv = _Ainv(spec)

    def comp(Q):
        c = apply_lift_arr(spec, Q) @ Ainv.T - Q
        return c @ ed.w_u, c @ ed.w_s

    cu0, cs0 = comp(P)
    nu0 = np.abs(cu0).max()
    ns0 = np.abs(cs0).max()
    out = {"n": [], "unstable": [], "stable": [], "mu_s_pow": []}
    Qf = P.copy()
    Qb = P.copy()
    for n in range(1, n_max + 1):
        Qf = spaces.reduce_arr(apply_lift_arr(spec, Qf))
        Qb = spaces.reduce_arr(apply_inverse_lift_arr(spec, Qb))
        nu = ed.mu_s ** n * np.abs(comp(Qf)[0]).max()  # |mu_u^-n c^u(f^n x)|
        ns = ed.mu_s ** n * np.abs(comp(Qb)[1]).max()  # |mu_s^n c^s(f^-n x)|
        out["n"].append(n)
        out["unstable"].append(float(nu / nu0))
        out["stable"].append(float(ns / ns0))
        out["mu_s_pow"].append(ed.mu_s ** n)
    r = np.array(out["unstable"] + out["stable"]) / np.array(out["mu_s_pow"] * 2)
    out["max_factor"] = float(np.maximum(r, 1 / r).max())
    return out


def lipschitz_estimate(q: OddPeriodicField) -> float:
    """Largest grid difference quotient of q (a lower bound for its Lipschitz constant)."""
    n = q.grid_n
    V = q.values
    dx = np.abs(np.roll(V, -1, axis=0) - V).max()
    dy = np.abs(np.roll(V, -1, axis=1) - V).max()
    return float(max(dx, dy) * n * np.sqrt(2))


# ---------------------------------------------------------------------------
# inversion


def invert_h(q: OddPeriodicField, Y, tol: float = 1e-9, maxit: int = 200, kmax: int = 400,
             check: bool = True) -> np.ndarray:
    """x with h(x) = y (mod Z^2), rows of Y.

    Fixed-point iteration x <- y - q(x) when q is a contraction; otherwise
    multiple shooting in f-space: x is the point whose f-orbit tracks the
    A-orbit of y.  The result is checked against tol through q itself.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    t = q.t if q.t is not None else 0.0
    if t == 0.0 and q.sup_norm() == 0.0:
        return spaces.reduce_arr(Y.copy())
    if lipschitz_estimate(q) < 1.0:
        X = Y.copy()
        for _ in range(maxit):
            Xn = Y - q(X)
            if np.abs(Xn - X).max() < 0.1 * tol:
                X = Xn
                break
            X = Xn
        else:
            raise ConjugacyError(f"fixed-point iteration did not converge in {maxit} steps")
        X = spaces.reduce_arr(X)
    else:
        from .systems import torus
        ed = eigenstructure(torus())
        X, _ = _kernels.invert_shoot(np.ascontiguousarray(Y), float(t), kmax, 1e12,
                                     np.array(ed.w_u), np.array(ed.w_s), 30)
    if check:
        err = spaces.torus_dist_arr(h_full(q, X), Y)
        if err.max() > tol:
            raise ConjugacyError(f"inversion residual {err.max():.3g} exceeds tol {tol:g}")
    return X


@lru_cache(maxsize=8)
def default_field(t: float, grid_n: int = 256, K: int = 40) -> OddPeriodicField:
    """Series-mode correction field for f_t, cached per (t, grid_n, K)."""
    from .systems import torus
    log.debug("solving the conjugacy for t=%g", t)
    return franks_solve(torus(t), K=K, grid_n=grid_n, method="series")
