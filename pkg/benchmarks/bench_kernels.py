"""Numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each pair is run once to warm up (JIT compile or cache load), then timed
as the best of ``--repeat`` runs.  Results are checked to agree before the
timings are printed.
"""
import argparse
import time

import numpy as np

from cwhyp import _kernels as K
from cwhyp import systems
from cwhyp.shadowing import _consistent_lifts

ED = systems.eigenstructure(systems.torus())
WU = np.array(ED.w_u)
WS = np.array(ED.w_s)


def _best(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    P = rng.random((3000, 2))
    yield "max_pairwise n=3000", lambda: K.max_pairwise_nb(P, True), lambda: K.max_pairwise_np(P, True)

    Q = rng.random((4096, 2))
    args = (1.0, 40, ED.mu_u, ED.mu_s, np.array(ED.v_u), np.array(ED.v_s), WU, WS)
    yield "series_q n=4096 K=40", lambda: K.series_q_nb(Q, *args), lambda: K.series_q_np(Q, *args)

    X = rng.random((200, 2))
    Y = X + rng.uniform(-0.005, 0.005, X.shape)
    yield ("bracket_shoot n=200",
           lambda: K.bracket_shoot_nb(X, Y, X.copy(), 1.0, 400, 1e12, WU, WS, 30),
           lambda: K.bracket_shoot_np(X, Y, X.copy(), 1.0, 400, 1e12, WU, WS, 30))

    Yi = rng.random((200, 2))
    yield ("invert_shoot n=200", lambda: K.invert_shoot_nb(Yi, 1.0, 400, 1e12, WU, WS, 30),
           lambda: K.invert_shoot_np(Yi, 1.0, 400, 1e12, WU, WS, 30))

    spec = systems.torus(1.0)
    O = systems.orbit_arr(spec, rng.random(2), 1000) + rng.uniform(-1e-4, 1e-4, (1000, 2))
    A = np.ascontiguousarray(_consistent_lifts(spec, O))
    yield ("orbit_shoot N=1000", lambda: K.orbit_shoot_nb(A, 1.0, WU, WS),
           lambda: K.orbit_shoot_np(A, 1.0, WU, WS))


def _close(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(np.asarray(x), np.asarray(y), atol=1e-9) for x, y in zip(a[:1], b[:1]))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ns = ap.parse_args()
    if not K.HAVE_NUMBA:
        print("numba unavailable (or CWHYP_NO_NUMBA set): both columns run numpy")
    rng = np.random.default_rng(ns.seed)
    print(f"{'kernel':26s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} agree")
    for name, nb, npf in cases(rng):
        agree = _close(nb(), npf())
        tn = _best(nb, ns.repeat)
        tp = _best(npf, ns.repeat)
        print(f"{name:26s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f} {agree}")


if __name__ == "__main__":
    main()
