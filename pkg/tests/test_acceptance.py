"""Acceptance criteria 1-9, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line; conftest prints them at the end of
the session (``pytest tests/test_acceptance.py -v``).
"""
import math
import time

import numpy as np

from cwhyp import analyzer, cli, conjugacy, cwmetric, shadowing as sh, spaces, systems

RESULTS = []
N_RUNS = 100
LEN = 1000
BETA = 0.05


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS.append((n, ok, detail))
    assert ok, f"criterion {n}: {detail}"


def _pseudo_orbits(spec, delta, decaying=False, n=N_RUNS, seed0=0):
    rng = np.random.default_rng(seed0)
    starts = rng.random((n, 2))
    return [sh.gen_pseudo_orbit(spec, starts[i], LEN, delta, decaying, seed0 * 1000 + i) for i in range(n)]


def _ladder(spec, conj=None):
    return sh.derive_ladder(BETA, cwmetric.make_context(spec, 0.1), spec, conj=conj)


def test_1_eigenstructure():
    dt = math.inf
    for _ in range(5):  # best of 5, uncached
        t0 = time.perf_counter()
        ed = systems._eigen.__wrapped__(systems.STANDARD)
        dt = min(dt, time.perf_counter() - t0)
    e_mu = abs(ed.mu_u - (3 + math.sqrt(5)) / 2)
    e_v = abs(ed.v_u[1] / ed.v_u[0] - (math.sqrt(5) - 1) / 2)
    ok = e_mu <= 1e-12 and e_v <= 1e-12 and dt < 1e-3
    record(1, ok, f"|mu_u err|={e_mu:.1e} |v_u slope err|={e_v:.1e} time={dt * 1e3:.3f}ms")


def test_2_cw_metric_suite():
    t0 = time.perf_counter()
    parts = []
    ok = True
    for spec in (systems.torus(0.0), systems.sphere(0.0)):
        ctx = cwmetric.make_context(spec, 0.1)
        rep = cwmetric.check_cw_metric_theorem(spec, ctx, trials=1000, rng_seed=0)
        v = rep["violations"]
        ok &= v["rho_le_4D"] == 0 and v["hyperbolicity"] == 0 and v["frink"] == 0
        parts.append(f"{spec.space}: m={rep['m']} violations={v}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    record(2, ok, "; ".join(parts) + f" time={dt:.1f}s")


def test_3_linear_oracle():
    spec = systems.torus(0.0)
    t0 = time.perf_counter()
    lad = _ladder(spec)
    pos = _pseudo_orbits(spec, 1e-4)
    res = sh.shadow_constructive_batch(pos, lad)
    gap = max(float(spaces.torus_dist_arr(r.z, sh.shadow_linear_oracle(p))) for p, r in zip(pos, res))
    ver = [sh.verify_shadowing(p, r.z, BETA) for p, r in zip(pos, res)]
    md = max(v[1] for v in ver)
    good = sum(v[0] for v in ver)
    dt = time.perf_counter() - t0
    ok = gap <= 1e-8 and good == N_RUNS and md <= BETA and dt < 60
    record(3, ok, f"oracle gap={gap:.2e} verified={good}/{N_RUNS} max_dev={md:.2e} time={dt:.1f}s")


def test_4_sphere_shadowing():
    t0 = time.perf_counter()
    parts = []
    ok = True
    for t in (0.0, 1.0):
        spec = systems.sphere(t)
        conj = conjugacy.default_field(1.0) if t else None
        lad = _ladder(spec, conj)
        pos = _pseudo_orbits(spec, 1e-4, seed0=1)
        res = sh.shadow_constructive_batch(pos, lad, conj, on_failure="mark")
        fails = sum(not math.isfinite(r.max_dev) for r in res)
        ver = [sh.verify_shadowing(p, r.z, BETA) for p, r in zip(pos, res)]
        good = sum(v[0] for v in ver)
        md = max(max(r.max_dev for r in res), max(v[1] for v in ver))
        hist = {}
        for r in res:
            for k, c in r.branch_hist.items():
                hist[k] = hist.get(k, 0) + c
        ok &= fails == 0 and good == N_RUNS and md <= BETA and len(hist) > 0
        parts.append(f"t={t:g}: max_dev={md:.2e} bracket_failures={fails} verified={good} branches={hist}")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    record(4, ok, "; ".join(parts) + f" time={dt:.1f}s")


def test_5_limit_shadowing():
    parts = []
    ok = True
    for spec in (systems.torus(0.0), systems.torus(1.0), systems.sphere(0.0), systems.sphere(1.0)):
        conj = conjugacy.default_field(1.0) if spec.t else None
        lad = _ladder(spec, conj)
        pos = _pseudo_orbits(spec, 1e-4, decaying=True, seed0=2)
        res = sh.shadow_constructive_batch(pos, lad, conj)
        n_ok = sum(r.limit_ok and sh.verify_limit_shadowing(p, r.z) for p, r in zip(pos, res))
        ok &= n_ok == N_RUNS
        parts.append(f"{spec.space} t={spec.t:g}: {n_ok}/{N_RUNS}")
    record(5, ok, "limit_ok " + "; ".join(parts))


def test_6_cwN_certificates():
    t0 = time.perf_counter()
    tor = analyzer.cwN_certificate(systems.torus(0.0), 0.1, 200)
    sph = analyzer.cwN_certificate(systems.sphere(0.0), 0.1, 200)
    near = int((sph.singular_distances() < 0.1).sum())
    g = systems.sphere(0.0)
    prod = analyzer.product_cw_analysis([g, g], 0.1, 200)
    reverified = sph.reverify() and prod.reverify()
    dt = time.perf_counter() - t0
    ok = (tor.max_count == 1 and sph.max_count == 2 and near >= 10 and prod.max_count == 4
          and reverified and dt < 600)
    record(6, ok, f"torus={tor.max_count} sphere={sph.max_count} (witnesses near singular: {near}) "
                  f"g_A x g_A={prod.max_count} reverified={reverified} time={dt:.1f}s")


def test_7_conjugacy():
    spec = systems.torus(1.0)
    t0 = time.perf_counter()
    q = conjugacy.franks_solve(spec, K=40, grid_n=512)
    res = conjugacy.verify_semiconjugacy(spec, q, 512)
    odd = q.oddness_residual()
    Y = np.random.default_rng(0).random((10_000, 2))
    X = conjugacy.invert_h(q, Y, check=False)
    rt = float(spaces.torus_dist_arr(conjugacy.h_full(q, X), Y).max())
    con = conjugacy.measure_contraction(spec, 10, 512)
    dt = time.perf_counter() - t0
    ok = res <= 1e-6 and odd <= 1e-10 and rt <= 1e-9 and con["max_factor"] <= 1.1 and dt < 120
    record(7, ok, f"residual={res:.1e} oddness={odd:.1e} round_trip={rt:.1e} "
                  f"contraction_factor={con['max_factor']:.5f} time={dt:.1f}s")


def test_8_periodic_census():
    spec = systems.torus(0.0)
    oracle = [round(abs(np.linalg.det(np.linalg.matrix_power(spec.A, k) - np.eye(2)))) for k in range(1, 7)]
    assert oracle == [1, 5, 16, 45, 121, 320]
    counts = [sh.periodic_census(spec, k).count for k in range(1, 7)]
    ok = counts == oracle
    stable = []
    for t in (0.0, 1.0):
        sp = systems.sphere(t)
        for k in (1, 2, 3):
            c = sh.periodic_census(sp, k)
            c2 = sh.periodic_census(sp, k, newton_grid=2 * c.grid)
            stable.append((t, k, c.count, c2.count))
            ok &= c.count == c2.count and c.count > 0
    record(8, ok, f"torus {counts}; sphere (t, k, count, refined) {stable}")


def test_9_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    commands = [
        ["shadow", "--spec", "sphere:1", "--beta", "0.05", "--delta", "1e-4", "--len", "1000",
         "--runs", "10", "--seed", "7"],
        ["cwmetric", "--spec", "sphere", "--samples", "100", "--seed", "3"],
        ["analyze", "cwn", "--spec", "sphere", "--eps", "0.08", "--grid", "200"],
        ["analyze", "census", "--spec", "torus", "--k", "3"],
        ["conjugacy", "--t", "1", "--grid", "128", "--terms", "40", "--seed", "0", "--probe-grid", "128"],
    ]
    with_svg = {0, 2}
    same = 0
    for i, c in enumerate(commands):
        blobs = []
        for rep in range(2):
            out = tmp_path / f"a{i}_{rep}.json"
            svg = tmp_path / f"a{i}_{rep}.svg"
            args = c + ["--out", str(out)] + (["--svg", str(svg)] if i in with_svg else [])
            assert cli.main(args) == 0
            blobs.append(out.read_bytes() + (svg.read_bytes() if i in with_svg else b""))
        same += blobs[0] == blobs[1]
    record(9, same == len(commands), f"byte-identical reruns (artifact + figure) {same}/{len(commands)}")
