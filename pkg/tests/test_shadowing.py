import math

import numpy as np
import pytest

from cwhyp import cwmetric, shadowing as sh, spaces, systems
from cwhyp.shadowing import LadderError


@pytest.fixture(scope="module")
def ladder_t0():
    spec = systems.torus(0.0)
    return sh.derive_ladder(0.05, cwmetric.make_context(spec, 0.1), spec)


def test_pseudo_orbit_has_bounded_steps(torus0):
    po = sh.gen_pseudo_orbit(torus0, (0.2, 0.3), 200, 1e-3, rng_seed=4)
    assert len(po) == 200 and po.delta <= 1e-3
    assert np.allclose(sh.step_errors(torus0, po.points), po.step_errors)
    dec = sh.gen_pseudo_orbit(torus0, (0.2, 0.3), 200, 1e-3, decaying=True, rng_seed=4)
    assert dec.step_errors[-20:].max() < 1e-3 * 2 ** (-170 / 20)


def test_ladder_inequalities_hold(ladder_t0):
    assert all(ok for _, _, _, ok in ladder_t0.checks)
    assert ladder_t0.eps_prime == pytest.approx(0.05 / 3)
    assert 4 * ladder_t0.lam ** ladder_t0.n_block * ladder_t0.xi < ladder_t0.gamma
    # the certified alpha underflows; operation falls back to eps'
    assert "alpha" in ladder_t0.underflow
    eps, block, certified = ladder_t0.operational(1e-4)
    assert eps == ladder_t0.eps_prime and block == 4 and not certified


def test_strict_ladder_raises_on_underflow(torus0):
    with pytest.raises(LadderError):
        sh.derive_ladder(0.05, cwmetric.make_context(torus0, 0.1), torus0, strict=True)


def test_linear_oracle_agreement(torus0, ladder_t0):
    pos = [sh.gen_pseudo_orbit(torus0, np.random.default_rng(i).random(2), 300, 1e-4, rng_seed=i)
           for i in range(10)]
    res = sh.shadow_constructive_batch(pos, ladder_t0)
    for po, r in zip(pos, res):
        assert spaces.torus_dist_arr(r.z, sh.shadow_linear_oracle(po)) <= 1e-8
        ok, md, _ = sh.verify_shadowing(po, r.z, 0.05)
        assert ok and md <= 0.05


def test_exact_orbit_shadows_itself(torus0, ladder_t0):
    po = sh.gen_pseudo_orbit(torus0, (0.3, 0.4), 200, 0.0, rng_seed=1)
    r = sh.shadow_constructive(po, ladder=ladder_t0)
    assert r.max_dev <= 1e-9


def test_wrong_shadow_point_fails_verification(torus0, ladder_t0):
    po = sh.gen_pseudo_orbit(torus0, (0.3, 0.4), 500, 1e-4, rng_seed=2)
    r = sh.shadow_constructive(po, ladder=ladder_t0)
    ed = systems.eigenstructure(torus0)
    eps = 0.05
    z_bad = r.z + 2 * eps * ed.v_u
    ok, md, _ = sh.verify_shadowing(po, z_bad, eps)
    assert not ok and md > eps


def test_decaying_orbit_is_limit_shadowed(torus0, ladder_t0):
    po = sh.gen_pseudo_orbit(torus0, (0.3, 0.4), 1000, 1e-4, decaying=True, rng_seed=5)
    r = sh.shadow_constructive(po, ladder=ladder_t0)
    assert r.limit_ok and sh.verify_limit_shadowing(po, r.z)
    # a constant-noise orbit does not decay
    po = sh.gen_pseudo_orbit(torus0, (0.3, 0.4), 1000, 1e-4, rng_seed=5)
    assert not sh.verify_limit_shadowing(po, sh.shadow_constructive(po, ladder=ladder_t0).z)


def test_sphere_shadowing_records_branches(sphere0):
    lad = sh.derive_ladder(0.05, cwmetric.make_context(sphere0, 0.1), sphere0)
    pos = [sh.gen_pseudo_orbit(sphere0, np.random.default_rng(i).random(2), 400, 1e-4, rng_seed=i)
           for i in range(8)]
    res = sh.shadow_constructive_batch(pos, lad)
    assert all(r.max_dev <= 0.05 for r in res)
    assert all(set(r.branch_hist) <= {1, 2} for r in res)


def test_periodic_census_torus_matches_determinant(torus0):
    A = torus0.A
    for k in (1, 2, 3, 4):
        expect = round(abs(np.linalg.det(np.linalg.matrix_power(A, k) - np.eye(2))))
        assert sh.periodic_census(torus0, k).count == expect


def test_period_two_points_are_the_explicit_solutions(torus0):
    # (A^2 - I) x = m has the 5 solutions x = (A^2 - I)^-1 m mod Z^2
    from fractions import Fraction as F
    M = [[4, 3], [3, 1]]
    det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    inv = [[F(M[1][1], det), F(-M[0][1], det)], [F(-M[1][0], det), F(M[0][0], det)]]
    sols = set()
    for i in range(-6, 7):
        for j in range(-6, 7):
            x = (inv[0][0] * i + inv[0][1] * j) % 1
            y = (inv[1][0] * i + inv[1][1] * j) % 1
            sols.add((x, y))
    assert len(sols) == 5
    got = sh.periodic_census(torus0, 2).points
    for s in sols:
        assert spaces.torus_dist_arr(got, np.array([float(s[0]), float(s[1])])).min() < 1e-9


def test_sphere_census_is_grid_stable(sphere0):
    c = sh.periodic_census(sphere0, 2)
    assert sh.periodic_census(sphere0, 2, newton_grid=2 * c.grid).count == c.count == 7
