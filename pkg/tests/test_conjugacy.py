import numpy as np
import pytest

from cwhyp import conjugacy as cj, spaces, systems
from cwhyp.conjugacy import OddPeriodicField


def test_t0_field_vanishes():
    q = cj.franks_solve(systems.torus(0.0), K=10, grid_n=64)
    assert q.sup_norm() == 0.0


def test_series_solution_is_a_semiconjugacy(q1):
    spec = systems.torus(1.0)
    assert cj.verify_semiconjugacy(spec, q1, 128) <= 1e-6
    assert q1.oddness_residual() <= 1e-10
    assert cj.verify_sphere_descent(q1, 50)["ok"]


def test_truncation_bound_is_honest():
    spec = systems.torus(1.0)
    for K in (5, 10, 20):
        q = cj.franks_solve(spec, K=K, grid_n=64)
        assert cj.verify_semiconjugacy(spec, q, 64) <= 1.01 * cj.truncation_bound(spec, K) + 1e-14


def test_iterated_solution_converges_to_series():
    # the grid recursion carries bilinear interpolation error; q is only
    # Hoelder, so the error falls slowly (about n^-0.7)
    spec = systems.torus(1.0)
    err = []
    for n in (64, 128):
        a = cj.franks_solve(spec, 40, n)
        b = cj.franks_solve(spec, 40, n, method="iterate")
        err.append(np.abs(a.values - b.values).max())
    assert err[1] < 0.8 * err[0] and err[1] < 2e-3


def test_contraction_rates():
    m = cj.measure_contraction(systems.torus(1.0), 10, 128)
    assert m["max_factor"] <= 1.1


def test_inversion(q1, rng):
    Y = rng.random((500, 2))
    X = cj.invert_h(q1, Y)
    assert spaces.torus_dist_arr(cj.h_full(q1, X), Y).max() <= 1e-9


def test_field_file_round_trip(tmp_path, q1):
    p = tmp_path / "h.field"
    q1.save(p)
    head = p.read_bytes().split(b"\n", 1)[0]
    assert b'"grid_n": 256' in head
    q2 = OddPeriodicField.load(p)
    assert np.array_equal(q2.values, q1.values) and q2.t == 1.0 and q2.K == 40


def test_bad_arguments():
    with pytest.raises(ValueError):
        cj.franks_solve(systems.torus(1.0), K=0)
    with pytest.raises(ValueError):
        cj.franks_solve(systems.torus(1.0), grid_n=100)
