import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwhyp import spaces, systems
from cwhyp.spaces import TorusPoint
from cwhyp.systems import MapSpec, UnsupportedSpec

GOLDEN = (1 + math.sqrt(5)) / 2


def test_eigenstructure_of_the_standard_matrix(torus0):
    ed = systems.eigenstructure(torus0)
    assert abs(ed.mu_u - (3 + math.sqrt(5)) / 2) <= 1e-12
    assert abs(ed.mu_s - (3 - math.sqrt(5)) / 2) <= 1e-12
    assert abs(ed.v_u[1] / ed.v_u[0] - (math.sqrt(5) - 1) / 2) <= 1e-12
    assert abs(ed.v_s[0] / ed.v_s[1] + (math.sqrt(5) - 1) / 2) <= 1e-12
    assert np.allclose(ed.w_u @ ed.v_u, 1) and np.allclose(ed.w_u @ ed.v_s, 0)


@pytest.mark.parametrize("matrix", [((1, 1), (1, 1)), ((1, 0), (0, 1)), ((2, 0), (0, 1)), ((0, 1), (-1, 0))])
def test_non_hyperbolic_or_non_unimodular_rejected(matrix):
    with pytest.raises(UnsupportedSpec):
        MapSpec(spaces.TORUS, matrix)


def test_perturbation_only_for_standard_matrix():
    with pytest.raises(UnsupportedSpec):
        MapSpec(spaces.TORUS, ((3, 1), (2, 1)), 0.5)
    with pytest.raises(UnsupportedSpec):
        systems.torus(1.5)


def test_spec_json_round_trip():
    p = systems.product(systems.sphere(0.5), systems.torus())
    assert MapSpec.from_json(p.to_json()) == p
    assert MapSpec.from_json('{"space":"sphere","matrix":[[2,1],[1,1]],"t":0.5}') == systems.sphere(0.5)


def test_linear_map_on_known_points(torus0, sphere0):
    assert systems.apply(torus0, TorusPoint(0.5, 0.5)) == TorusPoint(0.5, 0.0)
    s = spaces.canonicalize((0.5, 0.5))
    # A (1/2, 1/2) = (3/2, 1) is the class of (1/2, 0)
    assert systems.apply(sphere0, s) == spaces.canonicalize((0.5, 0.0))


def test_product_acts_factorwise(sphere0):
    p = systems.product(sphere0, sphere0)
    x = spaces.ProductPoint((spaces.canonicalize((0, 0)), spaces.canonicalize((0.5, 0.5))))
    y = systems.apply(p, x)
    assert y.factors == (spaces.canonicalize((0, 0)), spaces.canonicalize((0.5, 0.0)))


def test_type_mismatch_raises(torus0):
    with pytest.raises(TypeError):
        systems.apply(torus0, spaces.canonicalize((0.1, 0.2)))


@given(st.floats(0, 1), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=150, deadline=None)
def test_family_is_odd_equivariant_and_invertible(t, x, y):
    spec = systems.torus(t)
    P = np.array([x, y])
    fP = systems.apply_lift_arr(spec, P)
    assert np.allclose(systems.apply_lift_arr(spec, -P), -fP, atol=1e-12)
    assert np.allclose(systems.apply_lift_arr(spec, P + [1, -2]), fP + spec.A @ [1, -2], atol=1e-11)
    assert np.allclose(systems.apply_inverse_lift_arr(spec, fP), P, atol=1e-11)


def test_jacobian_matches_finite_differences(rng):
    spec = systems.torus(0.7)
    P = rng.random((20, 2))
    J = systems.jacobian_arr(spec, P)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (systems.apply_lift_arr(spec, P + e) - systems.apply_lift_arr(spec, P - e)) / (2 * h)
        assert np.allclose(J[:, :, k], fd, atol=1e-7)


def test_lipschitz_constant(torus0):
    assert systems.lipschitz(torus0) == pytest.approx(GOLDEN ** 2)
    assert systems.lipschitz(systems.torus(1.0)) >= systems.lipschitz(torus0)


def test_orbit_reduces(torus0):
    O = systems.orbit_arr(torus0, np.array([0.1, 0.2]), 5)
    assert O.shape == (5, 2)
    assert ((O >= 0) & (O < 1)).all()
    assert np.allclose(O[1], [0.4, 0.3])
