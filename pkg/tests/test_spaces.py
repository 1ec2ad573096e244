import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwhyp import spaces
from cwhyp.spaces import ProductPoint, TorusPoint

coord = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def test_reduce_wraps_into_unit_square():
    p = spaces.reduce((1.25, -0.25))
    assert (p.x, p.y) == (0.25, 0.75)
    # -1e-20 % 1 rounds to 1.0; it must come back as 0
    assert spaces.reduce((-1e-20, 0.0)).x == 0.0


def test_torus_distance_is_flat_quotient():
    assert spaces.torus_dist(TorusPoint(0.05, 0.0), TorusPoint(0.95, 0.0)) == pytest.approx(0.1)
    assert spaces.torus_dist(TorusPoint(0.5, 0.5), TorusPoint(0.0, 0.0)) == pytest.approx(math.sqrt(0.5))


def test_sphere_identifies_antipodes():
    a = spaces.canonicalize((0.25, 0.375))
    b = spaces.canonicalize((0.75, 0.625))
    assert a == b
    # -0.8 mod 1 is not exactly 0.2, so only the distance is exact in general
    c = spaces.canonicalize((0.8, 0.7))
    assert spaces.sphere_dist(spaces.canonicalize((0.2, 0.3)), c) <= 1e-15


def test_singular_points_are_the_four_half_lattice_classes():
    S = spaces.singular_points()
    assert len(S) == 4
    for s in S:
        assert spaces.canonicalize(spaces.antipode(s.rep)) == s


def test_product_metric_is_max():
    a = ProductPoint((TorusPoint(0, 0), spaces.canonicalize((0.1, 0.1))))
    b = ProductPoint((TorusPoint(0.03, 0), spaces.canonicalize((0.9, 0.9))))
    assert spaces.dist(a, b) == pytest.approx(0.03)


def test_mixed_types_are_rejected():
    with pytest.raises(TypeError):
        spaces.dist(TorusPoint(0, 0), spaces.canonicalize((0, 0)))


@given(coord, coord, coord, coord, coord, coord)
@settings(max_examples=200, deadline=None)
def test_sphere_metric_axioms(a, b, c, d, e, f):
    p, q, r = (spaces.canonicalize(v) for v in ((a, b), (c, d), (e, f)))
    dpq = spaces.sphere_dist(p, q)
    assert dpq >= 0
    assert dpq == pytest.approx(spaces.sphere_dist(q, p), abs=1e-15)
    assert spaces.sphere_dist(p, r) <= dpq + spaces.sphere_dist(q, r) + 1e-12
    assert dpq <= math.sqrt(0.5) / 2 * 2 + 1e-12


@given(coord, coord)
@settings(max_examples=200, deadline=None)
def test_canonicalize_is_idempotent(a, b):
    p = spaces.canonicalize((a, b))
    assert spaces.sphere_dist(spaces.canonicalize(p.rep), p) <= 1e-15
    arr = spaces.canonicalize_arr(np.array([[a, b]]))[0]
    assert spaces.sphere_dist(spaces.canonicalize(arr), p) <= 1e-12


def test_array_and_scalar_distances_agree(rng):
    A = rng.uniform(-2, 2, (100, 2))
    B = rng.uniform(-2, 2, (100, 2))
    d = spaces.quotient_dist_arr(A, B, spaces.SPHERE)
    for i in range(100):
        assert d[i] == pytest.approx(spaces.sphere_dist(spaces.canonicalize(A[i]), spaces.canonicalize(B[i])),
                                     abs=1e-12)


def test_nearest_lift_picks_the_closest_representative():
    ref = np.array([0.02, 0.5])
    c = spaces.nearest_lift(np.array([0.97, 0.5]), ref, spaces.TORUS)
    assert np.allclose(c, [-0.03, 0.5])
    c = spaces.nearest_lift(np.array([0.99, 0.49]), ref, spaces.SPHERE)
    assert np.allclose(c, [0.01, 0.51])
