import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwhyp import continua, foliation as fo, spaces, systems
from cwhyp.foliation import ConjugacyMissing, EmptyIntersection


def _lift_enumeration(spec, x, y, eps):
    """Brute force: all lattice shifts m and signs with x + s v_u = sg y + m + r v_s."""
    ed = systems.eigenstructure(spec)
    M = np.stack([ed.v_u, -ed.v_s], axis=1)
    out = []
    signs = (1, -1) if spec.chart == spaces.SPHERE else (1,)
    for sg in signs:
        for i in range(-2, 3):
            for j in range(-2, 3):
                s, r = np.linalg.solve(M, sg * np.asarray(y) + (i, j) - np.asarray(x))
                if abs(s) <= eps / 2 and abs(r) <= eps / 2:
                    z = np.asarray(x) + s * ed.v_u
                    if all(spaces.quotient_dist_arr(z, w, spec.chart) > fo.DEDUP_TOL for w in out):
                        out.append(z)
    return out


def test_linear_leaf_has_diameter_eps(torus0):
    L = fo.leaf(torus0, (0.3, 0.3), fo.STABLE, 0.1)
    assert continua.continuum_diam(L.continuum) == pytest.approx(0.1)
    ed = systems.eigenstructure(torus0)
    d = L.continuum.q - L.continuum.p
    assert abs(d @ ed.w_u) < 1e-15


def test_bracket_examples(torus0):
    S = fo.bracket(torus0, (0.3, 0.3), (0.3, 0.3), 0.1)
    assert len(S) == 1 and np.allclose(S.points[0], (0.3, 0.3))
    S = fo.bracket(torus0, (0.0, 0.0), (0.01, 0.0), 0.1)
    assert len(S) == 1


def test_sphere_near_singular_class_gives_two_points(sphere0):
    ed = systems.eigenstructure(sphere0)
    x = np.array([0.5, 0.5]) + 0.01 * ed.v_u + 0.015 * ed.v_s
    S = fo.bracket(sphere0, x, x, 0.1)
    assert len(S) == 2
    assert min(spaces.quotient_dist_arr(S.points, x, spaces.SPHERE)) < 1e-12


def test_far_points_raise_with_diagnostics(torus0):
    with pytest.raises(EmptyIntersection) as e:
        fo.bracket(torus0, (0.1, 0.1), (0.4, 0.3), 0.05)
    assert "dist" in e.value.diagnostics


def test_t_positive_needs_the_conjugacy():
    with pytest.raises(ConjugacyMissing):
        fo.bracket(systems.torus(1.0), (0.1, 0.1), (0.1, 0.1), 0.1)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(-0.03, 0.03), st.floats(-0.03, 0.03),
       st.sampled_from(["torus", "sphere"]))
@settings(max_examples=60, deadline=None)
def test_bracket_matches_lift_enumeration(a, b, da, db, chart):
    spec = systems.MapSpec(chart)
    x = np.array([a, b])
    y = x + (da, db)
    Z, count = fo.bracket_batch(spec, x[None], y[None], 0.1)
    oracle = _lift_enumeration(spec, x, y, 0.1)
    assert count[0] == len(oracle)
    for z in oracle:
        assert min(spaces.quotient_dist_arr(Z[0, :count[0]], z, chart)) < 2 * fo.DEDUP_TOL


def test_membership_rejects_a_shifted_point(torus0):
    x = np.array([[0.3, 0.3]])
    ed = systems.eigenstructure(torus0)
    ok, _ = fo.verify_membership(torus0, x, x, x, 0.1)
    assert ok[0]
    bad = x + 0.02 * ed.v_s + 0.02 * ed.v_u
    ok, _ = fo.verify_membership(torus0, bad, x, x, 0.1)
    assert not ok[0]


def test_calibrate_returns_a_working_delta(torus0):
    cal = fo.calibrate(torus0, 0.1, probe_grid=6)
    assert 0 < cal["delta"] <= 0.1
    assert cal["census"][-1]["failures"] == 0


def test_perturbed_bracket_and_leaf(q1):
    spec = systems.torus(1.0)
    x = np.array([0.2, 0.3])
    S = fo.bracket(spec, x, x + 0.004, 0.1, conj=q1)
    assert len(S) == 1
    L = fo.leaf(spec, x, fo.UNSTABLE, 0.1, conj=q1)
    assert continua.continuum_diam(L.continuum) <= 0.1 * (1 + 1e-12)
    assert continua.continuum_diam(L.continuum) > 0.05


def test_sphere_bracket_cardinality_is_at_most_two(sphere0):
    g = (np.arange(200) + 0.5) / 200
    X = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    _, count = fo.bracket_batch(sphere0, X, X, 0.1)
    assert count.max() == 2 and count.min() == 1
