import numpy as np
import pytest

from cwhyp import continua, spaces, systems
from cwhyp.continua import MarkedContinuum, NotChained, VertexBudgetExceeded


def test_segment_geometry(torus0):
    ed = systems.eigenstructure(torus0)
    C = continua.make_segment((0.3, 0.3), ed.v_u, 0.1, 0.01)
    assert len(C) == 11
    assert continua.continuum_diam(C) == pytest.approx(0.1)
    assert np.allclose(C.p, 0.3 - 0.05 * ed.v_u) and np.allclose(C.q, 0.3 + 0.05 * ed.v_u)


def test_unstable_segment_grows_by_mu_and_stays_refined(torus0):
    ed = systems.eigenstructure(torus0)
    C = continua.make_segment((0.3, 0.3), ed.v_u, 0.01, 0.001)
    D = continua.iterate_continuum(C, torus0, 2)
    assert D.max_gap() <= 0.001
    assert continua.continuum_diam(D) == pytest.approx(0.01 * ed.mu_u ** 2, rel=1e-10)
    # the marks follow the end points
    assert np.allclose(D.q - D.p, 0.01 * ed.mu_u ** 2 * ed.v_u)


def test_iterate_back_and_forth_returns_marks(torus0, rng):
    C = continua.make_segment(rng.random(2), (1.0, 0.3), 0.02, 0.002)
    D = continua.iterate_continuum(continua.iterate_continuum(C, torus0, 3), torus0, -3)
    assert np.allclose(D.p, C.p, atol=1e-12) and np.allclose(D.q, C.q, atol=1e-12)


def test_iteration_cap_and_budget(torus0):
    ed = systems.eigenstructure(torus0)
    C = continua.make_segment((0.3, 0.3), ed.v_u, 0.01, 0.001)
    with pytest.raises(ValueError):
        continua.iterate_continuum(C, torus0, 11, n_cap=10)
    with pytest.raises(VertexBudgetExceeded):
        continua.iterate_continuum(C, torus0, 12, max_vertices=1000)


def test_sphere_diameter_uses_quotient_metric(sphere0):
    # a segment through a singular class folds: its two halves are antipodal
    C = continua.make_segment((0.0, 0.0), (1.0, 0.0), 0.2, 0.01, spaces.SPHERE)
    assert continua.continuum_diam(C) == pytest.approx(0.1)


def test_subsampled_diameter_is_a_lower_bound(rng):
    V = np.cumsum(rng.normal(0, 1e-3, (6000, 2)), axis=0) + 0.5
    C = MarkedContinuum(spaces.TORUS, V, 0, 5999, 1.0)
    d, info = continua.continuum_diam_info(C, limit=500)
    assert info["subsampled"]
    from cwhyp import _kernels
    exact = _kernels.max_pairwise(V, False)
    assert d <= exact + 1e-15 and d >= 0.95 * exact


def test_chain_union_joins_and_marks():
    a = continua.make_segment((0.15, 0.5), (1, 0), 0.1, 0.02)
    b = continua.make_segment((0.25, 0.5), (1, 0), 0.1, 0.02)
    U = continua.chain_union([a, b.swapped().with_marks(0, len(b) - 1)], a.p, b.q)
    assert continua.continuum_diam(U) == pytest.approx(0.2)
    assert np.allclose(U.p, a.p) and np.allclose(U.q, b.q)
    with pytest.raises(NotChained):
        continua.chain_union([a, continua.make_segment((0.7, 0.1), (1, 0), 0.1, 0.02)], a.p, b.q)


def test_json_round_trip():
    a = continua.make_segment((0.15, 0.5), (1, 0), 0.1, 0.02)
    b = MarkedContinuum.from_json(a.to_json())
    assert np.array_equal(a.vertices, b.vertices) and (b.mark_p, b.mark_q) == (a.mark_p, a.mark_q)
