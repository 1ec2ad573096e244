import math

import numpy as np
import pytest

from cwhyp import continua, cwmetric as cw, systems
from cwhyp.cwmetric import CwContext


def test_context_validation():
    with pytest.raises(ValueError):
        CwContext(0.3, 2)
    with pytest.raises(ValueError):
        CwContext(0.1, 0)
    assert CwContext(0.1, 2).lam == pytest.approx(2 ** -0.5)


def test_expansion_time_of_unstable_segment(torus0):
    # first n with diam(f^n C) > eps: 0.01 mu^n > 0.1  ->  n = 3
    ed = systems.eigenstructure(torus0)
    ctx = CwContext(0.1, 2)
    C = continua.make_segment((0.3, 0.3), ed.v_u, 0.01, 0.0025)
    assert cw.expansion_time(C, torus0, ctx) == math.ceil(math.log(10) / math.log(ed.mu_u))


def test_rho_and_D_bounds(torus0):
    ed = systems.eigenstructure(torus0)
    ctx = CwContext(0.1, 2)
    C = continua.make_segment((0.3, 0.3), ed.v_u, 0.02, 0.0025)
    r = cw.rho(C, torus0, ctx)
    D = cw.chain_D(C, torus0, ctx)
    assert D <= r + 1e-12 and r <= 4 * D + 1e-12


def test_estimate_m(torus0, sphere0):
    # frozen from a 400-sample run; at least the expansion time of a stable eps-segment
    assert cw.estimate_m(torus0, 0.1, 400, 0) == 2
    assert cw.estimate_m(sphere0, 0.1, 400, 0) == 2


@pytest.mark.parametrize("which", ["torus0", "sphere0"])
def test_theorem_suite_small(which, request):
    spec = request.getfixturevalue(which)
    ctx = cw.make_context(spec, 0.1)
    rep = cw.check_cw_metric_theorem(spec, ctx, trials=60, rng_seed=3)
    assert rep["violations"] == {"hyperbolicity": 0, "frink": 0, "compatibility": 0, "rho_le_4D": 0}
    assert set(rep) >= {"m", "lambda", "violations", "samples", "seed"}


def test_compatibility_moduli_are_monotone(torus0):
    ctx = cw.make_context(torus0, 0.1)
    mod = cw.compatibility_moduli(torus0, ctx, samples=100)
    d = np.logspace(-6, -1, 6)
    ga = [mod.gamma_a(x) for x in d]
    assert all(a <= b for a, b in zip(ga, ga[1:]))
    assert all(g > 0 for g in ga)
