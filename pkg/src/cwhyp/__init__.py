"""Continuum-wise hyperbolic dynamics on the torus, the sphere and products.

Modules: spaces, systems, continua, cwmetric, foliation, shadowing,
conjugacy, analyzer, figures, cli.  Set CWHYP_NO_NUMBA=1 to run the
hot loops without numba.
"""
__version__ = "0.1.0"
