"""Subordinate processes among Poisson obstacles on the Sierpinski gasket.

Numerical laboratory for the annealed integrated density of states of
subordinate Brownian motion on the gasket with a Poissonian potential.
"""
from .gasket import D_F, D_S, D_W, GasketGraph

__version__ = "0.1.0"

__all__ = ["D_F", "D_S", "D_W", "GasketGraph", "__version__"]
