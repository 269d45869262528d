"""Pseudospectral simulator for the skew mean curvature flow in the good gauge.

The flow of a codimension-two graph in R^{d+2} is evolved through its complex
mean curvature psi; harmonic coordinates and a Coulomb normal frame make the
evolution a quasilinear Schroedinger equation whose coefficient fields
(lambda, h, V, A, B) are recovered elliptically at every stage.  The package
also reconstructs the moving surface from the gauge data and verifies every
propagated constraint numerically.
"""

__version__ = "0.1.0"

from .grid import GridSpec, Grid, make_grid
from .lp import LPFamily
from .gauge import GaugeState, PicardConfig, picard_solve_gauge, \
    constraint_residuals
from .evolution import EvolutionConfig, evolve
from .config import RunConfig, load_config

__all__ = [
    "GridSpec", "Grid", "make_grid", "LPFamily",
    "GaugeState", "PicardConfig", "picard_solve_gauge", "constraint_residuals",
    "EvolutionConfig", "evolve", "RunConfig", "load_config", "__version__",
]
