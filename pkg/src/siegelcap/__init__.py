"""Heisenberg-group potential theory and Carleson measures for Hardy-Sobolev
spaces on the Siegel upper half-space.

Modules
-------
geometry    group law, gauge distance, Siegel coordinates, ball families
kernels     Riesz, Hardy-Sobolev reproducing and Poisson kernels
quadrature  seeded Monte-Carlo integration and importance samplers
potential   Riesz potentials, maximal functions, Riesz capacity
carleson    tents, subcapacitary ratios, Gram systems, Carleson quotients
cli         batch driver writing JSON reports and CSV tables
"""
__version__ = "0.1.0"

from . import carleson, geometry, kernels, potential, quadrature  # noqa: E402
from .carleson import CarlesonEmbedding, KernelCombo  # noqa: E402
from .geometry import BallFamily, Heisenberg  # noqa: E402
from .potential import AtomicMeasure, GridDensity, GridSpec, RieszCapacity  # noqa: E402

__all__ = ["__version__", "geometry", "kernels", "quadrature", "potential", "carleson",
           "BallFamily", "Heisenberg", "AtomicMeasure", "GridDensity", "GridSpec",
           "RieszCapacity", "KernelCombo", "CarlesonEmbedding"]
