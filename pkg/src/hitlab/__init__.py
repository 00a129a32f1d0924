"""hitlab: first-hitting asymptotics for Brownian motion checked against simulation.

Submodules
----------
specfun      Bessel K, Gegenbauer polynomials, incomplete gamma, N(lambda), g_alpha
geometry     compact sets built from balls, boxes, segments and cylinders
asymptotics  closed-form hitting densities, tails and sausage volumes
montecarlo   first-hit, bridge and sausage simulation with reproducible seeding
potential    capacity, escape probabilities, Robin constant, harmonic measure
harness      JSON experiment configs and the ``hitlab`` command line
"""
from . import asymptotics, geometry, montecarlo, potential, specfun
from .geometry import ShapeSpec
from .montecarlo import Estimate, ResourceError, SimConfig
from .specfun import DomainError

__version__ = "0.1.0"

__all__ = ["DomainError", "Estimate", "ResourceError", "ShapeSpec", "SimConfig", "asymptotics", "geometry",
           "montecarlo", "potential", "specfun", "__version__"]
