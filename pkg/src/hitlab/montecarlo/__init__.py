"""Monte Carlo engine: first hits, bridges, sausages and drift experiments."""
from .core import (HitBatch, HitSample, ResourceError, SimConfig, drifted_hit, first_hit, hit_histogram,
                   run_chunks, simulate, site_histogram, uniform_sphere)
from .drift import cameron_martin_pair, intervals_overlap, paired_z, standard_functionals
from .renewal import (Radii, default_radii, derived_seed, lambda_profile_mc, point_hit_probability,
                      sphere_hit_probability)
from .sausage import BridgeSampler, bridge_paths, sausage_volume_mc
from .stats import Accumulator, Estimate, Histogram, estimate_of

__all__ = [
    "Accumulator", "BridgeSampler", "Estimate", "Histogram", "HitBatch", "HitSample", "Radii",
    "ResourceError", "SimConfig", "bridge_paths", "cameron_martin_pair", "intervals_overlap", "paired_z", "standard_functionals", "default_radii", "derived_seed", "drifted_hit",
    "estimate_of", "first_hit", "hit_histogram", "lambda_profile_mc", "point_hit_probability",
    "run_chunks", "sausage_volume_mc", "simulate", "site_histogram", "sphere_hit_probability",
    "uniform_sphere",
]
