"""Entropy estimates, channel models, coding schemes and rate bounds for
estimating the state of a dynamical system over a noisy channel."""

from estent.systems import (NoiseSpec, SystemModel, TrajectoryBlock, catalog, child_seed,
                            orbit_distance, orbits, simulate)
from estent.entropy import (EntropyEstimate, EntropyGridSpec, count_separated, count_spanning,
                            entropy_growth_curve, estimate_fibered_entropy,
                            estimate_katok_metric_entropy, estimate_topological_entropy)
from estent.channels import Channel, block_transmit, bsc, capacity, erasure, general, noiseless, transmit
from estent.coding import (BlockCode, BudgetError, InvariantViolation, MemorylessQuantizer,
                           SpanningScheme, ZoomScheme, build_block_code,
                           build_memoryless_quantizer, build_spanning_scheme, build_zoom_scheme,
                           run_spanning_scheme, run_zoom_scheme, stability_margin)
from estent.bounds import (BoundReport, ar_rate_distortion, conditional_entropy_rate, density_norm,
                           gl_capacity_lower, gl_capacity_upper, linear_entropy,
                           shannon_lower_bound, zoom_capacity_upper)
from estent.harness import CopyScheme, MemorylessScheme, ObjectiveReport, capacity_sweep, evaluate

__version__ = "0.1.0"

__all__ = [
    "NoiseSpec",
    "SystemModel",
    "TrajectoryBlock",
    "catalog",
    "child_seed",
    "orbit_distance",
    "orbits",
    "simulate",
    "EntropyEstimate",
    "EntropyGridSpec",
    "count_separated",
    "count_spanning",
    "entropy_growth_curve",
    "estimate_fibered_entropy",
    "estimate_katok_metric_entropy",
    "estimate_topological_entropy",
    "Channel",
    "block_transmit",
    "bsc",
    "capacity",
    "erasure",
    "general",
    "noiseless",
    "transmit",
    "BlockCode",
    "BudgetError",
    "InvariantViolation",
    "MemorylessQuantizer",
    "SpanningScheme",
    "ZoomScheme",
    "build_block_code",
    "build_memoryless_quantizer",
    "build_spanning_scheme",
    "build_zoom_scheme",
    "run_spanning_scheme",
    "run_zoom_scheme",
    "stability_margin",
    "BoundReport",
    "ar_rate_distortion",
    "conditional_entropy_rate",
    "density_norm",
    "gl_capacity_lower",
    "gl_capacity_upper",
    "linear_entropy",
    "shannon_lower_bound",
    "zoom_capacity_upper",
    "CopyScheme",
    "MemorylessScheme",
    "ObjectiveReport",
    "capacity_sweep",
    "evaluate",
    "__version__",
]
