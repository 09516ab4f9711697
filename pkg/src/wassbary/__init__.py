"""Wasserstein barycenters of empirical measures via smoothed optimal transport.

The package pairs an exact transportation-LP oracle with entropically
smoothed Sinkhorn solvers, and builds two barycenter estimators on top:
weights on a fixed support (accelerated entropic mirror descent) and free
atom locations (alternating weight and quadratic location steps, the
constrained-clustering generalization of Lloyd's algorithm).
"""

from .exact import (
    DualPotentials,
    InstanceTooLargeError,
    TransportPlan,
    brute_force_cost,
    solve_dual,
    solve_primal,
)
from .fixed_support import (
    BarycenterTrace,
    FixedSupportBarycenter,
    TraceRecord,
    barycenter_subgradient,
    minimize_weights,
    mirror_step,
)
from .free_support import FreeSupportBarycenter, lloyd_kmeans, newton_location_update
from .measures import (
    CostMatrix,
    DiscreteMeasure,
    EntropyLevelSet,
    FullSimplex,
    UniformSingleton,
    build_cost_matrix,
    entropy,
    grid_support,
    measure_from_image,
    normalize_weights,
    parse_constraint,
)
from .sinkhorn import (
    LogScalingPair,
    NotConvergedError,
    ScalingPair,
    SinkhornUnderflowError,
    SmoothedSolution,
    TransportBatch,
    auto_lambda,
    gibbs_kernel,
    log_domain_plan,
    sinkhorn_log_domain,
    sinkhorn_scaling,
    smoothed_dual_alpha,
    smoothed_dual_objective,
    smoothed_primal,
    smoothed_transport,
    smoothed_transport_batch,
)

__version__ = "0.1.0"

__all__ = [
    "BarycenterTrace",
    "CostMatrix",
    "DiscreteMeasure",
    "DualPotentials",
    "EntropyLevelSet",
    "FixedSupportBarycenter",
    "FreeSupportBarycenter",
    "FullSimplex",
    "InstanceTooLargeError",
    "LogScalingPair",
    "NotConvergedError",
    "ScalingPair",
    "SinkhornUnderflowError",
    "SmoothedSolution",
    "TraceRecord",
    "TransportBatch",
    "TransportPlan",
    "UniformSingleton",
    "auto_lambda",
    "barycenter_subgradient",
    "brute_force_cost",
    "build_cost_matrix",
    "entropy",
    "gibbs_kernel",
    "grid_support",
    "lloyd_kmeans",
    "log_domain_plan",
    "measure_from_image",
    "minimize_weights",
    "mirror_step",
    "newton_location_update",
    "normalize_weights",
    "parse_constraint",
    "sinkhorn_log_domain",
    "sinkhorn_scaling",
    "smoothed_dual_alpha",
    "smoothed_dual_objective",
    "smoothed_primal",
    "smoothed_transport",
    "smoothed_transport_batch",
    "solve_dual",
    "solve_primal",
    "__version__",
]
