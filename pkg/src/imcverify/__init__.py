"""Sound interval Markov chain abstraction of discrete-time stochastic
systems via noise-domain partitioning, with robust reach-avoid verification,
clustering-based improvement and Monte Carlo validation."""

from .geometry import (
    Box,
    Interval,
    StatePartition,
    box_contains,
    box_intersects,
    partition_domain,
)
from .dynamics import (
    DynamicsModel,
    eval_point,
    interval_extension,
    parse_dynamics,
    posterior,
    posterior_f,
)
from .noise import (
    Mixture,
    NoiseCell,
    NoiseModel,
    PartitionPair,
    TruncatedGaussian,
    Uniform,
    cell_probability,
    optimal_partition_affine,
    optimal_partition_multiplicative,
    uniform_noise_grid,
)
from .imc import (
    Imc,
    PosteriorTable,
    TransitionBound,
    build_imc,
    transition_bounds_general,
    transition_bounds_structured,
    unsafe_transitions,
)
from .verify import (
    ReachAvoidSpec,
    VerificationResult,
    adversary_extreme_expectation,
    classify,
    robust_value_iteration,
)
from .cluster import ClusterProposal, cluster_improve, select_cluster
from .mc import (
    ReachAvoidRegions,
    Trajectory,
    estimate_satisfaction,
    sample_noise,
    simulate,
)
from .config import RunConfig, load_config
from .pipeline import run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ClusterProposal",
    "DynamicsModel",
    "Imc",
    "Interval",
    "Mixture",
    "NoiseCell",
    "NoiseModel",
    "PartitionPair",
    "PosteriorTable",
    "ReachAvoidRegions",
    "ReachAvoidSpec",
    "RunConfig",
    "StatePartition",
    "Trajectory",
    "TransitionBound",
    "TruncatedGaussian",
    "Uniform",
    "VerificationResult",
    "adversary_extreme_expectation",
    "box_contains",
    "box_intersects",
    "build_imc",
    "cell_probability",
    "classify",
    "cluster_improve",
    "estimate_satisfaction",
    "eval_point",
    "interval_extension",
    "load_config",
    "optimal_partition_affine",
    "optimal_partition_multiplicative",
    "parse_dynamics",
    "partition_domain",
    "posterior",
    "posterior_f",
    "robust_value_iteration",
    "run_pipeline",
    "sample_noise",
    "select_cluster",
    "simulate",
    "transition_bounds_general",
    "transition_bounds_structured",
    "uniform_noise_grid",
    "unsafe_transitions",
]
