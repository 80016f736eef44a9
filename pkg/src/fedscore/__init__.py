"""Heterogeneity-aware, communication-efficient distributed inference.

Site-specific nuisance parameters, density-ratio-tilted surrogate
efficient scores, a simulated multi-site network with exact
communication accounting, baselines, variance estimation, and a
Monte-Carlo replication harness.
"""

from .estimators import (
    EstimateReport,
    SolverConfig,
    algorithm1,
    algorithm2,
    average_estimator,
    combine_initial,
    homogeneous_surrogate,
    modified_algorithm,
    one_step,
    pooled_mle,
)
from .inference import average_variance, ci, infer, tilted_variance, wald
from .model import (
    GaussianFamily,
    LogisticFamily,
    ModelFamily,
    Observation,
    ParameterPartition,
    SiteData,
    make_family,
)
from .network import CommLedger, Message, MessageKind, SiteNode, load_manifest, sites_from_data
from .score import (
    InfoBlocks,
    SurrogateContext,
    TiltedBlocks,
    build_surrogate_context,
    empirical_information,
    partial_information,
    site_efficient_score,
    surrogate_equation,
    surrogate_jacobian,
    surrogate_local_score,
    tilted_information,
)
from .simlab import MetricsTable, ScenarioConfig, generate_scenario, run_method, run_replications

__version__ = "0.1.0"
