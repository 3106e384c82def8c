"""polrec: Bayesian policy recognition and state-partition learning from
observed state trajectories."""

from .core import (
    ActionSet,
    Continuous2D,
    FiniteGrid,
    FiniteTable,
    GaussianKernel,
    SuffStats,
    Trajectory,
    apply_delta,
    build_suff_stats,
    load_trajectory,
    save_trajectory,
)
from .dists import log_dirmult, rng_stream, sample_categorical, sample_dirichlet
from .envs import (
    CircularWorld,
    GridWorld,
    discretize_grid,
    expert_policy_circular,
    perturb_model,
    sample_reward_world,
    simulate,
    value_iteration,
)
from .harness import ExperimentSpec, cluster_count_histogram, run_experiment
from .metrics import (
    CircularActions,
    Euclidean2D,
    emd,
    extract_policy,
    learning_curve,
    next_state_distribution,
)
from .priors import (
    DdcrpKernel,
    Neighborhood,
    PottsKernel,
    connected_components,
    crp_conditional,
    ddcrp_link_prior,
    mixing_conditional_collapsed,
    potts_conditional,
    sample_mixing_weights,
)
from .samplers import ChainState, SampleRecord, SamplerConfig, run_chain

__version__ = "0.1.0"
