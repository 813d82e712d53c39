"""Safe Bayesian optimization with information-theoretic exploration."""

from .acquisition import (
    C1,
    C2,
    LN2,
    EntropyConstants,
    MaxValueSample,
    MIQuery,
    alpha_ise,
    alpha_mes,
    alpha_mes_hat,
    approx_entropy,
    exact_entropy,
    expected_post_entropy,
    ise_mutual_info,
    mutual_info_values,
    sample_max_value,
    select_next,
    unsafe_prob,
)
from .baselines import BaselineSpec, select_baseline
from .benchmarks import (
    BenchmarkProblem,
    REGISTRY,
    gp_sample_problem,
    heteroskedastic_problem,
    make_problem,
    pendulum_problem,
    simple_regret,
    synthetic_1d,
)
from .gp import (
    Channel,
    ChannelKernels,
    Dataset,
    ExtendedPoint,
    FactorizationError,
    GaussianPosterior,
    KernelSpec,
    NoiseModel,
    posterior_mean_var,
    sample_prior_function,
)
from .harness import RunConfig, RunRecord, aggregate, run_campaign, run_single, write_outputs
from .safety import BetaSchedule, CertificationError, SafeRegion, safe_violation_check
from .search import ExplorationStallError, SearchConfig, maximize_joint, maximize_single
from .theory import (
    CapacitySequence,
    b_min,
    capacity_constant,
    eta,
    expansion_fixed_point,
    greedy_capacity,
    n_epsilon,
)

__version__ = "0.1.0"
