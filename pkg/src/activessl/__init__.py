"""Active-learning query strategies vs. confirmation bias in semi-supervised
image classification, benchmarked on reproducible challenge datasets."""

from .datasets import (
    ChallengeKind,
    ChallengeSpec,
    ImageDataset,
    PoolPartition,
    class_histogram,
    distance_profile,
    load_idx,
)
from .challenges import generate_bci, generate_bcs, generate_wci
from .network import NetworkConfig, gradient_check, init_model, predict_proba, embed
from .training import TrainConfig, evaluate_accuracy, fit_supervised
from .learners import (
    Learner,
    LearnerKind,
    fit_fixmatch,
    fit_flexmatch,
    fit_pseudo_label,
    select_confident,
)
from .acquisition import (
    QueryContext,
    QueryResult,
    query_balanced,
    query_coverage_kcenter,
    query_margin,
    query_random,
    query_representative,
)
from .harness import (
    ExperimentConfig,
    RunRecord,
    aggregate_seeds,
    compute_pl_entropy,
    compute_wrong_pl_fraction,
    run_active_loop,
)

__version__ = "0.1.0"
