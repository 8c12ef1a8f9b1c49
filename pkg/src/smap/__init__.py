"""Scenario-to-model assignment: registries, a trainable attention score
function, a greedy allocator, a persistent assignment cache, and an
evaluation harness with collaborative-filtering baselines."""

from .allocator import Allocation, AllocationEntry, soma_allocate, soma_topk
from .baselines import MFModel, SlopeOneModel, mf_fit, mf_predict, slope_one_fit, slope_one_predict
from .evalharness import ExperimentConfig, Report, hit_at_k, run_experiment, split_records
from .features import (
    FEATURE_SLOTS,
    N_FEATURES,
    FeatureStats,
    ScoreSample,
    fit_feature_stats,
    load_samples,
    normalize_features,
    save_samples,
)
from .mnemonic import MnemonicCenter, MnemonicEntry, scenario_key
from .network import (
    Hyperparams,
    NumericError,
    ScorerParams,
    TrainedScorer,
    attention_block_forward,
    embed_features,
    gradient_check,
    init_params,
    score_head,
)
from .registry import (
    ConstraintViolation,
    Dataset,
    DatasetConstraintViolation,
    Metrics,
    Model,
    ModelConstraintViolation,
    PerformanceRecord,
    Registry,
    Scenario,
    ValidationError,
    load_registry,
    match_constraints,
    register_entity,
    save_registry,
    select_candidate_models,
    select_suitable_dataset,
)
from .scoring import TripleScore, score_triple
from .synth import SynthConfig, generate_synthetic
from .training import TrainingLog, train_scorer

__version__ = "0.1.0"
