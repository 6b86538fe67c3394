//! Training-pool construction, candidate generation, ranking and evaluation.
//!
//! Training: trackers and session embeddings are computed from the feature
//! span; every click in the following label span becomes a positive row and
//! is paired with negatives drawn from the shop's popular offers. At
//! evaluation time trackers are recomputed up to the start of the held-out
//! span, candidates are picked from the popular set with a restricted
//! (mostly non-personalized) feature view, and the final top-10 is ranked
//! with every feature and scored by DCG against the clicks of each test
//! user's last held-out session.

mod context;
mod eval;
mod pool;
mod popular;
mod rank;
mod run;

pub use context::ScoringContext;
pub use eval::{evaluate, test_cases, EvalResult, System, TestCase};
pub use pool::{build_pool, check_no_leakage, split_by_user, BuiltPool, PoolRow};
pub use popular::{popularity_spec, sample_negatives, top_popular, PopularityIndex};
pub use rank::{
    by_probability, dcg, popular_candidates, recommend, top_personalized, CandidateConfig, CandidateGenerator,
    CandidateSet, Provenance, RecommendationList, DCG_DISCOUNT,
};
pub use run::{
    build_store, choose_region_bins, fit_pool, iterations_to_threshold, prepare, run_experiment,
    run_experiment_prepared, run_in_memory, split_phases, split_pool, train_embedding, type_importance, Curve,
    ExperimentKind, ExperimentOutput, ExperimentRow, Phases, PipelineConfig, Prepared, RunSettings, RunSummary,
    CONVERGENCE_FRACTION, GAMMA_SWEEP, NEG_SWEEP, NEG_SWEEP_SHRINKAGE,
};
