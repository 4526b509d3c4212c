//! Nearest-neighbor matching estimation of the ATT for samples with few
//! treated and many control observations, with randomization inference
//! (sign changes and within-set permutations), the asymptotic normal test,
//! confidence intervals by test inversion, and a seeded parallel Monte
//! Carlo engine for size/power studies.

pub mod cli;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod matching;
pub mod sample;
pub mod simulation;
pub mod statfun;

pub use error::{Error, Result};
pub use inference::{
    ai_test, ai_variance, invert_ci, permutation_test, sign_changes_test, sign_statistic,
    AsymptoticResult, ConfidenceInterval, PermutationEngine, RandomizationResult, SearchGrid,
    StatVariant, TestConfig, TestMethod, VarianceParts,
};
pub use matching::{
    bias_adjusted_unit_effects, estimate, find_neighbors, fit_outcome_model, match_all,
    shared_components, unit_effects, BiasAdjust, MatchSpec, MatchedSets, Metric, ModelScope,
    UnitEffects,
};
pub use sample::{control_covariance, Sample};
pub use simulation::{
    draw_sample, mc_bias, run_mc_power, run_mc_size, shared_nn_rate, BiasSummary, DgpSpec,
    McConfig, McResult, Mu0Kind, Mu1Kind, Panel, PowerPoint, TestRate, TreatedError,
};
