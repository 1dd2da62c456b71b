//! Finite mixtures of first-order Markov models — discrete-time and
//! continuous-time — for unsupervised and semi-supervised classification of
//! categorical state sequences with per-state holding times, such as
//! clickstreams.
//!
//! Models are fitted by EM with multi-start initialization, an Aitken
//! acceleration stopping rule, and a parameter floor; the number of groups
//! is selected by BIC. Three model kinds are supported:
//!
//! - `dwm`: discrete time, self-transitions allowed;
//! - `dm`: discrete time, self-transitions forbidden;
//! - `cm`: continuous time, with exponential holding times driven by
//!   per-group generator matrices.
//!
//! The crate also ships samplers and the built-in simulation scenarios used
//! by the `clickmix` command-line front end, an adjusted-Rand-index
//! evaluator, and versioned text formats for datasets, models, and fit
//! results.

pub mod constants;
pub mod continuous;
pub mod discrete;
pub mod em;
pub mod error;
pub mod eval;
pub mod math;
pub mod mixture;
pub mod model_io;
pub mod seq;
pub mod simulate;
pub mod stream;

pub use continuous::{ContinuousMixtureModel, GeneratorMatrix};
pub use discrete::{DiscreteMixtureModel, DiscreteVariant};
pub use em::{
    aitken_should_stop, bic, classify, em_em, fit, free_parameter_count, random_initialize,
    sweep, EmConfig, FitResult, FittedModel, ModelKind, SweepResult,
};
pub use error::{DegenerateStart, Error, Result};
pub use eval::{adjusted_rand_index, selection_table, BicTable, EvalSummary, ReplicateOutcome};
pub use mixture::{GeneratorUpdate, MStepOptions, MarkovMixture};
pub use seq::{
    collapse_repeats, parse_dataset, parse_dataset_with_states, summarize, ClickSequence,
    Dataset, LabelMode, SequenceFormat, TransitionCounts,
};
pub use simulate::{
    augment_with_times, generate_scenario, sample_ctmc_path, sample_dtmc_path, ScenarioKind,
    ScenarioSpec,
};
