//! Subject-exposed and subject-naive splits, grid enumeration, cross-validated
//! model selection and held-out evaluation.

mod evaluate;
mod grid;
mod search;
mod split;

pub use evaluate::{check_leakage, evaluate_final, Evaluation, TrialPrediction};
pub use grid::{enumerate_grid, Axis, GridIter, GridSpec, HyperConfig, Preset};
pub use search::{
    fit_config, run_search, run_seeds, seq_len_for, ConfigRecord, ConfigStatus, SearchOptions,
    SearchResult, TrialData, FINAL_FOLD,
};
pub use split::{
    split_subject_exposed, split_subject_exposed_with, split_subject_naive,
    split_subject_naive_with_test, ExposedOptions, Fold, Setting, SplitPlan, TrialSet,
};

/// Builds the plan for `setting` over `set`.
pub fn make_plan(setting: Setting, set: &TrialSet, seed: u64) -> crate::Result<SplitPlan> {
    match setting {
        Setting::SubjectExposed => split_subject_exposed(set, seed),
        Setting::SubjectNaive => split_subject_naive(set, seed),
    }
}
