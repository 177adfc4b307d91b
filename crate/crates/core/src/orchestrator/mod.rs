//! The experimental protocol: scenario preparation, participant
//! pre-training, the pairwise transfer matrix, grid search, method
//! recommendation and multi-model consolidation.

mod consolidate;
pub mod grid;
mod matrix;
mod plan;
mod recommend;

pub use consolidate::{consolidate_models, select_start, Consolidated, ConsolidationSpec, StartPolicy, Weighting};
pub use grid::{best_cell, grid_search_tuned, GridCell, GridMode, GridOutcome, GridSpec};
pub use matrix::{
    best_teacher_frequency, pair_seed, run_pair, run_pairwise_matrix, transfer_for, BestTeacherTable, MatrixSpec,
    PairKey, PairResult, SelectionSet, TeacherStrength,
};
pub use plan::{init_seed, pretrain_participants, ExperimentPlan, Participant, Scenario};
pub use recommend::{recommend_kd_method, KdContext, Recommendation, Rule, RuleCondition, RuleSet};
