//! Distribution-correction estimators: state classifier, dual value solve,
//! softmax importance ratios and weighted behaviour cloning.

mod bc;
mod classifier;
mod ratios;
mod value;

pub use bc::{empirical_behavior_policy, weighted_bc};
pub use classifier::{
    expert_reward, fit_state_classifier, ClassifierConfig, ClassifierMode, LogisticProblem,
    StateClassifier,
};
pub use ratios::{compute_ratios, td_scores, RatioTable, RatioTag};
pub use value::{solve_dual_value, DualConfig, DualProblem, DualSolver, ValueFunction};
