//! Morphology optimization.
//!
//! A multi-task GP over `(d, h)` with kernel `B[h,h']·k_SE(d, d')` drives a
//! UCB search that evaluates one morphology-shape pair per iteration (MTBO).
//! Single-task BO over `d` and a small genetic algorithm serve as baselines;
//! both score every design on all shapes.

mod acq;
mod gp;
mod nelder_mead;
mod opt;
mod score;

use thiserror::Error;

pub use acq::{
    acquisition, argmax_acquisition, best_morphology, candidates, mean_over_tasks, next_query, radical_inverse,
    AcqConfig, CandidateScheme,
};
pub use gp::{gp_fit, gp_predict, k_se, kernel, FitConfig, Hyper, Observation, SurrogateState, TaskCovariance};
pub use nelder_mead::minimize;
pub use opt::{
    bo_baseline, ga_baseline, mtbo_loop, rollouts_to_converge, rollouts_to_reach, Evaluation, Evaluator, GAConfig,
    IterationRecord, OptimizerConfig, OptimizerKind, OptimizerRun, SyntheticTwoTask,
};
pub use score::{mix_score, performance_score, DesignPoint, PolicyEvaluator, ScoreConfig, ScoreSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorphError {
    #[error("Gram matrix is singular even with 1e-4 jitter")]
    Singular,
    #[error("invalid data: {0}")]
    InvalidData(&'static str),
    #[error("invalid config: {0}")]
    Config(&'static str),
    #[error("no valid morphology found in the design space")]
    NoValidDesign,
}
