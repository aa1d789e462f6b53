//! Tabular solvers for mutual-information regularized decision making.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the experiment
//! drivers use.

pub mod audit;
pub mod bellman;
pub mod error;
pub mod gridworld;
pub mod mdp;
pub mod mdp_io;
pub mod oracle;
pub mod prob;
pub mod scalar;
pub mod vi;

pub use bellman::{
    advantage_matrix, apply_b_star, apply_b_star_with, concise_bellman, evaluate_operator, gap_bound,
    optimal_policy_step, rate_distortion_solve, BaResult, BellmanConfig, PriorRule,
};
pub use error::{Error, Result};
pub use gridworld::{build_grid_world, GridAction, GridWorldSpec};
pub use mdp::TabularMdp;
pub use prob::{
    expected_kl, kl_divergence, marginalize_policy, mutual_information, ActionPrior, ConditionalPolicy, Matrix,
    StateDistribution, ValueTable,
};
pub use scalar::{log_sum_exp, Scalar};
pub use vi::{beta_sweep, greedy_policy, value_iteration, SweepMode, SweepRow, ViMode, ViResult};

pub type Mdp = TabularMdp<f64>;
pub type Policy = ConditionalPolicy<f64>;
pub type Prior = ActionPrior<f64>;
pub type StateDist = StateDistribution<f64>;
pub type Values = ValueTable<f64>;
pub type Config = BellmanConfig<f64>;

pub type Mdp32 = TabularMdp<f32>;
pub type Policy32 = ConditionalPolicy<f32>;
pub type Values32 = ValueTable<f32>;
