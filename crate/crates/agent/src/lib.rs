//! Toy continuous-control environments and a mutual-information regularized
//! actor-critic with a learned marginal action model.

pub mod agent;
pub mod config;
pub mod env;
pub mod error;
pub mod losses;
pub mod replay;
pub mod train;

pub use agent::{target_update, Agent, AgentNetworks, MarginalPolicyModel, UpdateStats};
pub use config::{MiracleConfig, PriorMode};
pub use env::{
    random_baseline, rollout, Baseline, ContinuousEnv, EnvKind, Pendulum, PointMass, Rollout,
    Step, Transition,
};
pub use error::{AgentError, Result};
pub use losses::{Batch, Prior, SoftValueOptions};
pub use replay::ReplayBuffer;
pub use train::{train, write_curve_csv, CurveRow, TrainOutcome};
