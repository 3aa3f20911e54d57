//! Free-rider penalties, contract fees and the sandwich truthfulness
//! competition for federated agents, together with brute-force equilibrium
//! oracles and a FedAvg simulator on a synthetic quadratic.
//!
//! Monte Carlo trials, grid scans and per-agent updates run on rayon when the
//! `parallel` feature is enabled (the default) and sequentially otherwise.
//! Every random draw is addressed by a counter-based stream, so results do
//! not depend on the worker count.

pub mod equilibrium;
pub mod error;
pub mod fedsim;
pub mod loss;
pub mod mechanism;
pub mod model;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
pub use loss::{AgentPoint, CompetitionBranch, ContractFee};
pub use model::{others_sum, AgentProfile, CostDistribution, LossBreakdown, MechanismConstants};
