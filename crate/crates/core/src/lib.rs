//! Simulation-guided replenishment laboratory.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`datagen`] produces (or loads) per-SKU daily demand panels.
//! 2. [`sim`] replays demand traces under inventory-days decisions and
//!    tabulates holding value and lost-sales value per candidate.
//! 3. [`select`] solves the multiple-choice selection model over those
//!    tables, sweeps the loss budget and calibrates it against a turnover
//!    target to produce training labels.
//! 4. [`policy`] pretrains a compact stochastic policy network on the labels
//!    in three stages, and [`rloo`] fine-tunes it with leave-one-out policy
//!    gradients under a hybrid rule/simulation reward.
//! 5. [`baselines`] and [`eval`] run the comparison methods through the same
//!    simulator and emit reports.
//!
//! [`oracles`] holds independent reference implementations used by tests.

pub mod baselines;
pub mod datagen;
pub mod eval;
pub mod money;
pub mod oracles;
pub mod policy;
pub mod rloo;
pub mod seed;
pub mod select;
pub mod sim;

pub use datagen::{DemandPanel, ScenarioConfig, SkuRecord};
pub use money::Cents;
pub use sim::{CandidateGrid, SimConfig, SimOutcome};
