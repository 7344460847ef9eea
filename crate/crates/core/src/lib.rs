//! Bounded-loss online prediction.
//!
//! The crate bets on a payoff stream with a confidence function of a
//! discounted deviation, so that the loss stays exponentially small while
//! regret to the best fixed direction stays near `√T`. On top of that core
//! predictor it builds pairwise and tree-shaped strategy combiners, a
//! uniformity audit of residual payoffs, randomized betting with transaction
//! costs, a bandit wrapper, an adaptive online convex optimization grid and a
//! Monte Carlo experiment harness.

// `!(x >= a)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confidence;
pub mod error;
pub mod numeric;
pub mod rng;

pub use confidence::{derive_params, ConfidenceParams, DriftReport, Side, Variant};
pub use error::{Error, Result};
pub mod predictor;
pub use predictor::{run, run_summary, PredictorState, RunConfig, Schedule, Trace, TraceStep};
pub mod combiner;
pub use combiner::{CombinerNode, ComparisonTree, NodeConfig, NodeRule};
pub mod bandit;
pub mod harness;
pub mod oco;
pub mod randomized;
pub mod uniformity;
