//! Incentive design for crowdsourced federated learning: client cost model,
//! best responses, the server's reward-rate game, admission thresholds, and
//! a small federated dual-ascent simulator.

pub mod admission;
pub mod best_response;
pub mod cost;
pub mod error;
pub mod fedsim;
pub mod numeric;
pub mod report;
pub mod reproduce;
pub mod rng;
pub mod scenario;
pub mod stackelberg;

pub use error::{Error, Result};
