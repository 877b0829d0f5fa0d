//! Continuous-action Q-learning with cross-entropy guided policies.
//!
//! A CEM search over a learned critic acts as the behavior policy and
//! supplies bootstrap actions; a deterministic tanh network is distilled from
//! it (by L2 regression, CGP, or by ascending the critic, QGP) so inference
//! needs one forward pass. DDPG and TD3 baselines share the critic code.

pub mod agents;
pub mod cem;
pub mod config;
pub mod envs;
pub mod harness;
pub mod error;
mod format;
pub mod nn;
pub mod record;
pub mod replay;
pub mod seeding;

pub use error::{Error, Result};
