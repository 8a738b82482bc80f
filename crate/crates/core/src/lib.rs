//! Target-apprentice transfer learning for reinforcement learning.
//!
//! Learn an optimal policy in a source task with fitted Q-iteration, map it
//! into a related target task through an inter-task state alignment, and
//! adapt it online with a model-error correction derived from a learned
//! control-affine "apprentice" model of the target dynamics. The harness
//! reproduces same-domain, cross-domain and negative-transfer experiments
//! at desk scale.

pub mod alignment;
pub mod apprentice;
pub mod baselines;
pub mod env;
pub mod error;
pub mod fqi;
pub mod harness;
pub mod mdp;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
