//! Recovery-based supervised learning (RbSL) for constrained offline
//! goal-conditioned reinforcement learning, at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! * [`env`]: kinematic goal-reaching environments with a box obstacle.
//! * [`data`]: offline dataset generation, mixing, relabeling, filtering and cost shaping.
//! * [`approx`]: small feed-forward networks, reverse-mode gradients, Adam, target tracking.
//! * [`goal`]: goal-conditioned policy and critic training (weighted supervised learning).
//! * [`recovery`]: cost critic, recovery critic and recovery policy training.
//! * [`agent`]: the switching agent, evaluation and run comparison.
//! * [`run`]: configuration, run directories and the command implementations behind the CLI.

pub mod agent;
pub mod batch;
pub mod chain;
pub mod critic;
pub mod approx;
pub mod data;
pub mod env;
pub mod error;
pub mod features;
pub mod goal;
pub mod plot;
pub mod recovery;
pub mod rng;
pub mod run;

pub use error::{Error, Result};
