//! Diversity actor-critic (DAC) at desk scale.
//!
//! The crate has two halves that check each other:
//!
//! * an exact tabular half ([`finite_mdp`], [`sample_entropy`], [`dpi`])
//!   where diverse policy evaluation and improvement are computed in closed
//!   form on finite MDPs, and
//! * a function-approximation half ([`nn`], [`replay`], [`agent`], [`env`])
//!   implementing the practical learner with a ratio network, twin critics,
//!   a value/target-value pair, and optional per-state mixture-weight
//!   adaptation.
//!
//! [`oracles`] holds independent reference implementations (soft policy
//! iteration, a standalone SAC step, finite-difference checks) used by the
//! verification suites in [`verify`].

pub mod agent;
pub mod checkpoint;
pub mod dpi;
pub mod env;
pub mod error;
pub mod experiments;
pub mod finite_mdp;
pub mod nn;
pub mod oracles;
pub mod replay;
pub mod sample_entropy;
pub mod verify;

pub use error::{DacError, Result};
