//! Diverse offline imitation on tabular MDPs.
//!
//! Learns several distinct skill policies from a mixed offline dataset and a
//! small set of expert state demonstrations, while keeping each skill's
//! occupancy within a KL budget of the expert's. Exact brute-force oracles
//! (occupancies by linear solve, primal optimisation, Fenchel checks) sit next
//! to the estimators so every quantity can be cross-checked.

pub mod constraint;
pub mod datagen;
pub mod dice;
pub mod diversity;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod verify;

pub use error::{Error, Result};
