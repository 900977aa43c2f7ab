//! The alternating training loop and its surrounding precompute.

mod bundle;
mod config;
mod run;

pub use bundle::{Checkpoint, Provenance, SkillBundle, SkillResult, Variant};
pub use config::{MultiplierConfig, RunConfig, TdMode};
pub use run::{run_doi, run_smodice, run_unconstrained, Inputs, RunOptions, SmodiceOutput};
