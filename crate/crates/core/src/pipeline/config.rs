use serde::{Deserialize, Serialize};

use crate::constraint::DualScaling;
use crate::dice::{ClassifierConfig, DualConfig};
use crate::diversity::DiscriminatorConfig;
use crate::error::{Error, Result};
use crate::par::Parallelism;

/// Source of the `E[V(s')]` term in TD scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdMode {
    /// Exact transition kernel.
    #[default]
    Oracle,
    /// The sampled next state of each record.
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiplierConfig {
    pub step_size: f64,
    pub init_mu: f64,
    /// Pin `σ(μ_z)` to this value instead of learning it.
    pub fixed_sigma: Option<f64>,
    pub scaling: DualScaling,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        Self {
            step_size: 5.0,
            init_mu: 0.0,
            fixed_sigma: None,
            scaling: DualScaling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub num_skills: usize,
    /// Shared imitation level.
    pub epsilon: f64,
    /// Optional per-skill imitation levels, overriding `epsilon`.
    pub epsilons: Option<Vec<f64>>,
    /// Weight of the diversity term in the unconstrained variant.
    pub alpha: f64,
    pub outer_steps: usize,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    /// Ratio clipping constant `C`.
    pub clip: f64,
    pub td_mode: TdMode,
    pub seed: u64,
    pub classifier: ClassifierConfig,
    pub dual: DualConfig,
    pub discriminator: DiscriminatorConfig,
    pub multiplier: MultiplierConfig,
    /// Execution strategy only; never changes results, so it is not hashed.
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_skills: 5,
            epsilon: 1.0,
            epsilons: None,
            alpha: 16.0,
            outer_steps: 350,
            checkpoint_every: 50,
            clip: 100.0,
            td_mode: TdMode::Oracle,
            seed: 0,
            classifier: ClassifierConfig::default(),
            dual: DualConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            multiplier: MultiplierConfig::default(),
            parallelism: Parallelism::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_skills == 0 {
            return bad("num_skills must be positive".into());
        }
        if self.outer_steps == 0 {
            return bad("outer_steps must be positive".into());
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon {} must be >= 0", self.epsilon));
        }
        if let Some(e) = &self.epsilons {
            if e.len() != self.num_skills || e.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return bad("epsilons needs one nonnegative level per skill".into());
            }
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha {} must be >= 0", self.alpha));
        }
        if !(self.clip.is_finite() && self.clip >= 1.0) {
            return bad(format!("clip {} must be finite and >= 1", self.clip));
        }
        if self.dual.max_iters == 0 || self.discriminator.steps == 0 {
            return bad("iteration budgets must be positive".into());
        }
        Ok(())
    }

    pub fn skill_epsilons(&self) -> Vec<f64> {
        self.epsilons
            .clone()
            .unwrap_or_else(|| vec![self.epsilon; self.num_skills])
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: RunConfig = serde_json::from_str(r#"{"epsilon": 2.0, "multiplier": {"fixed_sigma": 1.0}}"#).unwrap();
        assert_eq!(partial.epsilon, 2.0);
        assert_eq!(partial.multiplier.fixed_sigma, Some(1.0));
        assert_eq!(partial.num_skills, 5);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"epsilonn": 2.0}"#).is_err());
        for c in [
            RunConfig { num_skills: 0, ..Default::default() },
            RunConfig { epsilon: -1.0, ..Default::default() },
            RunConfig { clip: 0.5, ..Default::default() },
            RunConfig { epsilons: Some(vec![1.0]), ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn hash_ignores_parallelism_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            parallelism: Parallelism::Sequential,
            ..Default::default()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 1, ..Default::default() };
        assert_ne!(a.hash(), c.hash());
    }
}
