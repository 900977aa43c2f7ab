use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constraint::LagrangeState;
use crate::dice::{RatioTable, StateClassifier, ValueFunction};
use crate::diversity::DiscriminatorEnsemble;
use crate::error::{Error, Result};
use crate::mdp::Policy;
use crate::metrics::MetricRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Constrained run with Lagrange multipliers.
    Doi,
    /// Diversity weighted by a fixed `alpha`, no constraint.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub variant: Variant,
    pub config_hash: String,
    pub dataset_hash: String,
    pub seed: u64,
    /// Completed outer iterations.
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillResult {
    pub policy: Policy,
    pub value: ValueFunction,
    pub ratios: RatioTable,
    /// Latest KL estimate against the recovered expert.
    pub phi: f64,
    pub phi_history: Vec<f64>,
    pub mu_history: Vec<f64>,
    pub sigma_history: Vec<f64>,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillBundle {
    pub provenance: Provenance,
    pub skills: Vec<SkillResult>,
    pub discriminator: DiscriminatorEnsemble,
    pub classifier: StateClassifier,
    pub expert_ratios: RatioTable,
    pub expert_policy: Policy,
    pub lagrange: Option<LagrangeState>,
    pub metrics: Vec<MetricRow>,
}

/// Resumable loop state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub provenance: Provenance,
    pub values: Vec<ValueFunction>,
    pub discriminator: DiscriminatorEnsemble,
    pub lagrange: Option<LagrangeState>,
    pub phi_history: Vec<Vec<f64>>,
    pub mu_history: Vec<Vec<f64>>,
    pub sigma_history: Vec<Vec<f64>>,
    pub metrics: Vec<MetricRow>,
}

pub(crate) fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let bytes = serde_json::to_vec(value)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

impl SkillBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }

    pub fn num_skills(&self) -> usize {
        self.skills.len()
    }

    pub fn ratio_tables(&self) -> Vec<RatioTable> {
        self.skills.iter().map(|s| s.ratios.clone()).collect()
    }

    pub fn policies(&self) -> Vec<Policy> {
        self.skills.iter().map(|s| s.policy.clone()).collect()
    }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }

    pub fn file_name(iteration: usize) -> String {
        format!("checkpoint_{iteration:05}.json")
    }
}
