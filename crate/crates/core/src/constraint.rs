//! KL-constraint estimation, bounded Lagrange multipliers and reward assembly.

use serde::{Deserialize, Serialize};

use crate::datagen::TransitionDataset;
use crate::dice::RatioTable;
use crate::diversity::SkillDiscriminator;
use crate::error::{Error, Result};
use crate::mdp::FeatureMap;

/// Multipliers are kept in `[-MU_LIMIT, MU_LIMIT]`, where the sigmoid is still
/// representably below 1 and above 0.
pub const MU_LIMIT: f64 = 30.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-skill multipliers `μ_z` whose sigmoid weights imitation against diversity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    pub mu: Vec<f64>,
    /// Imitation level per skill.
    pub epsilon: Vec<f64>,
    pub step_size: f64,
    /// When set, `σ(μ_z)` is pinned to this value and updates are no-ops.
    pub fixed_sigma: Option<f64>,
}

impl LagrangeState {
    pub fn new(num_skills: usize, epsilon: f64, step_size: f64, mu0: f64) -> Result<Self> {
        Self::with_epsilons(vec![epsilon; num_skills], step_size, mu0)
    }

    pub fn with_epsilons(epsilon: Vec<f64>, step_size: f64, mu0: f64) -> Result<Self> {
        if epsilon.is_empty() || epsilon.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::InvalidArgument(format!("imitation levels {epsilon:?} must be >= 0")));
        }
        if !(step_size.is_finite() && step_size > 0.0) {
            return Err(Error::InvalidArgument(format!("multiplier step {step_size} must be > 0")));
        }
        Ok(Self {
            mu: vec![mu0.clamp(-MU_LIMIT, MU_LIMIT); epsilon.len()],
            epsilon,
            step_size,
            fixed_sigma: None,
        })
    }

    /// Pin every `σ(μ_z)` to `sigma` in `(0, 1]`; `1` gives pure imitation.
    pub fn pinned(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::InvalidArgument(format!("pinned sigma {sigma} not in (0, 1]")));
        }
        self.fixed_sigma = Some(sigma);
        Ok(self)
    }

    pub fn num_skills(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self, z: usize) -> f64 {
        self.fixed_sigma.unwrap_or_else(|| sigmoid(self.mu[z]))
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.num_skills()).map(|z| self.sigma(z)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEstimate {
    pub phi: Vec<f64>,
    pub violation: Vec<f64>,
}

impl ConstraintEstimate {
    pub fn new(phi: Vec<f64>, state: &LagrangeState) -> Self {
        let violation = phi.iter().zip(&state.epsilon).map(|(p, e)| p - e).collect();
        Self { phi, violation }
    }
}

/// `Σ_i w_z,i log(w_z,i / w_E,i)`: KL between the two sample-weight vectors.
pub fn kl_estimate(skill: &RatioTable, expert: &RatioTable) -> Result<f64> {
    if skill.len() != expert.len() {
        return Err(Error::Misaligned(format!(
            "skill table has {} entries, expert {}",
            skill.len(),
            expert.len()
        )));
    }
    let mut kl = 0.0;
    for (i, (&a, &b)) in skill.w.iter().zip(&expert.w).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::Support { index: i, p: a });
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl)
}

/// One descent step on `Σ_z σ(μ_z)(ε_z - φ_z)`:
/// `μ_z ← μ_z - step σ'(μ_z)(ε_z - φ_z)`, so a violated constraint raises the
/// imitation weight.
pub fn update_multipliers(state: &LagrangeState, estimates: &ConstraintEstimate) -> Result<LagrangeState> {
    if estimates.phi.len() != state.num_skills() {
        return Err(Error::Misaligned("one estimate per skill required".into()));
    }
    if estimates.phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("non-finite constraint estimate".into()));
    }
    let mut next = state.clone();
    if state.fixed_sigma.is_some() {
        return Ok(next);
    }
    for (z, mu) in next.mu.iter_mut().enumerate() {
        let s = sigmoid(*mu);
        let grad = s * (1.0 - s) * (state.epsilon[z] - estimates.phi[z]);
        *mu = (*mu - state.step_size * grad).clamp(-MU_LIMIT, MU_LIMIT);
    }
    Ok(next)
}

/// Diversity reward `log(|Z| q(z|s)) / |Z|` per state.
pub fn diversity_reward(disc: &SkillDiscriminator, fmap: &FeatureMap, z: usize) -> Vec<f64> {
    let nz = disc.num_skills as f64;
    (0..fmap.num_states())
        .map(|s| (nz * disc.probs(fmap, s)[z]).ln() / nz)
        .collect()
}

/// `R_z(s,a) = (1-σ)(div_z(s) + bonus(s)) + σ log η_Ẽ(s,a)` per sample, where
/// `bonus` is the already-weighted disagreement bonus per state.
pub fn assemble_reward(
    z: usize,
    disc: &SkillDiscriminator,
    fmap: &FeatureMap,
    expert: &RatioTable,
    state: &LagrangeState,
    bonus: Option<&[f64]>,
    ds: &TransitionDataset,
) -> Result<Vec<f64>> {
    expert.check_aligned(ds)?;
    if z >= disc.num_skills || z >= state.num_skills() {
        return Err(Error::InvalidArgument(format!("skill {z} out of range")));
    }
    let div = diversity_reward(disc, fmap, z);
    let sigma = state.sigma(z);
    Ok(ds
        .samples
        .iter()
        .zip(&expert.eta)
        .map(|(r, eta)| {
            let d = div[r.state] + bonus.map_or(0.0, |b| b[r.state]);
            (1.0 - sigma) * d + sigma * eta.ln()
        })
        .collect())
}

/// How the convex-combination reward enters the KL-regularised value problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualScaling {
    /// Solve with `R_z / σ(μ_z)`, i.e. `div / (λ|Z|) + log η_Ẽ` with
    /// `λ = σ / (1 - σ)`. This is the Lagrangian `(1-σ)·MI + σ·(ε - KL)` with
    /// the regulariser weighted by `σ` like the rest of the constraint.
    #[default]
    Lagrangian,
    /// Solve with `R_z` against a unit-weight regulariser. The diversity term
    /// then never outweighs the KL cost of splitting the skills apart.
    Literal,
}

/// Reward handed to the dual solver for skill `z`.
pub fn dual_reward(mut reward: Vec<f64>, state: &LagrangeState, z: usize, scaling: DualScaling) -> Vec<f64> {
    if scaling == DualScaling::Lagrangian {
        let inv = 1.0 / state.sigma(z);
        reward.iter_mut().for_each(|r| *r *= inv);
    }
    reward
}

/// `R_z(s,a) = r(s) + α div_z(s)` with `r` the classifier's per-state imitation reward.
pub fn assemble_reward_unconstrained(
    z: usize,
    disc: &SkillDiscriminator,
    fmap: &FeatureMap,
    classifier_reward: &[f64],
    alpha: f64,
    ds: &TransitionDataset,
) -> Result<Vec<f64>> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must be >= 0")));
    }
    if classifier_reward.len() != ds.num_states {
        return Err(Error::Misaligned("classifier reward must be per state".into()));
    }
    let div = diversity_reward(disc, fmap, z);
    Ok(ds
        .samples
        .iter()
        .map(|r| classifier_reward[r.state] + alpha * div[r.state])
        .collect())
}
