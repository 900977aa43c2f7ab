use crate::datagen::TransitionDataset;
use crate::dice::RatioTable;
use crate::error::Result;
use crate::mdp::Policy;

fn normalise_rows(mut mass: Vec<f64>, ns: usize, na: usize) -> Result<Policy> {
    for s in 0..ns {
        let row = &mut mass[s * na..(s + 1) * na];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|x| *x /= total);
        } else {
            row.fill(1.0 / na as f64);
        }
    }
    Policy::new(ns, na, mass)
}

/// Closed-form weighted behaviour cloning for tabular policies:
/// `π(a|s) ∝ Σ_{i:(s_i,a_i)=(s,a)} η_i`, uniform where a state carries no weight.
pub fn weighted_bc(ds: &TransitionDataset, ratios: &RatioTable) -> Result<Policy> {
    ratios.check_aligned(ds)?;
    let na = ds.num_actions;
    let mut mass = vec![0.0; ds.num_states * na];
    for (r, e) in ds.samples.iter().zip(&ratios.eta) {
        mass[r.state * na + r.action] += e;
    }
    normalise_rows(mass, ds.num_states, na)
}

/// The dataset's empirical behaviour policy.
pub fn empirical_behavior_policy(ds: &TransitionDataset) -> Result<Policy> {
    let na = ds.num_actions;
    let mut mass = vec![0.0; ds.num_states * na];
    for r in &ds.samples {
        mass[r.state * na + r.action] += 1.0;
    }
    normalise_rows(mass, ds.num_states, na)
}
