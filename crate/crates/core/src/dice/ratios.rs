use serde::{Deserialize, Serialize};

use crate::datagen::TransitionDataset;
use crate::dice::ValueFunction;
use crate::error::{Error, Result};
use crate::mdp::{OccupancyMeasure, TabularMdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioTag {
    Expert,
    Skill(usize),
}

/// Per-sample importance weights over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub tag: RatioTag,
    /// Clipping constant `C`: every `eta` lies in `[1/C, C]`.
    pub clip: f64,
    /// Normalised weights, summing to one.
    pub w: Vec<f64>,
    /// `eta = N w`, mean one.
    pub eta: Vec<f64>,
    /// Raw TD scores `δ` before the softmax.
    pub td: Vec<f64>,
}

/// Scale `x` by `k` and clip to `[lo, hi]`, choosing `k` so the mean is one.
fn clip_to_unit_mean(x: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mean_at = |k: f64| x.iter().map(|v| (k * v).clamp(lo, hi)).sum::<f64>() / x.len() as f64;
    let apply = |k: f64| x.iter().map(|v| (k * v).clamp(lo, hi)).collect::<Vec<_>>();
    if x.iter().all(|&v| (lo..=hi).contains(&v)) {
        return x.to_vec();
    }
    // mean_at is nondecreasing in k, from lo <= 1 to hi >= 1; bisect in log k.
    let (mut a, mut b) = (-800.0f64, 800.0f64);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if mean_at(m.exp()) < 1.0 {
            a = m;
        } else {
            b = m;
        }
    }
    apply(b.exp())
}

impl RatioTable {
    /// Softmax over TD scores, then clip-and-renormalise to `[1/C, C]`.
    pub fn from_td(td: Vec<f64>, clip: f64, tag: RatioTag) -> Result<Self> {
        if td.is_empty() {
            return Err(Error::Dataset("cannot build ratios for zero samples".into()));
        }
        if !(clip.is_finite() && clip >= 1.0) {
            return Err(Error::InvalidArgument(format!("clip {clip} must be finite and >= 1")));
        }
        if td.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidArgument("non-finite TD score".into()));
        }
        let n = td.len() as f64;
        let m = td.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = td.iter().map(|d| (d - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let raw: Vec<f64> = e.iter().map(|x| n * x / z).collect();
        let clipped = clip_to_unit_mean(&raw, 1.0 / clip, clip);
        let total: f64 = clipped.iter().sum();
        let w: Vec<f64> = clipped.iter().map(|x| x / total).collect();
        let eta = w.iter().map(|x| n * x).collect();
        Ok(Self {
            tag,
            clip,
            w,
            eta,
            td,
        })
    }

    /// Uniform weights (`eta = 1`).
    pub fn uniform(n: usize, clip: f64, tag: RatioTag) -> Result<Self> {
        Self::from_td(vec![0.0; n], clip, tag)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Normalisation, positivity and clipping bounds.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.len() as f64;
        let sum: f64 = self.w.iter().sum();
        let mean = self.eta.iter().sum::<f64>() / n;
        let slack = 1.0 + 1e-9;
        let bad = |msg: String| Err(Error::InvalidArgument(format!("{:?}: {msg}", self.tag)));
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {sum}"));
        }
        if (mean - 1.0).abs() > 1e-9 {
            return bad(format!("ratios average {mean}"));
        }
        if let Some(e) = self
            .eta
            .iter()
            .find(|&&e| !(e > 0.0 && e * slack >= 1.0 / self.clip && e <= self.clip * slack))
        {
            return bad(format!("ratio {e} outside [1/{0}, {0}]", self.clip));
        }
        Ok(())
    }

    /// Occupancy induced by the weights: `d(s,a) = Σ_{i:(s_i,a_i)=(s,a)} w_i`.
    pub fn induced_occupancy(&self, ds: &TransitionDataset) -> Result<OccupancyMeasure> {
        self.check_aligned(ds)?;
        let na = ds.num_actions;
        let mut d = vec![0.0; ds.num_states * na];
        for (r, w) in ds.samples.iter().zip(&self.w) {
            d[r.state * na + r.action] += w;
        }
        Ok(OccupancyMeasure {
            num_states: ds.num_states,
            num_actions: na,
            d,
        })
    }

    pub fn check_aligned(&self, ds: &TransitionDataset) -> Result<()> {
        if self.len() != ds.len() {
            return Err(Error::Misaligned(format!(
                "{:?} has {} entries, dataset {}",
                self.tag,
                self.len(),
                ds.len()
            )));
        }
        Ok(())
    }
}

/// Per-sample TD scores `δ_i = R_i + γ TV(s_i,a_i) - V(s_i)`, with `TV` from
/// the exact kernel when `mdp` is given, else from the sampled next state.
pub fn td_scores(
    v: &[f64],
    reward: &[f64],
    ds: &TransitionDataset,
    mdp: Option<&TabularMdp>,
) -> Result<Vec<f64>> {
    if reward.len() != ds.len() {
        return Err(Error::Misaligned(format!(
            "{} rewards for {} samples",
            reward.len(),
            ds.len()
        )));
    }
    if v.len() != ds.num_states {
        return Err(Error::InvalidArgument("value function has the wrong length".into()));
    }
    let gamma = mdp.map_or(ds.gamma, TabularMdp::discount);
    let na = ds.num_actions;
    // exact E[V(s')] per (s,a), computed once
    let expected: Option<Vec<f64>> = mdp.map(|m| {
        (0..ds.num_states * na)
            .map(|k| {
                m.next_dist(k / na, k % na)
                    .iter()
                    .zip(v)
                    .map(|(p, x)| p * x)
                    .sum()
            })
            .collect()
    });
    Ok(ds
        .samples
        .iter()
        .zip(reward)
        .map(|(rec, r)| {
            let tv = match &expected {
                Some(e) => e[rec.state * na + rec.action],
                None => v[rec.next_state],
            };
            r + gamma * tv - v[rec.state]
        })
        .collect())
}

/// Importance ratios of the dual solution `V` for `reward`.
pub fn compute_ratios(
    v: &ValueFunction,
    reward: &[f64],
    ds: &TransitionDataset,
    mdp: Option<&TabularMdp>,
    clip: f64,
    tag: RatioTag,
) -> Result<RatioTable> {
    RatioTable::from_td(td_scores(&v.v, reward, ds, mdp)?, clip, tag)
}
