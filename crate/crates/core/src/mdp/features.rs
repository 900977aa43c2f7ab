use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-state feature vectors `φ(s)` with an optional coordinate projection.
///
/// The projection selects the coordinates the classifier and the skill
/// discriminator see; rollouts and successor features use `get`, which is
/// already projected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub name: String,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projection: Option<Vec<usize>>,
}

impl FeatureMap {
    pub fn new(name: impl Into<String>, features: Vec<Vec<f64>>) -> Result<Self> {
        let dim = features
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("feature map needs at least one state".into()))?;
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidArgument("feature dimension must be positive and constant".into()));
        }
        if features.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature".into()));
        }
        Ok(Self {
            name: name.into(),
            features,
            projection: None,
        })
    }

    pub fn one_hot(num_states: usize) -> Self {
        let features = (0..num_states)
            .map(|s| {
                let mut v = vec![0.0; num_states];
                v[s] = 1.0;
                v
            })
            .collect();
        Self {
            name: "one_hot".into(),
            features,
            projection: None,
        }
    }

    /// Keep only the listed coordinates of the raw features.
    pub fn with_projection(mut self, coords: Vec<usize>) -> Result<Self> {
        let raw_dim = self.features[0].len();
        if coords.is_empty() || coords.iter().any(|&c| c >= raw_dim) {
            return Err(Error::InvalidArgument(format!(
                "projection {coords:?} invalid for raw dimension {raw_dim}"
            )));
        }
        self.features = self
            .features
            .iter()
            .map(|f| coords.iter().map(|&c| f[c]).collect())
            .collect();
        self.projection = Some(coords);
        Ok(self)
    }

    pub fn projection(&self) -> Option<&[usize]> {
        self.projection.as_deref()
    }

    pub fn num_states(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn get(&self, s: usize) -> &[f64] {
        &self.features[s]
    }

    /// Whether this is the identity (one-hot) encoding, enabling tabular fast paths.
    pub fn is_one_hot(&self) -> bool {
        self.dim() == self.num_states()
            && self.features.iter().enumerate().all(|(s, f)| {
                f.iter()
                    .enumerate()
                    .all(|(k, &x)| x == if k == s { 1.0 } else { 0.0 })
            })
    }

    /// Standardise every coordinate to zero mean and unit variance over the
    /// given multiset of states. Constant coordinates are only centred.
    pub fn normalized(&self, states: &[usize]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument("cannot normalise over zero states".into()));
        }
        let dim = self.dim();
        let n = states.len() as f64;
        let mut mean = vec![0.0; dim];
        for &s in states {
            mean.iter_mut().zip(&self.features[s]).for_each(|(m, x)| *m += x / n);
        }
        let mut var = vec![0.0; dim];
        for &s in states {
            var.iter_mut()
                .zip(self.features[s].iter().zip(&mean))
                .for_each(|(v, (x, m))| *v += (x - m).powi(2) / n);
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| if *v > 1e-300 { v.sqrt() } else { 1.0 })
            .collect();
        let features = self
            .features
            .iter()
            .map(|f| {
                f.iter()
                    .zip(mean.iter().zip(&scale))
                    .map(|(x, (m, sd))| (x - m) / sd)
                    .collect()
            })
            .collect();
        Ok(Self {
            name: format!("{}+normalized", self.name),
            features,
            projection: self.projection.clone(),
        })
    }
}
