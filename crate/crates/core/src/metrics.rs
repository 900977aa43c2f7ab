//! Diversity and performance metrics, and the metrics CSV stream.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dice::RatioTable;
use crate::error::{Error, Result};
use crate::mdp::{expected_return, successor_features, Evaluation, FeatureMap, Policy, TabularMdp};

/// Symmetric pairwise distances with their mean over unordered pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDistance {
    pub headline: f64,
    pub matrix: Vec<Vec<f64>>,
}

impl PairwiseDistance {
    fn from_fn(n: usize, mut dist: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("pairwise distances need at least two skills".into()));
        }
        let mut matrix = vec![vec![0.0; n]; n];
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = dist(i, j);
                matrix[i][j] = d;
                matrix[j][i] = d;
                sum += d;
            }
        }
        Ok(Self {
            headline: sum / (n * (n - 1) / 2) as f64,
            matrix,
        })
    }

    /// `(i, j, distance)` for `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.matrix.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, self.matrix[i][j])))
    }
}

/// `D(i,j) = (1/N) Σ_samples |η_i - η_j|`, averaged over pairs.
pub fn ratio_l1_distance(tables: &[RatioTable]) -> Result<PairwiseDistance> {
    if let Some(t) = tables.iter().find(|t| t.len() != tables[0].len()) {
        return Err(Error::Misaligned(format!("{:?} has a different length", t.tag)));
    }
    PairwiseDistance::from_fn(tables.len(), |i, j| {
        let (a, b) = (&tables[i].eta, &tables[j].eta);
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    })
}

/// Pairwise `‖ψ_i - ψ_j‖₂` between successor features.
pub fn sf_l2_distance(
    policies: &[Policy],
    mdp: &TabularMdp,
    fmap: &FeatureMap,
    eval: Evaluation,
) -> Result<PairwiseDistance> {
    let psi = policies
        .iter()
        .map(|p| successor_features(mdp, p, fmap, eval).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    PairwiseDistance::from_fn(psi.len(), |i, j| {
        psi[i]
            .iter()
            .zip(&psi[j])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnFractions {
    pub expert_return: f64,
    /// `None` when the expert return is zero.
    pub fractions: Vec<Option<f64>>,
}

impl ReturnFractions {
    pub fn is_defined(&self) -> bool {
        self.fractions.iter().all(Option::is_some)
    }

    pub fn mean(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.fractions.iter().copied().collect();
        v.filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Each skill's expected return as a fraction of the recovered expert's.
pub fn return_fraction(
    policies: &[Policy],
    expert: &Policy,
    mdp: &TabularMdp,
    task_reward: &[f64],
    eval: Evaluation,
) -> Result<ReturnFractions> {
    let expert_return = expected_return(mdp, expert, task_reward, eval)?.mean;
    let fractions = policies
        .iter()
        .map(|p| {
            let r = expected_return(mdp, p, task_reward, eval)?.mean;
            Ok((expert_return != 0.0).then(|| r / expert_return))
        })
        .collect::<Result<_>>()?;
    Ok(ReturnFractions {
        expert_return,
        fractions,
    })
}

/// One row of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub iteration: usize,
    /// `z3`, `z0-z2`, or `all`.
    pub skill_or_pair: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub epsilon: f64,
}

pub const METRICS_HEADER: [&str; 6] = ["iteration", "skill_or_pair", "metric", "value", "seed", "epsilon"];

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Dataset(format!("{other:?}")),
        })?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Dataset(format!("{other:?}")),
    })?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
    Ok(rows)
}
