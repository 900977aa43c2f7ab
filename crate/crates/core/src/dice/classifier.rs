use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::{ExpertStateSet, TransitionDataset};
use crate::error::{Error, Result};
use crate::mdp::FeatureMap;
use crate::optim::{newton_minimize, NewtonOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    /// Smoothed per-state count ratio.
    #[default]
    BayesCount,
    /// Logistic regression on the feature map.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub mode: ClassifierMode,
    /// Additive smoothing for count mode.
    pub alpha: f64,
    /// L2 penalty on the logistic weights (bias unpenalised).
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            mode: ClassifierMode::BayesCount,
            alpha: 0.5,
            l2: 1e-6,
            max_iters: 200,
            tol: 1e-10,
        }
    }
}

/// Expert-versus-coverage state classifier, `c(s)` ≈ `d_E(s) / (d_E(s) + d_O(s))`
/// up to the sample-size ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateClassifier {
    pub mode: ClassifierMode,
    pub alpha: f64,
    /// `c(s)` for every state.
    pub probs: Vec<f64>,
    /// Logistic weights followed by the bias; empty in count mode.
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// Final training loss; `None` in count mode, which fits nothing.
    pub loss: Option<f64>,
}

/// Per-state aggregated logistic regression: expert states labelled 1,
/// coverage states labelled 0, mean cross-entropy plus `l2/2 |w|²`.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    x: Vec<Vec<f64>>,
    n_expert: Vec<f64>,
    n_coverage: Vec<f64>,
    total: f64,
    l2: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticProblem {
    pub fn new(fmap: &FeatureMap, n_expert: Vec<f64>, n_coverage: Vec<f64>, l2: f64) -> Result<Self> {
        let ns = fmap.num_states();
        if n_expert.len() != ns || n_coverage.len() != ns {
            return Err(Error::InvalidArgument("count vectors do not match the feature map".into()));
        }
        let total = n_expert.iter().sum::<f64>() + n_coverage.iter().sum::<f64>();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("no samples to fit".into()));
        }
        let x = (0..ns)
            .map(|s| {
                let mut v = fmap.get(s).to_vec();
                v.push(1.0);
                v
            })
            .collect();
        Ok(Self {
            x,
            n_expert,
            n_coverage,
            total,
            l2,
        })
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    fn logit(&self, s: usize, theta: &[f64]) -> f64 {
        self.x[s].iter().zip(theta).map(|(a, b)| a * b).sum()
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        let k = self.dim() - 1;
        0.5 * self.l2 * theta[..k].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let ce: f64 = (0..self.x.len())
            .map(|s| {
                let z = self.logit(s, theta);
                self.n_expert[s] * softplus(-z) + self.n_coverage[s] * softplus(z)
            })
            .sum();
        ce / self.total + self.penalty(theta)
    }

    pub fn loss_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (f, g, _) = self.loss_grad_hessian(theta, false);
        (f, g)
    }

    fn loss_grad_hessian(&self, theta: &[f64], want_h: bool) -> (f64, Vec<f64>, DMatrix<f64>) {
        let p = self.dim();
        let mut g = vec![0.0; p];
        let mut h = DMatrix::zeros(if want_h { p } else { 0 }, if want_h { p } else { 0 });
        for (s, x) in self.x.iter().enumerate() {
            let n = self.n_expert[s] + self.n_coverage[s];
            if n == 0.0 {
                continue;
            }
            let c = sigmoid(self.logit(s, theta));
            let r = (n * c - self.n_expert[s]) / self.total;
            g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += r * xi);
            if want_h {
                let k = n * c * (1.0 - c) / self.total;
                for i in 0..p {
                    for j in 0..p {
                        h[(i, j)] += k * x[i] * x[j];
                    }
                }
            }
        }
        for i in 0..p - 1 {
            g[i] += self.l2 * theta[i];
            if want_h {
                h[(i, i)] += self.l2;
            }
        }
        (self.loss(theta), g, h)
    }

    fn fit(&self, max_iters: usize, tol: f64) -> crate::optim::Outcome {
        newton_minimize(
            vec![0.0; self.dim()],
            |t| self.loss(t),
            |t| self.loss_grad_hessian(t, true),
            NewtonOptions { max_iters, tol },
        )
    }

    pub fn probs(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.x.len()).map(|s| sigmoid(self.logit(s, theta))).collect()
    }
}

fn state_counts(states: impl Iterator<Item = usize>, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n];
    states.for_each(|s| c[s] += 1.0);
    c
}

/// Fit the classifier separating expert states (label 1) from coverage
/// states (label 0). This is the usual discriminator orientation, so
/// `log(c/(1-c))` is large on expert-typical states.
pub fn fit_state_classifier(
    expert: &ExpertStateSet,
    coverage: &TransitionDataset,
    fmap: &FeatureMap,
    config: &ClassifierConfig,
) -> Result<StateClassifier> {
    expert.validate()?;
    if coverage.is_empty() {
        return Err(Error::Dataset("coverage dataset is empty".into()));
    }
    let ns = coverage.num_states;
    if expert.num_states != ns || fmap.num_states() != ns {
        return Err(Error::InvalidArgument(format!(
            "state counts disagree: expert {}, coverage {}, features {}",
            expert.num_states,
            ns,
            fmap.num_states()
        )));
    }
    let n_e = state_counts(expert.states.iter().copied(), ns);
    let n_o = state_counts(coverage.states(), ns);
    match config.mode {
        ClassifierMode::BayesCount => {
            let a = config.alpha;
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidArgument(format!("smoothing {a} must be >= 0")));
            }
            let probs = n_e
                .iter()
                .zip(&n_o)
                .map(|(e, o)| {
                    let den = e + o + 2.0 * a;
                    if den > 0.0 {
                        (e + a) / den
                    } else {
                        0.5
                    }
                })
                .collect();
            Ok(StateClassifier {
                mode: config.mode,
                alpha: a,
                probs,
                weights: Vec::new(),
                iterations: 0,
                loss: None,
            })
        }
        ClassifierMode::Logistic => {
            let problem = LogisticProblem::new(fmap, n_e, n_o, config.l2)?;
            let out = problem.fit(config.max_iters, config.tol);
            Ok(StateClassifier {
                mode: config.mode,
                alpha: 0.0,
                probs: problem.probs(&out.x),
                weights: out.x,
                iterations: out.iterations,
                loss: Some(out.value),
            })
        }
    }
}

/// Per-state imitation reward `log(c/(1-c))`, clipped to `[-log C, log C]`.
pub fn expert_reward(classifier: &StateClassifier, clip: f64) -> Vec<f64> {
    let bound = clip.ln();
    classifier
        .probs
        .iter()
        .map(|&c| {
            let r = c.ln() - (1.0 - c).ln();
            if r.is_nan() {
                0.0
            } else {
                r.clamp(-bound, bound)
            }
        })
        .collect()
}
