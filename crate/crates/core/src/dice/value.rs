use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::TransitionDataset;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::optim::{gradient_descent, newton_minimize, NewtonOptions, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualSolver {
    /// Damped Newton on the sample-aggregated objective.
    #[default]
    Newton,
    /// Fixed-step gradient descent.
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualConfig {
    pub solver: DualSolver,
    pub max_iters: usize,
    pub tol: f64,
    /// Step size for gradient descent.
    pub step_size: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            solver: DualSolver::Newton,
            max_iters: 50_000,
            tol: 1e-8,
            step_size: 0.5,
        }
    }
}

/// Tabular value function with solve diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub v: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// False when the iteration budget ran out first; `v` is then the best iterate.
    pub converged: bool,
}

#[derive(Debug, Clone)]
struct Group {
    /// Sparse coefficients `c` with `δ = r + c·V`: `γP(s'|s,a)` on successors, `-1` on `s`.
    coef: Vec<(usize, f64)>,
    reward: f64,
    weight: f64,
}

/// The convex dual `f(V) = (1-γ) E_ρ̂0[V] + log E_D exp(R + γ T V - V)`.
///
/// Samples sharing a TD key (and reward) are merged: `(s,a)` when the exact
/// transition kernel is supplied, `(s,a,s')` when the sampled next state is used.
#[derive(Debug, Clone)]
pub struct DualProblem {
    num_states: usize,
    gamma: f64,
    init: Vec<(usize, f64)>,
    groups: Vec<Group>,
}

fn check_dataset(ds: &TransitionDataset, reward: &[f64], mdp: Option<&TabularMdp>) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Dataset("coverage dataset is empty".into()));
    }
    if reward.len() != ds.len() {
        return Err(Error::Misaligned(format!(
            "{} rewards for {} samples",
            reward.len(),
            ds.len()
        )));
    }
    if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument(format!("reward of sample {i} is not finite")));
    }
    match mdp {
        Some(m) => {
            if m.num_states() != ds.num_states || m.num_actions() != ds.num_actions {
                return Err(Error::InvalidArgument("MDP and dataset shapes differ".into()));
            }
            Ok(m.discount())
        }
        None => Ok(ds.gamma),
    }
}

impl DualProblem {
    /// `mdp = Some` selects exact TD targets, `None` the sampled next state.
    pub fn new(ds: &TransitionDataset, reward: &[f64], mdp: Option<&TabularMdp>) -> Result<Self> {
        let gamma = check_dataset(ds, reward, mdp)?;
        let starts = ds.initial_states();
        if starts.is_empty() {
            return Err(Error::Dataset("dataset has no episode starts".into()));
        }
        let mut init = vec![0.0; ds.num_states];
        for &s in &starts {
            init[s] += (1.0 - gamma) / starts.len() as f64;
        }
        let init = init.into_iter().enumerate().filter(|(_, w)| *w != 0.0).collect();

        let succ = mdp.map(TabularMdp::sparse_successors);
        let na = ds.num_actions;
        let mut index: HashMap<(usize, usize, usize, u64), usize> = HashMap::new();
        let mut groups: Vec<Group> = Vec::new();
        let unit = 1.0 / ds.len() as f64;
        for (rec, &r) in ds.samples.iter().zip(reward) {
            let sp = if succ.is_some() { usize::MAX } else { rec.next_state };
            let key = (rec.state, rec.action, sp, r.to_bits());
            if let Some(&g) = index.get(&key) {
                groups[g].weight += unit;
                continue;
            }
            let mut coef = vec![(rec.state, -1.0)];
            match &succ {
                Some(table) => coef.extend(
                    table[rec.state * na + rec.action]
                        .iter()
                        .map(|&(t, p)| (t, gamma * p)),
                ),
                None => coef.push((rec.next_state, gamma)),
            }
            index.insert(key, groups.len());
            groups.push(Group {
                coef,
                reward: r,
                weight: unit,
            });
        }
        Ok(Self {
            num_states: ds.num_states,
            gamma,
            init,
            groups,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn td(&self, g: &Group, v: &[f64]) -> f64 {
        g.reward + g.coef.iter().map(|&(s, c)| c * v[s]).sum::<f64>()
    }

    /// Softmax weights over groups and the log-partition.
    fn weights(&self, v: &[f64]) -> (Vec<f64>, f64) {
        let td: Vec<f64> = self.groups.iter().map(|g| self.td(g, v)).collect();
        let m = td.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = td
            .iter()
            .zip(&self.groups)
            .map(|(d, g)| g.weight * (d - m).exp())
            .collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
        (w, m + z.ln())
    }

    fn linear(&self, v: &[f64]) -> f64 {
        self.init.iter().map(|&(s, w)| w * v[s]).sum()
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        self.linear(v) + self.weights(v).1
    }

    pub fn objective_and_gradient(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let (f, g, _) = self.evaluate(v, false);
        (f, g)
    }

    fn evaluate(&self, v: &[f64], want_h: bool) -> (f64, Vec<f64>, DMatrix<f64>) {
        let n = self.num_states;
        let (w, lse) = self.weights(v);
        let mut grad = vec![0.0; n];
        for &(s, c) in &self.init {
            grad[s] += c;
        }
        let mut mean = vec![0.0; n];
        let mut h = DMatrix::zeros(if want_h { n } else { 0 }, if want_h { n } else { 0 });
        for (g, &wg) in self.groups.iter().zip(&w) {
            if wg == 0.0 {
                continue;
            }
            for &(s, c) in &g.coef {
                mean[s] += wg * c;
            }
            if want_h {
                for &(i, ci) in &g.coef {
                    for &(j, cj) in &g.coef {
                        h[(i, j)] += wg * ci * cj;
                    }
                }
            }
        }
        grad.iter_mut().zip(&mean).for_each(|(a, b)| *a += b);
        if want_h {
            h -= DMatrix::from_fn(n, n, |i, j| mean[i] * mean[j]);
        }
        (self.linear(v) + lse, grad, h)
    }

    /// Minimise from `v0`.
    pub fn solve(&self, v0: Vec<f64>, config: &DualConfig) -> Result<ValueFunction> {
        if v0.len() != self.num_states {
            return Err(Error::InvalidArgument("warm start has the wrong length".into()));
        }
        let opts = NewtonOptions {
            max_iters: config.max_iters,
            tol: config.tol,
        };
        let out: Outcome = match config.solver {
            DualSolver::Newton => {
                let n = self.num_states as f64;
                newton_minimize(
                    v0,
                    |v| self.objective(v),
                    |v| {
                        // The objective is flat along V + const; the rank-one
                        // term pins that direction without changing the step.
                        let (f, g, mut h) = self.evaluate(v, true);
                        h.add_scalar_mut(1.0 / n);
                        (f, g, h)
                    },
                    opts,
                )
            }
            DualSolver::GradientDescent => {
                gradient_descent(v0, |v| self.objective_and_gradient(v), config.step_size, opts)
            }
        };
        Ok(ValueFunction {
            v: out.x,
            objective: out.value,
            iterations: out.iterations,
            grad_norm: out.grad_norm,
            converged: out.converged,
        })
    }
}

/// Solve the dual value problem for per-sample `reward`, optionally warm-started.
pub fn solve_dual_value(
    ds: &TransitionDataset,
    reward: &[f64],
    mdp: Option<&TabularMdp>,
    config: &DualConfig,
    warm_start: Option<&[f64]>,
) -> Result<ValueFunction> {
    let problem = DualProblem::new(ds, reward, mdp)?;
    let v0 = warm_start.map_or_else(|| vec![0.0; ds.num_states], <[f64]>::to_vec);
    problem.solve(v0, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_coverage_dataset, DatasetSizes, Sample};
    use crate::mdp::Policy;
    use crate::optim::{finite_difference_gradient, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64) -> (TabularMdp, TransitionDataset, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = TabularMdp::random(5, 2, 0.9, &mut rng);
        let pi = Policy::random(5, 2, &mut rng);
        let ds = build_coverage_dataset(
            &mdp,
            &[(pi.clone(), 1.0)],
            &pi,
            0.0,
            DatasetSizes {
                transitions: 2000,
                horizon: 100,
            },
            seed,
        )
        .unwrap();
        let r = (0..ds.len()).map(|i| ((i % 7) as f64 - 3.0) * 0.3).collect();
        (mdp, ds, r)
    }

    #[test]
    fn single_state_constant_reward() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.8).unwrap();
        let ds = TransitionDataset {
            num_states: 1,
            num_actions: 1,
            gamma: 0.8,
            samples: (0..4)
                .map(|t| Sample {
                    episode: 0,
                    step: t,
                    state: 0,
                    action: 0,
                    next_state: 0,
                })
                .collect(),
            feature_ref: None,
        };
        let r = vec![0.7; 4];
        let p = DualProblem::new(&ds, &r, Some(&mdp)).unwrap();
        for v in [-3.0, 0.0, 11.0] {
            assert!((p.objective(&[v]) - 0.7).abs() < 1e-12);
        }
        let vf = solve_dual_value(&ds, &r, Some(&mdp), &DualConfig::default(), None).unwrap();
        assert!((vf.objective - 0.7).abs() < 1e-12);
        assert!(vf.converged);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, oracle) in [(1, true), (2, false)] {
            let (mdp, ds, r) = random_instance(seed);
            let p = DualProblem::new(&ds, &r, oracle.then_some(&mdp)).unwrap();
            let v: Vec<f64> = (0..5).map(|s| (s as f64).sin()).collect();
            let (_, g) = p.objective_and_gradient(&v);
            let fd = finite_difference_gradient(|x| p.objective(x), &v, 1e-5);
            assert!(relative_error(&g, &fd) < 1e-8);
            // invariance along constants
            assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn newton_and_gradient_descent_agree() {
        let (mdp, ds, r) = random_instance(4);
        let newton = solve_dual_value(&ds, &r, Some(&mdp), &DualConfig::default(), None).unwrap();
        assert!(newton.converged && newton.iterations < 50);
        let gd = solve_dual_value(
            &ds,
            &r,
            Some(&mdp),
            &DualConfig {
                solver: DualSolver::GradientDescent,
                step_size: 1.0,
                tol: 1e-7,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert!(gd.converged);
        assert!((newton.objective - gd.objective).abs() < 1e-9);
    }

    #[test]
    fn warm_start_takes_fewer_steps() {
        let (mdp, ds, r) = random_instance(6);
        let cfg = DualConfig::default();
        let cold = solve_dual_value(&ds, &r, Some(&mdp), &cfg, None).unwrap();
        let warm = solve_dual_value(&ds, &r, Some(&mdp), &cfg, Some(&cold.v)).unwrap();
        assert!(warm.iterations <= 1);
        assert!((warm.objective - cold.objective).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let (mdp, ds, r) = random_instance(7);
        let cfg = DualConfig {
            solver: DualSolver::GradientDescent,
            max_iters: 3,
            step_size: 0.1,
            ..Default::default()
        };
        let vf = solve_dual_value(&ds, &r, Some(&mdp), &cfg, None).unwrap();
        assert!(!vf.converged);
        assert!(vf.objective.is_finite());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (mdp, ds, mut r) = random_instance(8);
        assert!(DualProblem::new(&ds, &r[1..], Some(&mdp)).is_err());
        r[3] = f64::NAN;
        assert!(DualProblem::new(&ds, &r, Some(&mdp)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let other = TabularMdp::random(4, 2, 0.9, &mut rng);
        let r: Vec<f64> = (0..ds.len()).map(|_| rng.random()).collect();
        assert!(DualProblem::new(&ds, &r, Some(&other)).is_err());
    }
}
