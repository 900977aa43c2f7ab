//! Skills, the skill discriminator `q(z|s)`, its ensemble disagreement bonus,
//! and the variational mutual-information lower bound.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::TransitionDataset;
use crate::dice::RatioTable;
use crate::error::{Error, Result};
use crate::mdp::FeatureMap;
use crate::optim::{newton_minimize, NewtonOptions};
use crate::par::{for_each_mut, Parallelism};

/// `|Z|` skills with the uniform prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillSpace {
    pub num_skills: usize,
}

impl SkillSpace {
    pub fn new(num_skills: usize) -> Result<Self> {
        if num_skills == 0 {
            return Err(Error::InvalidArgument("need at least one skill".into()));
        }
        Ok(Self { num_skills })
    }

    pub fn prior(&self) -> Vec<f64> {
        vec![1.0 / self.num_skills as f64; self.num_skills]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorOptimizer {
    #[default]
    Newton,
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub optimizer: DiscriminatorOptimizer,
    /// Optimiser steps per training call.
    pub steps: usize,
    /// Step size of the gradient optimiser.
    pub lr: f64,
    /// L2 penalty on non-bias weights.
    pub l2: f64,
    /// Half-width of the uniform random initialisation.
    pub init_scale: f64,
    pub ensemble_size: usize,
    /// Weight of the disagreement bonus; zero disables the ensemble.
    pub bonus_weight: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            optimizer: DiscriminatorOptimizer::Newton,
            steps: 2,
            lr: 1.0,
            l2: 1e-4,
            init_scale: 0.5,
            ensemble_size: 4,
            bonus_weight: 0.1,
        }
    }
}

/// Softmax-regression skill classifier. With one-hot features the logits are
/// a per-state table; otherwise they are linear in the features plus a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillDiscriminator {
    pub num_skills: usize,
    pub feature_ref: String,
    tabular: bool,
    /// Parameters per skill (`x(s)` has a trailing bias unless tabular).
    dim: usize,
    /// Row-major `|Z| x dim`.
    weights: Vec<f64>,
}

fn softmax(l: &[f64]) -> Vec<f64> {
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = l.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn log_softmax(l: &[f64]) -> Vec<f64> {
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + l.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    l.iter().map(|x| x - lse).collect()
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn design(fmap: &FeatureMap, s: usize, tabular: bool) -> Vec<f64> {
    let mut x = fmap.get(s).to_vec();
    if !tabular {
        x.push(1.0);
    }
    x
}

impl SkillDiscriminator {
    /// Random initialisation in `[-scale, scale]`.
    pub fn random(num_skills: usize, fmap: &FeatureMap, scale: f64, seed: u64) -> Result<Self> {
        SkillSpace::new(num_skills)?;
        let tabular = fmap.is_one_hot();
        let dim = fmap.dim() + usize::from(!tabular);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..num_skills * dim)
            .map(|_| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 })
            .collect();
        Ok(Self {
            num_skills,
            feature_ref: fmap.name.clone(),
            tabular,
            dim,
            weights,
        })
    }

    pub fn from_weights(num_skills: usize, fmap: &FeatureMap, weights: Vec<f64>) -> Result<Self> {
        let mut d = Self::random(num_skills, fmap, 0.0, 0)?;
        if weights.len() != d.weights.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} weights, got {}",
                d.weights.len(),
                weights.len()
            )));
        }
        d.weights = weights;
        Ok(d)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_tabular(&self) -> bool {
        self.tabular
    }

    fn logits(&self, weights: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.num_skills)
            .map(|z| {
                weights[z * self.dim..(z + 1) * self.dim]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum()
            })
            .collect()
    }

    /// `q(·|s)`.
    pub fn probs(&self, fmap: &FeatureMap, s: usize) -> Vec<f64> {
        if self.tabular {
            return softmax(&self.state_logits(&self.weights, s));
        }
        softmax(&self.logits(&self.weights, &design(fmap, s, false)))
    }

    fn state_logits(&self, weights: &[f64], s: usize) -> Vec<f64> {
        (0..self.num_skills).map(|z| weights[z * self.dim + s]).collect()
    }

    /// `q[s][z]` for every state.
    pub fn table(&self, fmap: &FeatureMap) -> Vec<Vec<f64>> {
        (0..fmap.num_states()).map(|s| self.probs(fmap, s)).collect()
    }
}

/// Per-state skill masses `m[s][z] = (1/|Z|)(1/N) Σ_{i:s_i=s} η_{z,i}`.
pub fn skill_state_masses(tables: &[RatioTable], ds: &TransitionDataset) -> Result<Vec<Vec<f64>>> {
    if tables.is_empty() {
        return Err(Error::InvalidArgument("need one ratio table per skill".into()));
    }
    let nz = tables.len();
    let scale = 1.0 / (nz as f64 * ds.len() as f64);
    let mut m = vec![vec![0.0; nz]; ds.num_states];
    for (z, t) in tables.iter().enumerate() {
        t.check_aligned(ds)?;
        for (r, e) in ds.samples.iter().zip(&t.eta) {
            m[r.state][z] += e * scale;
        }
    }
    Ok(m)
}

/// Negated, penalised training objective
/// `-Σ_s Σ_z m[s][z] log q(z|s) + l2/2 |W|²` (bias unpenalised).
#[derive(Debug, Clone)]
pub struct DiscriminatorProblem<'a> {
    template: &'a SkillDiscriminator,
    x: Vec<Vec<f64>>,
    masses: Vec<Vec<f64>>,
    l2: f64,
}

impl<'a> DiscriminatorProblem<'a> {
    pub fn new(template: &'a SkillDiscriminator, fmap: &FeatureMap, masses: Vec<Vec<f64>>, l2: f64) -> Result<Self> {
        if masses.len() != fmap.num_states() || masses.iter().any(|m| m.len() != template.num_skills) {
            return Err(Error::Misaligned("skill masses do not match states x skills".into()));
        }
        let x = (0..fmap.num_states())
            .map(|s| design(fmap, s, template.tabular))
            .collect();
        Ok(Self {
            template,
            x,
            masses,
            l2,
        })
    }

    fn penalised(&self, k: usize) -> bool {
        self.template.tabular || k + 1 < self.template.dim
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        let d = self.template;
        let mut f = 0.0;
        for (x, m) in self.x.iter().zip(&self.masses) {
            if m.iter().all(|&v| v == 0.0) {
                continue;
            }
            let lq = log_softmax(&d.logits(w, x));
            f -= m.iter().zip(&lq).map(|(a, b)| a * b).sum::<f64>();
        }
        for z in 0..d.num_skills {
            for k in 0..d.dim {
                if self.penalised(k) {
                    f += 0.5 * self.l2 * w[z * d.dim + k].powi(2);
                }
            }
        }
        f
    }

    pub fn loss_and_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let d = self.template;
        let mut g = vec![0.0; w.len()];
        for (x, m) in self.x.iter().zip(&self.masses) {
            let total: f64 = m.iter().sum();
            if total == 0.0 {
                continue;
            }
            let q = softmax(&d.logits(w, x));
            for z in 0..d.num_skills {
                let r = total * q[z] - m[z];
                for (k, xk) in x.iter().enumerate() {
                    g[z * d.dim + k] += r * xk;
                }
            }
        }
        for z in 0..d.num_skills {
            for k in 0..d.dim {
                if self.penalised(k) {
                    g[z * d.dim + k] += self.l2 * w[z * d.dim + k];
                }
            }
        }
        (self.loss(w), g)
    }

    fn hessian(&self, w: &[f64]) -> DMatrix<f64> {
        let d = self.template;
        let n = w.len();
        let mut h = DMatrix::zeros(n, n);
        for (x, m) in self.x.iter().zip(&self.masses) {
            let total: f64 = m.iter().sum();
            if total == 0.0 {
                continue;
            }
            let q = softmax(&d.logits(w, x));
            for z in 0..d.num_skills {
                for y in 0..d.num_skills {
                    let c = total * (if z == y { q[z] } else { 0.0 } - q[z] * q[y]);
                    if c == 0.0 {
                        continue;
                    }
                    for (k, xk) in x.iter().enumerate() {
                        for (j, xj) in x.iter().enumerate() {
                            h[(z * d.dim + k, y * d.dim + j)] += c * xk * xj;
                        }
                    }
                }
            }
        }
        for z in 0..d.num_skills {
            for k in 0..d.dim {
                if self.penalised(k) {
                    h[(z * d.dim + k, z * d.dim + k)] += self.l2;
                }
            }
        }
        h
    }
}

/// One training call: `config.steps` optimiser steps on the weighted
/// log-likelihood, starting from `init`. Returns the trained copy and its loss.
pub fn train_discriminator(
    init: &SkillDiscriminator,
    tables: &[RatioTable],
    ds: &TransitionDataset,
    fmap: &FeatureMap,
    config: &DiscriminatorConfig,
) -> Result<(SkillDiscriminator, f64)> {
    if tables.len() != init.num_skills {
        return Err(Error::InvalidArgument(format!(
            "{} ratio tables for {} skills",
            tables.len(),
            init.num_skills
        )));
    }
    let masses = skill_state_masses(tables, ds)?;
    let mut out = init.clone();
    if init.tabular {
        // The objective separates over states: optimise each block alone.
        let nz = init.num_skills;
        for (s, m) in masses.iter().enumerate() {
            let total: f64 = m.iter().sum();
            let l0 = init.state_logits(&init.weights, s);
            let f = |l: &[f64]| {
                let lq = log_softmax(l);
                -m.iter().zip(&lq).map(|(a, b)| a * b).sum::<f64>()
                    + 0.5 * config.l2 * l.iter().map(|v| v * v).sum::<f64>()
            };
            let grad = |l: &[f64]| -> Vec<f64> {
                let q = softmax(l);
                (0..nz).map(|z| total * q[z] - m[z] + config.l2 * l[z]).collect()
            };
            let l = match config.optimizer {
                DiscriminatorOptimizer::Newton => {
                    newton_minimize(
                        l0,
                        f,
                        |l| {
                            let q = softmax(l);
                            let h = DMatrix::from_fn(nz, nz, |a, b| {
                                total * (if a == b { q[a] } else { 0.0 } - q[a] * q[b])
                                    + if a == b { config.l2 } else { 0.0 }
                            });
                            (f(l), grad(l), h)
                        },
                        NewtonOptions {
                            max_iters: config.steps,
                            tol: 1e-12,
                        },
                    )
                    .x
                }
                DiscriminatorOptimizer::Gradient => {
                    let mut l = l0;
                    for _ in 0..config.steps {
                        let g = grad(&l);
                        l.iter_mut().zip(&g).for_each(|(a, b)| *a -= config.lr * b);
                    }
                    l
                }
            };
            for z in 0..nz {
                out.weights[z * init.dim + s] = l[z];
            }
        }
    } else {
        let problem = DiscriminatorProblem::new(init, fmap, masses, config.l2)?;
        out.weights = match config.optimizer {
            DiscriminatorOptimizer::Newton => {
                newton_minimize(
                    init.weights.clone(),
                    |w| problem.loss(w),
                    |w| {
                        let (f, g) = problem.loss_and_grad(w);
                        (f, g, problem.hessian(w))
                    },
                    NewtonOptions {
                        max_iters: config.steps,
                        tol: 1e-12,
                    },
                )
                .x
            }
            DiscriminatorOptimizer::Gradient => {
                let mut w = init.weights.clone();
                for _ in 0..config.steps {
                    let (_, g) = problem.loss_and_grad(&w);
                    w.iter_mut().zip(&g).for_each(|(a, b)| *a -= config.lr * b);
                }
                w
            }
        };
    }
    let masses = skill_state_masses(tables, ds)?;
    let loss = DiscriminatorProblem::new(&out, fmap, masses, config.l2)?.loss(&out.weights);
    Ok((out, loss))
}

/// `Σ_z (1/N) Σ_i η_{z,i} log(|Z| q(z|s_i)) / |Z|`.
pub fn mi_lower_bound(
    tables: &[RatioTable],
    disc: &SkillDiscriminator,
    ds: &TransitionDataset,
    fmap: &FeatureMap,
) -> Result<f64> {
    let nz = disc.num_skills;
    if tables.len() != nz {
        return Err(Error::InvalidArgument("one ratio table per skill required".into()));
    }
    let masses = skill_state_masses(tables, ds)?;
    let log_nz = (nz as f64).ln();
    let mut bound = 0.0;
    for (s, m) in masses.iter().enumerate() {
        if m.iter().all(|&v| v == 0.0) {
            continue;
        }
        let q = disc.probs(fmap, s);
        bound += m
            .iter()
            .zip(&q)
            .map(|(mz, qz)| mz * (log_nz + qz.ln()))
            .sum::<f64>();
    }
    Ok(bound)
}

/// `H(mean_i q_i) - mean_i H(q_i)`.
pub fn disagreement(dists: &[Vec<f64>]) -> f64 {
    let n = dists.len() as f64;
    let k = dists[0].len();
    let mean: Vec<f64> = (0..k).map(|z| dists.iter().map(|d| d[z]).sum::<f64>() / n).collect();
    entropy(&mean) - dists.iter().map(|d| entropy(d)).sum::<f64>() / n
}

/// Independently initialised discriminators; member 0 supplies `q(z|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorEnsemble {
    pub members: Vec<SkillDiscriminator>,
    pub bonus_weight: f64,
}

impl DiscriminatorEnsemble {
    pub fn new(num_skills: usize, fmap: &FeatureMap, config: &DiscriminatorConfig, seed: u64) -> Result<Self> {
        let size = if config.bonus_weight > 0.0 {
            if config.ensemble_size < 2 {
                return Err(Error::InvalidArgument(
                    "the disagreement bonus needs at least two ensemble members".into(),
                ));
            }
            config.ensemble_size
        } else {
            1
        };
        let members = (0..size)
            .map(|k| {
                SkillDiscriminator::random(
                    num_skills,
                    fmap,
                    config.init_scale,
                    crate::datagen::sub_seed(seed, 100 + k as u64),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            members,
            bonus_weight: config.bonus_weight,
        })
    }

    pub fn primary(&self) -> &SkillDiscriminator {
        &self.members[0]
    }

    /// Train every member from its current weights; returns the primary's loss.
    pub fn train(
        &mut self,
        par: Parallelism,
        tables: &[RatioTable],
        ds: &TransitionDataset,
        fmap: &FeatureMap,
        config: &DiscriminatorConfig,
    ) -> Result<f64> {
        let mut results: Vec<Option<Result<(SkillDiscriminator, f64)>>> =
            (0..self.members.len()).map(|_| None).collect();
        let members = &self.members;
        for_each_mut(par, &mut results, |k, slot| {
            *slot = Some(train_discriminator(&members[k], tables, ds, fmap, config));
        });
        let mut loss = f64::NAN;
        for (k, r) in results.into_iter().enumerate() {
            let (m, l) = r.expect("every member trained")?;
            if k == 0 {
                loss = l;
            }
            self.members[k] = m;
        }
        Ok(loss)
    }

    /// Per-state bonus (zero for a single member).
    pub fn bonus_table(&self, fmap: &FeatureMap) -> Vec<f64> {
        (0..fmap.num_states())
            .map(|s| disdain_bonus(self, fmap, s))
            .collect()
    }
}

/// Ensemble disagreement at `state`.
pub fn disdain_bonus(ensemble: &DiscriminatorEnsemble, fmap: &FeatureMap, state: usize) -> f64 {
    if ensemble.members.len() < 2 {
        return 0.0;
    }
    let dists: Vec<Vec<f64>> = ensemble.members.iter().map(|m| m.probs(fmap, state)).collect();
    disagreement(&dists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Sample;
    use crate::dice::RatioTag;
    use crate::mdp::random_simplex;
    use crate::optim::{finite_difference_gradient, relative_error};
    use proptest::{prop_assert, proptest};

    fn dataset(states: &[usize], ns: usize) -> TransitionDataset {
        TransitionDataset {
            num_states: ns,
            num_actions: 1,
            gamma: 0.9,
            samples: states
                .iter()
                .enumerate()
                .map(|(i, &s)| Sample {
                    episode: i,
                    step: 0,
                    state: s,
                    action: 0,
                    next_state: s,
                })
                .collect(),
            feature_ref: None,
        }
    }

    /// Ratio table concentrating all weight on samples at `focus` (up to clipping).
    fn focused(ds: &TransitionDataset, focus: usize, z: usize) -> RatioTable {
        let td = ds
            .samples
            .iter()
            .map(|r| if r.state == focus { 0.0 } else { -1e3 })
            .collect();
        RatioTable::from_td(td, 1e9, RatioTag::Skill(z)).unwrap()
    }

    fn newton(steps: usize) -> DiscriminatorConfig {
        DiscriminatorConfig {
            steps,
            l2: 0.0,
            bonus_weight: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn separable_skills_are_recognised() {
        let ds = dataset(&[0, 1, 0, 1], 2);
        let fmap = FeatureMap::one_hot(2);
        let tables = [focused(&ds, 0, 0), focused(&ds, 1, 1)];
        let init = SkillDiscriminator::random(2, &fmap, 0.5, 1).unwrap();
        let (d, _) = train_discriminator(&init, &tables, &ds, &fmap, &newton(50)).unwrap();
        assert!(d.probs(&fmap, 0)[0] >= 0.99);
        assert!(d.probs(&fmap, 1)[1] >= 0.99);
        let b = mi_lower_bound(&tables, &d, &ds, &fmap).unwrap();
        assert!((b - 2f64.ln()).abs() < 0.02 && b <= 2f64.ln() + 1e-9);
    }

    #[test]
    fn identical_skills_give_uniform_posterior() {
        let ds = dataset(&[0, 1, 2, 2], 3);
        let fmap = FeatureMap::one_hot(3);
        let t = RatioTable::from_td(vec![0.3, -0.2, 0.1, 0.0], 100.0, RatioTag::Skill(0)).unwrap();
        let tables = vec![t; 3];
        let init = SkillDiscriminator::random(3, &fmap, 1.0, 2).unwrap();
        let (d, _) = train_discriminator(&init, &tables, &ds, &fmap, &newton(50)).unwrap();
        for s in 0..3 {
            assert!(d.probs(&fmap, s).iter().all(|q| (q - 1.0 / 3.0).abs() < 1e-9));
        }
        assert!(mi_lower_bound(&tables, &d, &ds, &fmap).unwrap().abs() < 1e-9);
    }

    #[test]
    fn linear_discriminator_learns_and_gradients_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let feats = (0..6).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let fmap = FeatureMap::new("xy", feats).unwrap();
        let init = SkillDiscriminator::random(3, &fmap, 0.5, 4).unwrap();
        assert!(!init.is_tabular());
        let masses: Vec<Vec<f64>> = (0..6).map(|_| random_simplex(3, &mut rng)).collect();
        let p = DiscriminatorProblem::new(&init, &fmap, masses, 0.1).unwrap();
        let (_, g) = p.loss_and_grad(init.weights());
        let fd = finite_difference_gradient(|w| p.loss(w), init.weights(), 1e-5);
        assert!(relative_error(&g, &fd) < 1e-7);

        let ds = dataset(&[0, 1, 2, 3, 4, 5, 5], 6);
        let tables = [focused(&ds, 0, 0), focused(&ds, 5, 1), focused(&ds, 2, 2)];
        let cfg = DiscriminatorConfig {
            steps: 30,
            l2: 1e-6,
            bonus_weight: 0.0,
            ..Default::default()
        };
        let (d, loss) = train_discriminator(&init, &tables, &ds, &fmap, &cfg).unwrap();
        let masses = skill_state_masses(&tables, &ds).unwrap();
        let before = DiscriminatorProblem::new(&init, &fmap, masses, 1e-6).unwrap().loss(init.weights());
        assert!(loss < before);
        assert!(d.probs(&fmap, 0)[0] > 0.5);
    }

    #[test]
    fn gradient_optimizer_improves_objective() {
        let ds = dataset(&[0, 1, 1, 2], 3);
        let fmap = FeatureMap::one_hot(3);
        let tables = [focused(&ds, 0, 0), focused(&ds, 1, 1)];
        let init = SkillDiscriminator::random(2, &fmap, 0.5, 5).unwrap();
        let cfg = DiscriminatorConfig {
            optimizer: DiscriminatorOptimizer::Gradient,
            steps: 200,
            lr: 5.0,
            l2: 0.0,
            bonus_weight: 0.0,
            ..Default::default()
        };
        let (d, _) = train_discriminator(&init, &tables, &ds, &fmap, &cfg).unwrap();
        assert!(d.probs(&fmap, 0)[0] > 0.9 && d.probs(&fmap, 1)[1] > 0.9);
    }

    #[test]
    fn disdain_examples() {
        assert!(disagreement(&[vec![0.3, 0.7], vec![0.3, 0.7]]).abs() < 1e-15);
        assert!((disagreement(&[vec![1.0, 0.0], vec![0.0, 1.0]]) - 2f64.ln()).abs() < 1e-15);
        let fmap = FeatureMap::one_hot(4);
        let cfg = DiscriminatorConfig::default();
        let e = DiscriminatorEnsemble::new(3, &fmap, &cfg, 0).unwrap();
        assert_eq!(e.members.len(), 4);
        assert!(e.bonus_table(&fmap).iter().all(|&b| b > 0.0));
        let bad = DiscriminatorConfig {
            ensemble_size: 1,
            ..cfg
        };
        assert!(DiscriminatorEnsemble::new(3, &fmap, &bad, 0).is_err());
    }

    #[test]
    fn ensemble_training_is_parallel_safe() {
        let ds = dataset(&[0, 1, 2, 3, 3, 1], 4);
        let fmap = FeatureMap::one_hot(4);
        let tables = [focused(&ds, 0, 0), focused(&ds, 3, 1)];
        let cfg = DiscriminatorConfig::default();
        let mut a = DiscriminatorEnsemble::new(2, &fmap, &cfg, 9).unwrap();
        let mut b = a.clone();
        a.train(Parallelism::Sequential, &tables, &ds, &fmap, &cfg).unwrap();
        b.train(Parallelism::Rayon, &tables, &ds, &fmap, &cfg).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn disagreement_is_nonnegative(seed in 0u64..10_000, k in 2usize..6, n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dists: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(k, &mut rng)).collect();
            prop_assert!(disagreement(&dists) >= -1e-12);
        }

        #[test]
        fn discriminator_outputs_are_distributions(seed in 0u64..1000) {
            let fmap = FeatureMap::new("f", vec![vec![0.1, -2.0], vec![3.0, 0.5], vec![0.0, 0.0]]).unwrap();
            let d = SkillDiscriminator::random(4, &fmap, 5.0, seed).unwrap();
            for s in 0..3 {
                let q = d.probs(&fmap, s);
                prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(q.iter().all(|&x| x > 0.0));
            }
        }
    }
}
