//! Finite MDPs, tabular policies, exact occupancy measures and rollouts.
//!
//! Occupancies are the `(1-γ)`-normalised discounted visitation
//! distributions, so every [`OccupancyMeasure`] sums to one.

mod document;
mod features;
pub mod gridworld;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_indexed, Parallelism};

pub use document::{GridworldSpec, MdpDocument};
pub use features::FeatureMap;

const STOCHASTIC_TOL: f64 = 1e-9;

/// Finite discounted MDP. Rewards live outside the MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// Row-major `[s][a][s']`.
    transition: Vec<f64>,
    initial_dist: Vec<f64>,
    discount: f64,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidMdp("num_states and num_actions must be positive".into()));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::InvalidMdp(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            )));
        }
        if initial_dist.len() != num_states {
            return Err(Error::InvalidMdp(format!(
                "initial_dist has {} entries, expected {num_states}",
                initial_dist.len()
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidMdp(format!("discount {discount} not in [0, 1)")));
        }
        for (row_idx, row) in transition.chunks(num_states).enumerate() {
            check_distribution(row).map_err(|m| {
                Error::InvalidMdp(format!(
                    "transition row (s={}, a={}): {m}",
                    row_idx / num_actions,
                    row_idx % num_actions
                ))
            })?;
        }
        check_distribution(&initial_dist)
            .map_err(|m| Error::InvalidMdp(format!("initial_dist: {m}")))?;
        Ok(Self {
            num_states,
            num_actions,
            transition,
            initial_dist,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// `P(·|s,a)` as a dense row.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// Nonzero successors of every `(s,a)`, indexed by `s * num_actions + a`.
    pub fn sparse_successors(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.num_states * self.num_actions)
            .map(|sa| {
                self.transition[sa * self.num_states..(sa + 1) * self.num_states]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(sp, &p)| (sp, p))
                    .collect()
            })
            .collect()
    }

    /// Same dynamics with a different start distribution.
    pub fn with_initial_dist(&self, initial_dist: Vec<f64>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            initial_dist,
            self.discount,
        )
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            self.initial_dist.clone(),
            discount,
        )
    }

    /// Random dense MDP with Dirichlet(1) rows, for tests and oracle checks.
    pub fn random<R: Rng + ?Sized>(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        rng: &mut R,
    ) -> Self {
        let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
        for _ in 0..num_states * num_actions {
            transition.extend(random_simplex(num_states, rng));
        }
        let initial_dist = random_simplex(num_states, rng);
        Self::new(num_states, num_actions, transition, initial_dist, discount)
            .expect("random MDP is valid by construction")
    }
}

fn check_distribution(p: &[f64]) -> std::result::Result<(), String> {
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(format!("entry {x} is negative or non-finite"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("sums to {total}, not 1"));
    }
    Ok(())
}

/// Uniform draw from the probability simplex (Dirichlet with unit concentration).
pub fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Stationary policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::InvalidPolicy(format!(
                "{} probabilities for {num_states}x{num_actions}",
                probs.len()
            )));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            check_distribution(row).map_err(|m| Error::InvalidPolicy(format!("state {s}: {m}")))?;
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// Deterministic policy from an action per state.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::InvalidPolicy(format!("action {a} out of range at state {s}")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Self::new(actions.len(), num_actions, probs)
    }

    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, rng: &mut R) -> Self {
        let probs = (0..num_states)
            .flat_map(|_| random_simplex(num_actions, rng))
            .collect();
        Self {
            num_states,
            num_actions,
            probs,
        }
    }

    /// Per-state mixture `(1-w)·self + w·other`.
    pub fn mix(&self, other: &Policy, w: f64) -> Result<Self> {
        if self.num_states != other.num_states || self.num_actions != other.num_actions {
            return Err(Error::InvalidPolicy("mixing policies of different shape".into()));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Self::new(self.num_states, self.num_actions, probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        if self.num_states != mdp.num_states || self.num_actions != mdp.num_actions {
            return Err(Error::InvalidPolicy(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.num_states, self.num_actions, mdp.num_states, mdp.num_actions
            )));
        }
        Ok(())
    }
}

/// Normalised state-action occupancy, row-major `[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub num_states: usize,
    pub num_actions: usize,
    pub d: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.d[s * self.num_actions + a]
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.d.chunks(self.num_actions).map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.d.iter().sum()
    }

    /// Largest absolute residual of the Bellman-flow equalities.
    pub fn flow_residual(&self, mdp: &TabularMdp) -> f64 {
        let n = mdp.num_states;
        let mut inflow: Vec<f64> = mdp.initial_dist.iter().map(|r| (1.0 - mdp.discount) * r).collect();
        for s in 0..n {
            for a in 0..mdp.num_actions {
                let mass = self.get(s, a);
                if mass == 0.0 {
                    continue;
                }
                for (sp, p) in mdp.next_dist(s, a).iter().enumerate() {
                    inflow[sp] += mdp.discount * p * mass;
                }
            }
        }
        self.state_marginal()
            .iter()
            .zip(&inflow)
            .map(|(d, f)| (d - f).abs())
            .fold(0.0, f64::max)
    }

    /// Weighted combination `Σ_k w_k d_k` of occupancies with equal shape.
    pub fn mixture(parts: &[(&OccupancyMeasure, f64)]) -> Result<Self> {
        let (first, _) = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty occupancy mixture".into()))?;
        let mut d = vec![0.0; first.d.len()];
        for (occ, w) in parts {
            if occ.d.len() != d.len() {
                return Err(Error::InvalidArgument("occupancy shapes differ".into()));
            }
            d.iter_mut().zip(&occ.d).for_each(|(x, y)| *x += w * y);
        }
        Ok(Self {
            num_states: first.num_states,
            num_actions: first.num_actions,
            d,
        })
    }
}

/// State transition matrix `M[s][s'] = Σ_a π(a|s) P(s'|s,a)`.
fn policy_chain(mdp: &TabularMdp, policy: &Policy) -> DMatrix<f64> {
    let n = mdp.num_states;
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.num_actions {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (sp, p) in mdp.next_dist(s, a).iter().enumerate() {
                m[(s, sp)] += pa * p;
            }
        }
    }
    m
}

/// Exact discounted occupancy by solving `(I - γ Mᵀ) d = (1-γ) ρ0` for the
/// state marginal and factoring through `π(a|s)`.
pub fn occupancy_exact(mdp: &TabularMdp, policy: &Policy) -> Result<OccupancyMeasure> {
    policy.check_shape(mdp)?;
    let n = mdp.num_states;
    let m = policy_chain(mdp, policy);
    let lhs = DMatrix::identity(n, n) - m.transpose() * mdp.discount;
    let rhs = DVector::from_iterator(n, mdp.initial_dist.iter().map(|r| (1.0 - mdp.discount) * r));
    let ds = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Bellman-flow system".into()))?;
    let mut d = Vec::with_capacity(n * mdp.num_actions);
    for s in 0..n {
        let mass = ds[s].max(0.0);
        d.extend(policy.row(s).iter().map(|pa| mass * pa));
    }
    Ok(OccupancyMeasure {
        num_states: n,
        num_actions: mdp.num_actions,
        d,
    })
}

/// Exact state values `V = (I - γ P_π)^{-1} r_π` for a per-(s,a) reward.
pub fn policy_values(mdp: &TabularMdp, policy: &Policy, reward: &[f64]) -> Result<Vec<f64>> {
    policy.check_shape(mdp)?;
    check_reward(mdp, reward)?;
    let n = mdp.num_states;
    let m = policy_chain(mdp, policy);
    let lhs = DMatrix::identity(n, n) - m * mdp.discount;
    let rhs = DVector::from_iterator(
        n,
        (0..n).map(|s| {
            policy
                .row(s)
                .iter()
                .enumerate()
                .map(|(a, p)| p * reward[s * mdp.num_actions + a])
                .sum::<f64>()
        }),
    );
    let v = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("policy evaluation system".into()))?;
    Ok(v.iter().copied().collect())
}

fn check_reward(mdp: &TabularMdp, reward: &[f64]) -> Result<()> {
    if reward.len() != mdp.num_states * mdp.num_actions {
        return Err(Error::InvalidArgument(format!(
            "reward has {} entries, expected {}",
            reward.len(),
            mdp.num_states * mdp.num_actions
        )));
    }
    Ok(())
}

/// Index of the first cumulative bucket exceeding `u`.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u beyond the total; fall back to the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// One rollout: `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// How an episode ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// Exactly `horizon` steps.
    Fixed { horizon: usize },
    /// After each step continue with probability `γ`, at most `cap` steps.
    /// Records of such episodes are draws from the discounted occupancy.
    Geometric { cap: usize },
}

/// Independent RNG for episode `index` under `seed`.
pub(crate) fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn rollout(
    mdp: &TabularMdp,
    policy: &Policy,
    termination: Termination,
    rng: &mut ChaCha8Rng,
) -> Episode {
    let cap = match termination {
        Termination::Fixed { horizon } => horizon,
        Termination::Geometric { cap } => cap,
    };
    let mut s = sample_index(&mdp.initial_dist, rng.random());
    let mut states = vec![s];
    let mut actions = Vec::new();
    for _ in 0..cap {
        let a = sample_index(policy.row(s), rng.random());
        s = sample_index(mdp.next_dist(s, a), rng.random());
        actions.push(a);
        states.push(s);
        if let Termination::Geometric { .. } = termination {
            if rng.random::<f64>() >= mdp.discount {
                break;
            }
        }
    }
    Episode { states, actions }
}

/// Smallest horizon with `γ^H < tail`.
pub fn default_horizon(discount: f64, tail: f64) -> usize {
    if discount <= 0.0 {
        return 1;
    }
    ((tail.ln() / discount.ln()).floor() as usize + 1).max(1)
}

/// Fixed-horizon rollouts, deterministic in `seed`.
pub fn sample_trajectories(
    mdp: &TabularMdp,
    policy: &Policy,
    num_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Episode>> {
    sample_trajectories_with(Parallelism::default(), mdp, policy, num_episodes, horizon, seed)
}

pub fn sample_trajectories_with(
    par: Parallelism,
    mdp: &TabularMdp,
    policy: &Policy,
    num_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Episode>> {
    policy.check_shape(mdp)?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(map_indexed(par, num_episodes, |i| {
        rollout(mdp, policy, Termination::Fixed { horizon }, &mut episode_rng(seed, i as u64))
    }))
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_err: (var / n).sqrt(),
        }
    }

    /// `|mean - target| <= k·SE`, with a tiny floor for zero-variance cases.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err + 1e-12
    }
}

/// How an expectation over a policy is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Exact,
    /// Fixed-horizon discounted rollouts.
    MonteCarlo {
        episodes: usize,
        horizon: usize,
        seed: u64,
    },
}

/// Successor features `ψ = Σ_s d^π(s) φ(s)`.
///
/// In Monte-Carlo mode each episode contributes `(1-γ) Σ_t γ^t φ(s_t)`; the
/// returned standard errors are per coordinate (zero in exact mode).
pub fn successor_features(
    mdp: &TabularMdp,
    policy: &Policy,
    fmap: &FeatureMap,
    eval: Evaluation,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if fmap.num_states() != mdp.num_states {
        return Err(Error::InvalidArgument("feature map does not match MDP".into()));
    }
    let dim = fmap.dim();
    match eval {
        Evaluation::Exact => {
            let ds = occupancy_exact(mdp, policy)?.state_marginal();
            let mut psi = vec![0.0; dim];
            for (s, w) in ds.iter().enumerate() {
                psi.iter_mut().zip(fmap.get(s)).for_each(|(p, f)| *p += w * f);
            }
            Ok((psi, vec![0.0; dim]))
        }
        Evaluation::MonteCarlo {
            episodes,
            horizon,
            seed,
        } => {
            let eps = sample_trajectories(mdp, policy, episodes, horizon, seed)?;
            let per_episode: Vec<Vec<f64>> = eps
                .iter()
                .map(|ep| {
                    let mut acc = vec![0.0; dim];
                    let mut g = 1.0 - mdp.discount;
                    for &s in &ep.states[..ep.len()] {
                        acc.iter_mut().zip(fmap.get(s)).for_each(|(x, f)| *x += g * f);
                        g *= mdp.discount;
                    }
                    acc
                })
                .collect();
            let (mut mean, mut se) = (vec![0.0; dim], vec![0.0; dim]);
            for k in 0..dim {
                let col: Vec<f64> = per_episode.iter().map(|v| v[k]).collect();
                let est = McEstimate::from_samples(&col);
                mean[k] = est.mean;
                se[k] = est.std_err;
            }
            Ok((mean, se))
        }
    }
}

/// Expected discounted return `(1/(1-γ)) Σ d^π(s,a) R(s,a)`.
pub fn expected_return(
    mdp: &TabularMdp,
    policy: &Policy,
    reward: &[f64],
    eval: Evaluation,
) -> Result<McEstimate> {
    check_reward(mdp, reward)?;
    match eval {
        Evaluation::Exact => {
            let occ = occupancy_exact(mdp, policy)?;
            let total: f64 = occ.d.iter().zip(reward).map(|(d, r)| d * r).sum();
            Ok(McEstimate {
                mean: total / (1.0 - mdp.discount),
                std_err: 0.0,
            })
        }
        Evaluation::MonteCarlo {
            episodes,
            horizon,
            seed,
        } => {
            let eps = sample_trajectories(mdp, policy, episodes, horizon, seed)?;
            let returns: Vec<f64> = eps
                .iter()
                .map(|ep| {
                    let mut g = 1.0;
                    let mut ret = 0.0;
                    for (t, &a) in ep.actions.iter().enumerate() {
                        ret += g * reward[ep.states[t] * mdp.num_actions + a];
                        g *= mdp.discount;
                    }
                    ret
                })
                .collect();
            Ok(McEstimate::from_samples(&returns))
        }
    }
}
