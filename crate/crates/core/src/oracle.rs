//! Brute-force ground truth: exact divergences and mutual information, a
//! primal solver for the KL-regularised occupancy problem, and a grid check of
//! the KL Fenchel conjugate. Nothing here calls into the estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{occupancy_exact, policy_values, OccupancyMeasure, Policy, TabularMdp};

/// `KL(p‖q) = Σ p log(p/q)`; errors when `p` puts mass outside `supp(q)`.
pub fn exact_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Misaligned(format!("{} vs {} outcomes", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (i, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::Support { index: i, p: a });
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl)
}

/// Exact `I(S;Z) = Σ_z p(z) KL(d_z ‖ Σ_z' p(z') d_z')` over state occupancies.
pub fn exact_mi(skills: &[Vec<f64>], prior: &[f64]) -> Result<f64> {
    let mix = mixture(skills, prior)?;
    skills
        .iter()
        .zip(prior)
        .map(|(d, p)| Ok(p * exact_kl(d, &mix)?))
        .sum()
}

fn mixture(skills: &[Vec<f64>], prior: &[f64]) -> Result<Vec<f64>> {
    if skills.is_empty() || skills.len() != prior.len() {
        return Err(Error::InvalidArgument("need one prior weight per skill".into()));
    }
    let n = skills[0].len();
    if skills.iter().any(|d| d.len() != n) {
        return Err(Error::Misaligned("skill occupancies differ in length".into()));
    }
    let mut mix = vec![0.0; n];
    for (d, p) in skills.iter().zip(prior) {
        mix.iter_mut().zip(d).for_each(|(m, x)| *m += p * x);
    }
    Ok(mix)
}

/// True posterior `p(z|s)` (rows indexed by state); uniform where no skill visits.
pub fn bayes_posterior(skills: &[Vec<f64>], prior: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mix = mixture(skills, prior)?;
    Ok((0..mix.len())
        .map(|s| {
            if mix[s] > 0.0 {
                skills.iter().zip(prior).map(|(d, p)| p * d[s] / mix[s]).collect()
            } else {
                vec![1.0 / skills.len() as f64; skills.len()]
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiGap {
    pub mi: f64,
    pub bound: f64,
    pub gap: f64,
}

/// Exact MI and the variational bound `Σ_z p(z) E_{d_z}[log(q(z|s)/p(z))]` for
/// a discriminator given as `q[s][z]`.
pub fn exact_mi_bound_gap(skills: &[Vec<f64>], q: &[Vec<f64>], prior: &[f64]) -> Result<MiGap> {
    let mi = exact_mi(skills, prior)?;
    let mut bound = 0.0;
    for (z, (d, p)) in skills.iter().zip(prior).enumerate() {
        for (s, &ds) in d.iter().enumerate() {
            if ds > 0.0 {
                bound += p * ds * (q[s][z] / p).ln();
            }
        }
    }
    Ok(MiGap {
        mi,
        bound,
        gap: mi - bound,
    })
}

/// `log Σ_i p_i exp(x_i)` over entries with `p_i > 0`.
fn log_mean_exp(p: &[f64], x: &[f64]) -> f64 {
    let m = p
        .iter()
        .zip(x)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, x)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    m + p
        .iter()
        .zip(x)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, x)| p * (x - m).exp())
        .sum::<f64>()
        .ln()
}

/// Exact dual `(1-γ) E_ρ0[V] + log E_{d_O} exp(R + γPV - V)`.
pub fn exact_dual(mdp: &TabularMdp, reward: &[f64], d_o: &OccupancyMeasure, v: &[f64]) -> f64 {
    let (ns, na, g) = (mdp.num_states(), mdp.num_actions(), mdp.discount());
    let adv: Vec<f64> = (0..ns * na)
        .map(|k| {
            let (s, a) = (k / na, k % na);
            let tv: f64 = mdp.next_dist(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
            reward[k] + g * tv - v[s]
        })
        .collect();
    let init: f64 = mdp.initial_dist().iter().zip(v).map(|(p, x)| p * x).sum();
    (1.0 - g) * init + log_mean_exp(&d_o.d, &adv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimalOptions {
    pub max_iters: usize,
    /// Target certified duality gap.
    pub tol: f64,
}

impl Default for PrimalOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub d: OccupancyMeasure,
    pub policy: Policy,
    /// `E_d[R] - KL(d‖d_O)` at the returned occupancy.
    pub value: f64,
    /// Dual objective at the pseudo-reward value function; an upper bound on the optimum.
    pub upper_bound: f64,
    pub iterations: usize,
}

impl PrimalSolution {
    pub fn gap(&self) -> f64 {
        self.upper_bound - self.value
    }
}

fn primal_value(d: &OccupancyMeasure, reward: &[f64], d_o: &OccupancyMeasure) -> f64 {
    d.d.iter()
        .zip(reward)
        .zip(&d_o.d)
        .map(|((&x, r), o)| if x > 0.0 { x * (r - (x / o).ln()) } else { 0.0 })
        .sum()
}

fn softmax_policy(logits: &[f64], ns: usize, na: usize) -> Result<Policy> {
    let mut probs = vec![0.0; ns * na];
    for s in 0..ns {
        let row = &logits[s * na..(s + 1) * na];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|l| (l - m).exp()).sum();
        for a in 0..na {
            probs[s * na + a] = (row[a] - m).exp() / z;
        }
    }
    Policy::new(ns, na, probs)
}

/// Maximise `E_d[R] - KL(d‖d_O)` over occupancies of `mdp` (from its own
/// initial distribution) by policy mirror descent on the linearised reward
/// `R - log(d/d_O)`, with an adaptive step. The returned upper bound is the
/// exact dual at the policy's pseudo-reward values, so `gap()` certifies
/// optimality independently of how the iterate was found.
pub fn primal_solve(
    mdp: &TabularMdp,
    reward: &[f64],
    d_o: &OccupancyMeasure,
    opts: PrimalOptions,
) -> Result<PrimalSolution> {
    let (ns, na, g) = (mdp.num_states(), mdp.num_actions(), mdp.discount());
    if reward.len() != ns * na || d_o.d.len() != ns * na {
        return Err(Error::Misaligned("reward or d_O shape differs from the MDP".into()));
    }
    if let Some(k) = d_o.d.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "strict feasibility needs d_O > 0 everywhere; d_O({}, {}) = {}",
            k / na,
            k % na,
            d_o.d[k]
        )));
    }
    let mut logits = vec![0.0; ns * na];
    let mut step = 1.0;
    let mut iterations = 0;
    let eval = |logits: &[f64]| -> Result<(Policy, OccupancyMeasure, f64)> {
        let pi = softmax_policy(logits, ns, na)?;
        let d = occupancy_exact(mdp, &pi)?;
        let val = primal_value(&d, reward, d_o);
        Ok((pi, d, val))
    };
    let (mut pi, mut d, mut value) = eval(&logits)?;
    loop {
        let pseudo: Vec<f64> = (0..ns * na)
            .map(|k| {
                if d.d[k] > 1e-300 {
                    reward[k] - (d.d[k] / d_o.d[k]).ln()
                } else {
                    reward[k]
                }
            })
            .collect();
        let v = policy_values(mdp, &pi, &pseudo)?;
        let upper_bound = exact_dual(mdp, reward, d_o, &v);
        if upper_bound - value < opts.tol || iterations >= opts.max_iters {
            return Ok(PrimalSolution {
                d,
                policy: pi,
                value,
                upper_bound,
                iterations,
            });
        }
        iterations += 1;
        let adv: Vec<f64> = (0..ns * na)
            .map(|k| {
                let (s, a) = (k / na, k % na);
                let tv: f64 = mdp.next_dist(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                pseudo[k] + g * tv - v[s]
            })
            .collect();
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = logits.iter().zip(&adv).map(|(l, a)| l + step * a).collect();
            let (tp, td, tv) = eval(&trial)?;
            if tv >= value {
                (logits, pi, d, value) = (trial, tp, td, tv);
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no further ascent is representable
            return Ok(PrimalSolution {
                d,
                policy: pi,
                value,
                upper_bound,
                iterations,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FenchelCheck {
    /// `log E_q exp(y)`.
    pub closed_form: f64,
    /// `max ⟨p,y⟩ - KL(p‖q)` over the simplex grid.
    pub brute_force: f64,
    /// Total variation between the grid maximiser and `q·softmax_q(y)`.
    pub maximizer_tv: f64,
}

impl FenchelCheck {
    pub fn abs_diff(&self) -> f64 {
        (self.closed_form - self.brute_force).abs()
    }
}

/// Visit every point of the simplex grid with the given resolution.
fn for_each_grid_point(n: usize, resolution: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(k: &mut Vec<usize>, left: usize, n: usize, f: &mut impl FnMut(&[usize])) {
        if k.len() + 1 == n {
            k.push(left);
            f(k);
            k.pop();
            return;
        }
        for i in 0..=left {
            k.push(i);
            rec(k, left - i, n, f);
            k.pop();
        }
    }
    rec(&mut Vec::with_capacity(n), resolution, n, f);
}

/// Compare the closed-form KL conjugate with a brute-force grid supremum.
pub fn fenchel_kl_check(q: &[f64], y: &[f64], resolution: usize) -> Result<FenchelCheck> {
    if q.len() != y.len() || q.is_empty() || q.len() > 4 {
        return Err(Error::InvalidArgument("need 1 to 4 outcomes with matching y".into()));
    }
    if resolution == 0 || q.iter().any(|&x| !(x > 0.0)) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("q must be a positive distribution".into()));
    }
    let closed_form = log_mean_exp(q, y);
    let maximizer: Vec<f64> = q.iter().zip(y).map(|(p, x)| p * (x - closed_form).exp()).collect();
    let h = 1.0 / resolution as f64;
    let mut best = f64::NEG_INFINITY;
    let mut arg = vec![0.0; q.len()];
    for_each_grid_point(q.len(), resolution, &mut |k| {
        let val: f64 = k
            .iter()
            .zip(q.iter().zip(y))
            .filter(|(ki, _)| **ki > 0)
            .map(|(&ki, (qi, yi))| {
                let p = ki as f64 * h;
                p * (yi - (p / qi).ln())
            })
            .sum();
        if val > best {
            best = val;
            arg.iter_mut().zip(k).for_each(|(a, &ki)| *a = ki as f64 * h);
        }
    });
    let maximizer_tv = 0.5 * arg.iter().zip(&maximizer).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(FenchelCheck {
        closed_form,
        brute_force: best,
        maximizer_tv,
    })
}
