//! Verification checks of the estimators and solvers against the brute-force
//! oracles. Each check is seeded and self-contained; [`suite`] runs them all.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::kl_estimate;
use crate::datagen::{build_coverage_dataset, DatasetSizes, TransitionDataset};
use crate::dice::{compute_ratios, solve_dual_value, DualConfig, DualProblem, LogisticProblem, RatioTable, RatioTag};
use crate::diversity::{
    mi_lower_bound, skill_state_masses, train_discriminator, DiscriminatorConfig, DiscriminatorProblem,
    SkillDiscriminator,
};
use crate::error::Result;
use crate::mdp::{random_simplex, FeatureMap, OccupancyMeasure, Policy, TabularMdp};
use crate::optim::{finite_difference_gradient, relative_error};
use crate::oracle::{bayes_posterior, exact_mi_bound_gap, fenchel_kl_check, primal_solve, PrimalOptions};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        name: name.into(),
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn single_policy_data(mdp: &TabularMdp, pi: &Policy, transitions: usize, seed: u64) -> Result<TransitionDataset> {
    let sizes = DatasetSizes {
        transitions,
        horizon: 200,
    };
    build_coverage_dataset(mdp, &[(pi.clone(), 1.0)], pi, 0.0, sizes, seed)
}

/// Dual optimum against the primal oracle on random 5-state, 2-action MDPs.
/// The primal sees the same empirical `d_O` and initial distribution as the
/// dual, so the two optima coincide up to solver tolerance.
pub fn duality(instances: usize, seed: u64) -> Check {
    timed("duality", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut worst_gap, mut worst_tv) = (0.0f64, 0.0f64);
        let dual_config = DualConfig {
            tol: 1e-11,
            ..DualConfig::default()
        };
        for k in 0..instances as u64 {
            let mdp = TabularMdp::random(5, 2, 0.9, &mut rng);
            let behaviour = Policy::random(5, 2, &mut rng);
            let ds = single_policy_data(&mdp, &behaviour, 20_000, seed ^ k)?;
            let reward: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: Vec<f64> = ds.samples.iter().map(|s| reward[s.state * 2 + s.action]).collect();
            let value = solve_dual_value(&ds, &r, Some(&mdp), &dual_config, None)?;
            let ratios = compute_ratios(&value, &r, &ds, Some(&mdp), 1e6, RatioTag::Expert)?;
            let d_o = OccupancyMeasure {
                num_states: 5,
                num_actions: 2,
                d: ds.state_action_frequencies(),
            };
            let primal_mdp = mdp.with_initial_dist(ds.empirical_initial_dist())?;
            let primal = primal_solve(&primal_mdp, &reward, &d_o, PrimalOptions::default())?;
            let induced = ratios.induced_occupancy(&ds)?;
            worst_gap = worst_gap.max((value.objective - primal.value).abs());
            worst_tv = worst_tv.max(tv(&induced.d, &primal.d.d));
        }
        Ok((
            worst_gap < 1e-3 && worst_tv < 2e-2,
            format!("{instances} MDPs: max |dual - primal| = {worst_gap:.2e}, max TV = {worst_tv:.2e}"),
        ))
    })
}

/// Closed-form KL conjugate against a simplex-grid supremum on 3 outcomes.
pub fn fenchel(instances: usize, seed: u64) -> Check {
    timed("fenchel", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let q = random_simplex(3, &mut rng);
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            worst = worst.max(fenchel_kl_check(&q, &y, 400)?.abs_diff());
        }
        Ok((worst < 1e-3, format!("{instances} instances: max |closed - grid| = {worst:.2e}")))
    })
}

/// A random ratio table, clipped half of the time.
pub fn random_table<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<RatioTable> {
    let scale = rng.random_range(0.1..5.0);
    let td = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    let clip = if rng.random_bool(0.5) {
        rng.random_range(1.5..20.0)
    } else {
        1e6
    };
    RatioTable::from_td(td, clip, RatioTag::Skill(0))
}

/// `Σw = 1` and `mean η = 1` within 1e-9.
pub fn table_invariants_hold(t: &RatioTable) -> bool {
    let mean_eta = t.eta.iter().sum::<f64>() / t.len() as f64;
    (t.w.iter().sum::<f64>() - 1.0).abs() < 1e-9 && (mean_eta - 1.0).abs() < 1e-9
}

/// KL estimator identities on random pairs, plus the table invariants on
/// those pairs and on any `extra` tables.
pub fn estimators(pairs: usize, seed: u64, extra: &[RatioTable]) -> Check {
    timed("estimators", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut self_max, mut min_kl, mut bad) = (0.0f64, f64::INFINITY, 0usize);
        for _ in 0..pairs {
            let n = rng.random_range(2..60);
            let a = random_table(&mut rng, n)?;
            let b = random_table(&mut rng, n)?;
            self_max = self_max.max(kl_estimate(&a, &a)?.abs());
            min_kl = min_kl.min(kl_estimate(&a, &b)?);
            bad += [&a, &b].iter().filter(|t| !table_invariants_hold(t)).count();
        }
        bad += extra.iter().filter(|t| !table_invariants_hold(t)).count();
        Ok((
            self_max == 0.0 && min_kl >= 0.0 && bad == 0,
            format!(
                "{pairs} pairs: max |KL(w,w)| = {self_max:e}, min KL = {min_kl:.2e}; tables off-invariant: {bad} of {}",
                2 * pairs + extra.len()
            ),
        ))
    })
}

/// Analytic gradients of the dual, the logistic classifier and the skill
/// discriminator against central differences.
pub fn gradients(instances: usize, seed: u64) -> Check {
    timed("gradients", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut dual, mut logistic, mut disc) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..instances as u64 {
            let (ns, na) = (rng.random_range(2..7), rng.random_range(1..4));
            let mdp = TabularMdp::random(ns, na, 0.9, &mut rng);
            let pi = Policy::random(ns, na, &mut rng);
            let ds = single_policy_data(&mdp, &pi, 400, seed ^ k)?;
            let r: Vec<f64> = (0..ds.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let oracle = (k % 2 == 0).then_some(&mdp);
            let problem = DualProblem::new(&ds, &r, oracle)?;
            let v: Vec<f64> = (0..ns).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = problem.objective_and_gradient(&v);
            let fd = finite_difference_gradient(|x| problem.objective(x), &v, 1e-5);
            dual = dual.max(relative_error(&g, &fd));

            let dim = rng.random_range(1..4);
            let feats = (0..ns)
                .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let fmap = FeatureMap::new("random", feats)?;
            let n_e: Vec<f64> = (0..ns).map(|_| rng.random_range(0.0..20.0)).collect();
            let n_o: Vec<f64> = (0..ns).map(|_| rng.random_range(0.0..20.0)).collect();
            let lp = LogisticProblem::new(&fmap, n_e, n_o, 1e-3)?;
            let theta: Vec<f64> = (0..lp.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = lp.loss_and_grad(&theta);
            logistic = logistic.max(relative_error(&g, &finite_difference_gradient(|x| lp.loss(x), &theta, 1e-5)));

            let nz = rng.random_range(2..5);
            let fmap = if k % 2 == 0 { FeatureMap::one_hot(ns) } else { fmap };
            let template = SkillDiscriminator::random(nz, &fmap, 1.0, k)?;
            let masses = (0..ns).map(|_| random_simplex(nz, &mut rng)).collect();
            let dp = DiscriminatorProblem::new(&template, &fmap, masses, 1e-2)?;
            let w = template.weights().to_vec();
            let (_, g) = dp.loss_and_grad(&w);
            disc = disc.max(relative_error(&g, &finite_difference_gradient(|x| dp.loss(x), &w, 1e-5)));
        }
        Ok((
            dual.max(logistic).max(disc) < 1e-5,
            format!(
                "{instances} instances each: max relative error dual {dual:.1e}, logistic {logistic:.1e}, discriminator {disc:.1e}"
            ),
        ))
    })
}

/// Exact MI minus the variational bound for trained discriminators, and the
/// bound's value on disjoint skills with the Bayes posterior.
pub fn variational_bound(instances: usize, seed: u64) -> Check {
    timed("variational bound", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        let mut worst_mismatch = 0.0f64;
        for k in 0..instances as u64 {
            let ns = rng.random_range(2..9);
            let nz = rng.random_range(2..5);
            let mdp = TabularMdp::random(ns, 2, 0.8, &mut rng);
            let pi = Policy::random(ns, 2, &mut rng);
            let ds = single_policy_data(&mdp, &pi, 300, seed ^ k)?;
            let tables = (0..nz)
                .map(|_| random_table(&mut rng, ds.len()))
                .collect::<Result<Vec<_>>>()?;
            let fmap = if k % 2 == 0 {
                FeatureMap::one_hot(ns)
            } else {
                let feats = (0..ns)
                    .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                    .collect();
                FeatureMap::new("random", feats)?
            };
            let init = SkillDiscriminator::random(nz, &fmap, 0.5, k)?;
            let config = DiscriminatorConfig {
                steps: 1 + (k as usize % 5),
                ..DiscriminatorConfig::default()
            };
            let (disc, _) = train_discriminator(&init, &tables, &ds, &fmap, &config)?;
            // masses m[s][z] = d_z(s) / |Z|
            let masses = skill_state_masses(&tables, &ds)?;
            let skills: Vec<Vec<f64>> = (0..nz)
                .map(|z| masses.iter().map(|m| m[z] * nz as f64).collect())
                .collect();
            let prior = vec![1.0 / nz as f64; nz];
            let gap = exact_mi_bound_gap(&skills, &disc.table(&fmap), &prior)?;
            let offline = mi_lower_bound(&tables, &disc, &ds, &fmap)?;
            worst_mismatch = worst_mismatch.max((offline - gap.bound).abs());
            worst = worst.min(gap.gap);
        }
        let nz = 4;
        let skills: Vec<Vec<f64>> = (0..nz)
            .map(|z| {
                let mut d = vec![0.0; 2 * nz];
                d[2 * z] = 0.3;
                d[2 * z + 1] = 0.7;
                d
            })
            .collect();
        let prior = vec![0.25; nz];
        let q = bayes_posterior(&skills, &prior)?;
        let disjoint = exact_mi_bound_gap(&skills, &q, &prior)?;
        let target = (nz as f64).ln();
        let exact = disjoint.bound == target && (disjoint.mi - target).abs() < 1e-12;
        Ok((
            worst >= -1e-9 && exact && worst_mismatch < 1e-9,
            format!(
                "{instances} trained instances: min gap = {worst:.2e}, offline-vs-exact bound {worst_mismatch:.1e}; disjoint bound = {} (log|Z| = {target})",
                disjoint.bound
            ),
        ))
    })
}

/// Every oracle check at full size.
pub fn suite(seed: u64) -> Vec<Check> {
    vec![
        duality(20, seed.wrapping_add(1)),
        fenchel(50, seed.wrapping_add(2)),
        estimators(10_000, seed.wrapping_add(3), &[]),
        gradients(20, seed.wrapping_add(4)),
        variational_bound(100, seed.wrapping_add(5)),
    ]
}
