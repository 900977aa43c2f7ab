use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constraint::{
    assemble_reward, assemble_reward_unconstrained, dual_reward, kl_estimate, update_multipliers, ConstraintEstimate,
    LagrangeState,
};
use crate::datagen::{CoverageReport, ExpertStateSet, TransitionDataset};
use crate::dice::{
    compute_ratios, expert_reward, fit_state_classifier, solve_dual_value, weighted_bc, RatioTable, RatioTag,
    StateClassifier, ValueFunction,
};
use crate::diversity::{mi_lower_bound, DiscriminatorEnsemble};
use crate::error::{Error, Result};
use crate::mdp::{FeatureMap, Policy, TabularMdp};
use crate::metrics::{ratio_l1_distance, MetricRow};
use crate::par::map_indexed;

use super::bundle::{Checkpoint, Provenance, SkillBundle, SkillResult, Variant};
use super::config::{RunConfig, TdMode};

/// Shared read-only inputs of a run.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a> {
    pub coverage: &'a TransitionDataset,
    pub fmap: &'a FeatureMap,
    /// Required in oracle TD mode.
    pub mdp: Option<&'a TabularMdp>,
}

impl<'a> Inputs<'a> {
    fn td_mdp(&self, config: &RunConfig) -> Result<Option<&'a TabularMdp>> {
        match config.td_mode {
            TdMode::Oracle => self
                .mdp
                .map(Some)
                .ok_or_else(|| Error::InvalidArgument("oracle TD mode needs the MDP".into())),
            TdMode::Offline => Ok(None),
        }
    }

    fn check(&self) -> Result<()> {
        self.coverage.validate()?;
        if self.coverage.is_empty() {
            return Err(Error::Dataset("coverage dataset is empty".into()));
        }
        if self.fmap.num_states() != self.coverage.num_states {
            return Err(Error::InvalidArgument("feature map does not match the dataset".into()));
        }
        Ok(())
    }
}

/// Checkpointing and resumption.
#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    pub checkpoint_dir: Option<&'a Path>,
    pub resume: Option<Checkpoint>,
}

/// Output of the imitation precompute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmodiceOutput {
    pub classifier: StateClassifier,
    /// Per-state `log(c/(1-c))`, clipped.
    pub reward: Vec<f64>,
    pub value: ValueFunction,
    pub ratios: RatioTable,
    pub policy: Policy,
    /// Expert states missing from the coverage data (advisory).
    pub coverage: CoverageReport,
}

fn per_sample(state_values: &[f64], ds: &TransitionDataset) -> Vec<f64> {
    ds.samples.iter().map(|r| state_values[r.state]).collect()
}

/// Classifier, imitation reward, dual solve, expert ratios and the cloned expert policy.
pub fn run_smodice(expert: &ExpertStateSet, inputs: Inputs<'_>, config: &RunConfig) -> Result<SmodiceOutput> {
    config.validate()?;
    inputs.check()?;
    let ds = inputs.coverage;
    let mdp = inputs.td_mdp(config)?;
    let classifier = fit_state_classifier(expert, ds, inputs.fmap, &config.classifier)?;
    let reward = expert_reward(&classifier, config.clip);
    let r = per_sample(&reward, ds);
    let value = solve_dual_value(ds, &r, mdp, &config.dual, None)?;
    let ratios = compute_ratios(&value, &r, ds, mdp, config.clip, RatioTag::Expert)?;
    ratios.check_invariants()?;
    let policy = weighted_bc(ds, &ratios)?;
    Ok(SmodiceOutput {
        coverage: expert.coverage_report(ds),
        classifier,
        reward,
        value,
        ratios,
        policy,
    })
}

struct PhaseOne {
    value: ValueFunction,
    ratios: RatioTable,
    policy: Policy,
}

fn row(iteration: usize, who: String, metric: &str, value: f64, config: &RunConfig, level: f64) -> MetricRow {
    MetricRow {
        iteration,
        skill_or_pair: who,
        metric: metric.into(),
        value,
        seed: config.seed,
        epsilon: level,
    }
}

/// The constrained alternating loop.
pub fn run_doi(
    smodice: &SmodiceOutput,
    inputs: Inputs<'_>,
    config: &RunConfig,
    options: RunOptions<'_>,
) -> Result<SkillBundle> {
    run_loop(Variant::Doi, smodice, inputs, config, options)
}

/// The unconstrained variant with reward `log(d_E/d_O) + α div`.
pub fn run_unconstrained(
    smodice: &SmodiceOutput,
    inputs: Inputs<'_>,
    config: &RunConfig,
    options: RunOptions<'_>,
) -> Result<SkillBundle> {
    run_loop(Variant::Unconstrained, smodice, inputs, config, options)
}

fn run_loop(
    variant: Variant,
    smodice: &SmodiceOutput,
    inputs: Inputs<'_>,
    config: &RunConfig,
    options: RunOptions<'_>,
) -> Result<SkillBundle> {
    config.validate()?;
    inputs.check()?;
    let ds = inputs.coverage;
    let fmap = inputs.fmap;
    let mdp = inputs.td_mdp(config)?;
    let nz = config.num_skills;
    smodice.ratios.check_aligned(ds)?;

    let provenance = |iteration| Provenance {
        variant,
        config_hash: config.hash(),
        dataset_hash: ds.content_hash(),
        seed: config.seed,
        iteration,
    };
    let level = match variant {
        Variant::Doi => config.epsilon,
        Variant::Unconstrained => config.alpha,
    };

    let mut state = match options.resume {
        Some(cp) => {
            let expect = provenance(cp.provenance.iteration);
            if cp.provenance != expect {
                return Err(Error::InvalidArgument(
                    "checkpoint was written by a different config, dataset or variant".into(),
                ));
            }
            if cp.values.len() != nz || cp.phi_history.len() != nz {
                return Err(Error::InvalidArgument("checkpoint skill count differs".into()));
            }
            cp
        }
        None => {
            let lagrange = match variant {
                Variant::Doi => {
                    let st = LagrangeState::with_epsilons(
                        config.skill_epsilons(),
                        config.multiplier.step_size,
                        config.multiplier.init_mu,
                    )?;
                    Some(match config.multiplier.fixed_sigma {
                        Some(s) => st.pinned(s)?,
                        None => st,
                    })
                }
                Variant::Unconstrained => None,
            };
            Checkpoint {
                provenance: provenance(0),
                values: vec![
                    ValueFunction {
                        v: vec![0.0; ds.num_states],
                        objective: f64::NAN,
                        iterations: 0,
                        grad_norm: f64::NAN,
                        converged: false,
                    };
                    nz
                ],
                discriminator: DiscriminatorEnsemble::new(nz, fmap, &config.discriminator, config.seed)?,
                lagrange,
                phi_history: vec![Vec::new(); nz],
                mu_history: vec![Vec::new(); nz],
                sigma_history: vec![Vec::new(); nz],
                metrics: Vec::new(),
            }
        }
    };

    let start = state.provenance.iteration;
    if start >= config.outer_steps {
        return Err(Error::InvalidArgument(format!(
            "checkpoint at iteration {start} already covers outer_steps = {}",
            config.outer_steps
        )));
    }
    let mut last: Option<Vec<PhaseOne>> = None;
    let mut last_phi = Vec::new();
    for it in start + 1..=config.outer_steps {
        let wrap = |skill: usize| move |e: Error| Error::Pipeline {
            iteration: it,
            skill,
            source: Box::new(e),
        };
        // Phase 1: one independent dual solve, ratio table and BC fit per skill.
        let bonus: Option<Vec<f64>> = (state.discriminator.members.len() > 1)
            .then(|| {
                state
                    .discriminator
                    .bonus_table(fmap)
                    .into_iter()
                    .map(|b| b * state.discriminator.bonus_weight)
                    .collect()
            });
        let disc = state.discriminator.primary();
        let values = &state.values;
        let lagrange = state.lagrange.as_ref();
        let phase1: Vec<Result<PhaseOne>> = map_indexed(config.parallelism, nz, |z| {
            let reward = match (variant, lagrange) {
                (Variant::Doi, Some(lg)) => dual_reward(
                    assemble_reward(z, disc, fmap, &smodice.ratios, lg, bonus.as_deref(), ds)?,
                    lg,
                    z,
                    config.multiplier.scaling,
                ),
                _ => {
                    let mut r = assemble_reward_unconstrained(z, disc, fmap, &smodice.reward, config.alpha, ds)?;
                    if let Some(b) = &bonus {
                        r.iter_mut()
                            .zip(&ds.samples)
                            .for_each(|(x, s)| *x += config.alpha * b[s.state]);
                    }
                    r
                }
            };
            let value = solve_dual_value(ds, &reward, mdp, &config.dual, Some(&values[z].v))?;
            let ratios = compute_ratios(&value, &reward, ds, mdp, config.clip, RatioTag::Skill(z))?;
            ratios.check_invariants()?;
            let policy = weighted_bc(ds, &ratios)?;
            Ok(PhaseOne { value, ratios, policy })
        });
        let phase1 = phase1
            .into_iter()
            .enumerate()
            .map(|(z, r)| r.map_err(wrap(z)))
            .collect::<Result<Vec<_>>>()?;
        let tables: Vec<RatioTable> = phase1.iter().map(|p| p.ratios.clone()).collect();

        // Phase 2: discriminator ensemble.
        let disc_loss = state
            .discriminator
            .train(config.parallelism, &tables, ds, fmap, &config.discriminator)
            .map_err(wrap(usize::MAX))?;

        // Phase 3: constraint estimates and multipliers.
        let phi = tables
            .iter()
            .map(|t| kl_estimate(t, &smodice.ratios))
            .collect::<Result<Vec<f64>>>()
            .map_err(wrap(usize::MAX))?;
        let mut m = Vec::new();
        if let Some(lg) = &state.lagrange {
            let est = ConstraintEstimate::new(phi.clone(), lg);
            let next = update_multipliers(lg, &est).map_err(wrap(usize::MAX))?;
            for z in 0..nz {
                state.mu_history[z].push(next.mu[z]);
                state.sigma_history[z].push(next.sigma(z));
                m.push(row(it, format!("z{z}"), "violation", est.violation[z], config, level));
                m.push(row(it, format!("z{z}"), "mu", next.mu[z], config, level));
                m.push(row(it, format!("z{z}"), "sigma", next.sigma(z), config, level));
            }
            state.lagrange = Some(next);
        }
        for z in 0..nz {
            state.phi_history[z].push(phi[z]);
            m.push(row(it, format!("z{z}"), "phi", phi[z], config, level));
            m.push(row(it, format!("z{z}"), "dual_objective", phase1[z].value.objective, config, level));
        }
        m.push(row(it, "all".into(), "disc_loss", disc_loss, config, level));
        let mi = mi_lower_bound(&tables, state.discriminator.primary(), ds, fmap)?;
        m.push(row(it, "all".into(), "mi_bound", mi, config, level));
        if nz > 1 {
            m.push(row(it, "all".into(), "ratio_l1", ratio_l1_distance(&tables)?.headline, config, level));
        }
        state.metrics.extend(m);
        state.values = phase1.iter().map(|p| p.value.clone()).collect();
        state.provenance.iteration = it;
        last_phi = phi;
        last = Some(phase1);

        if let Some(dir) = options.checkpoint_dir {
            if config.checkpoint_every > 0 && it % config.checkpoint_every == 0 {
                state.save(&dir.join(Checkpoint::file_name(it)))?;
            }
        }
    }

    let phase1 = last.expect("at least one iteration ran");
    if nz > 1 {
        let d = ratio_l1_distance(&phase1.iter().map(|p| p.ratios.clone()).collect::<Vec<_>>())?;
        for (i, j, v) in d.pairs() {
            state
                .metrics
                .push(row(state.provenance.iteration, format!("z{i}-z{j}"), "ratio_l1", v, config, level));
        }
    }
    let skills = phase1
        .into_iter()
        .enumerate()
        .map(|(z, p)| SkillResult {
            policy: p.policy,
            value: p.value,
            ratios: p.ratios,
            phi: last_phi[z],
            phi_history: state.phi_history[z].clone(),
            mu_history: state.mu_history[z].clone(),
            sigma_history: state.sigma_history[z].clone(),
        })
        .collect();
    Ok(SkillBundle {
        provenance: state.provenance,
        skills,
        discriminator: state.discriminator,
        classifier: smodice.classifier.clone(),
        expert_ratios: smodice.ratios.clone(),
        expert_policy: smodice.policy.clone(),
        lagrange: state.lagrange,
        metrics: state.metrics,
    })
}
