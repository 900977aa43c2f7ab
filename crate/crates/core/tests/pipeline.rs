//! End-to-end properties of the training loop on small problems.

use doi_core::datagen::{ExpertStateSet, TransitionDataset};
use doi_core::experiment::{Environment, Experiment};
use doi_core::metrics::ratio_l1_distance;
use doi_core::par::Parallelism;
use doi_core::pipeline::{
    run_doi, run_smodice, run_unconstrained, Checkpoint, Inputs, RunConfig, RunOptions, SmodiceOutput,
};

struct Setup {
    exp: Experiment,
    env: Environment,
    coverage: TransitionDataset,
    smodice: SmodiceOutput,
}

fn small() -> Setup {
    let exp: Experiment = serde_json::from_str(
        r#"{
          "environment": {"gridworld": {"width": 5, "height": 5, "slip": 0.1, "walls": [[2, 2]], "goal": [4, 4], "absorbing_goal": false}, "discount": 0.95},
          "expert": {"kind": "greedy_path"},
          "data": {"transitions": 8000, "expert_episodes": 60, "noise": 0.0},
          "run": {"num_skills": 3, "outer_steps": 12, "checkpoint_every": 4}
        }"#,
    )
    .unwrap();
    let env = exp.build().unwrap();
    let (coverage, expert): (TransitionDataset, ExpertStateSet) = exp.generate(&env, 0).unwrap();
    let inputs = Inputs {
        coverage: &coverage,
        fmap: &env.discriminator_features,
        mdp: Some(&env.mdp),
    };
    let smodice = run_smodice(&expert, inputs, &exp.run).unwrap();
    Setup {
        exp,
        env,
        coverage,
        smodice,
    }
}

impl Setup {
    fn inputs(&self) -> Inputs<'_> {
        Inputs {
            coverage: &self.coverage,
            fmap: &self.env.discriminator_features,
            mdp: Some(&self.env.mdp),
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn single_skill_with_pinned_sigma_recovers_the_expert_ratios() {
    let s = small();
    let mut config = s.exp.run.clone();
    config.num_skills = 1;
    config.outer_steps = 3;
    config.multiplier.fixed_sigma = Some(1.0);
    let bundle = run_doi(&s.smodice, s.inputs(), &config, RunOptions::default()).unwrap();
    let d = max_abs_diff(&bundle.skills[0].ratios.eta, &s.smodice.ratios.eta);
    assert!(d < 1e-4, "max |eta_z - eta_E| = {d}");
    assert!(bundle.skills[0].phi.abs() < 1e-6);
}

#[test]
fn unconstrained_without_diversity_is_the_imitation_solve() {
    let s = small();
    let mut config = s.exp.run.clone();
    config.num_skills = 1;
    config.alpha = 0.0;
    config.outer_steps = 1;
    let bundle = run_unconstrained(&s.smodice, s.inputs(), &config, RunOptions::default()).unwrap();
    let d = max_abs_diff(&bundle.skills[0].ratios.eta, &s.smodice.ratios.eta);
    assert!(d < 1e-9, "max |eta - eta_E| = {d}");
    assert_eq!(bundle.skills[0].policy, s.smodice.policy);
}

#[test]
fn diversity_weight_separates_skills() {
    let s = small();
    let mut config = s.exp.run.clone();
    config.outer_steps = 40;
    let l1 = |alpha: f64| {
        let mut c = config.clone();
        c.alpha = alpha;
        let b = run_unconstrained(&s.smodice, s.inputs(), &c, RunOptions::default()).unwrap();
        ratio_l1_distance(&b.ratio_tables()).unwrap().headline
    };
    let (flat, spread) = (l1(0.0), l1(16.0));
    assert!(flat < 1e-6, "alpha 0 gives identical skills, l1 {flat}");
    assert!(spread > flat + 0.05, "alpha 16 l1 {spread} vs alpha 0 {flat}");
}

#[test]
fn resume_from_checkpoint_matches_the_uninterrupted_run() {
    let s = small();
    let dir = tempfile::tempdir().unwrap();
    let options = RunOptions {
        checkpoint_dir: Some(dir.path()),
        resume: None,
    };
    let full = run_doi(&s.smodice, s.inputs(), &s.exp.run, options).unwrap();
    let cp = Checkpoint::load(&dir.path().join(Checkpoint::file_name(4))).unwrap();
    assert_eq!(cp.provenance.iteration, 4);
    let options = RunOptions {
        checkpoint_dir: None,
        resume: Some(cp.clone()),
    };
    let resumed = run_doi(&s.smodice, s.inputs(), &s.exp.run, options).unwrap();
    assert_eq!(resumed, full);

    // A checkpoint from another configuration is refused.
    let mut other = s.exp.run.clone();
    other.epsilon = 3.0;
    let options = RunOptions {
        checkpoint_dir: None,
        resume: Some(cp),
    };
    assert!(run_doi(&s.smodice, s.inputs(), &other, options).is_err());
}

#[test]
fn sequential_and_rayon_agree_bit_for_bit() {
    let s = small();
    let run = |par| {
        let config = RunConfig {
            parallelism: par,
            ..s.exp.run.clone()
        };
        run_doi(&s.smodice, s.inputs(), &config, RunOptions::default()).unwrap()
    };
    let (a, b) = (run(Parallelism::Sequential), run(Parallelism::Rayon));
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
}

#[test]
fn offline_td_mode_needs_no_mdp() {
    let s = small();
    let mut config = s.exp.run.clone();
    config.td_mode = doi_core::pipeline::TdMode::Offline;
    config.outer_steps = 3;
    let inputs = Inputs {
        mdp: None,
        ..s.inputs()
    };
    let sm = run_smodice(&s.exp.generate(&s.env, 0).unwrap().1, inputs, &config).unwrap();
    let bundle = run_doi(&sm, inputs, &config, RunOptions::default()).unwrap();
    assert_eq!(bundle.num_skills(), 3);
    for k in bundle.skills {
        assert!(k.ratios.check_invariants().is_ok());
    }
}
