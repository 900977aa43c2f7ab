//! Command-line front end: data generation, training, evaluation, sweeps and
//! the oracle checks. [`run`] returns the process exit code: 0 on success, 1
//! on a usage error, 2 when a command fails.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use doi_core::datagen::{ExpertStateSet, TransitionDataset};
use doi_core::experiment::{Environment, Experiment};
use doi_core::mdp::{successor_features, Evaluation};
use doi_core::metrics::{ratio_l1_distance, return_fraction, sf_l2_distance, write_metrics_csv};
use doi_core::par::Parallelism;
use doi_core::pipeline::{
    run_doi, run_smodice, run_unconstrained, Checkpoint, Inputs, RunConfig, RunOptions, SkillBundle, SmodiceOutput,
    TdMode,
};
use doi_core::verify;

#[derive(Debug, Parser)]
#[command(name = "doi", version, about = "Diverse offline imitation on tabular MDPs")]
struct Cli {
    /// Experiment JSON; the bundled gridworld benchmark when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// TD scores from the exact kernel or from sampled next states.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Read coverage.jsonl and expert.jsonl from here instead of regenerating.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Overrides the number of outer iterations.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Oracle,
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Over {
    Epsilon,
    Alpha,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the coverage dataset, expert states and resolved experiment.
    GenData,
    /// Recover the expert: classifier, imitation reward, ratios and policy.
    Smodice,
    /// Train skills under the imitation constraint.
    Doi {
        #[arg(long)]
        epsilon: Option<f64>,
        /// Checkpoint file to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train skills with a fixed diversity weight and no constraint.
    Uncon {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Diversity and return metrics of a saved bundle.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Check estimators and solvers against the brute-force oracles.
    Oracle {
        /// Smaller instance counts.
        #[arg(long)]
        quick: bool,
    },
    /// Train once per grid value and tabulate the metrics.
    Sweep {
        #[arg(long, value_enum, default_value = "epsilon")]
        over: Over,
        /// Seeds per grid value, starting at the run seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
}

/// Parse `argv` (program name first), execute, and return the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

struct Session {
    exp: Experiment,
    env: Environment,
    coverage: TransitionDataset,
    expert: ExpertStateSet,
}

impl Session {
    fn load(cli: &Cli) -> Result<Self> {
        let mut exp = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Experiment::benchmark(),
        };
        if let Some(seed) = cli.seed {
            exp.run.seed = seed;
        }
        if let Some(mode) = cli.mode {
            exp.run.td_mode = match mode {
                Mode::Oracle => TdMode::Oracle,
                Mode::Offline => TdMode::Offline,
            };
        }
        if let Some(steps) = cli.steps {
            exp.run.outer_steps = steps;
        }
        exp.run.parallelism = if cli.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Rayon
        };
        exp.run.validate()?;
        let env = exp.build()?;
        let (coverage, expert) = match &cli.data {
            Some(dir) => (
                TransitionDataset::load(&dir.join("coverage.jsonl"))?,
                ExpertStateSet::load(&dir.join("expert.jsonl"))?,
            ),
            None => exp.generate(&env, exp.run.seed)?,
        };
        if coverage.num_states != env.mdp.num_states() || coverage.num_actions != env.mdp.num_actions() {
            bail!("dataset shape does not match the environment");
        }
        Ok(Self {
            exp,
            env,
            coverage,
            expert,
        })
    }

    fn inputs(&self) -> Inputs<'_> {
        Inputs {
            coverage: &self.coverage,
            fmap: &self.env.discriminator_features,
            mdp: Some(&self.env.mdp),
        }
    }

    fn smodice(&self) -> Result<SmodiceOutput> {
        let out = run_smodice(&self.expert, self.inputs(), &self.exp.run)?;
        if !out.coverage.is_clean() {
            eprintln!(
                "warning: {} expert states never appear in the coverage data",
                out.coverage.violations.len()
            );
        }
        Ok(out)
    }

    fn train(&self, smodice: &SmodiceOutput, config: &RunConfig, over: Over, dir: Option<&Path>, resume: Option<&Path>) -> Result<SkillBundle> {
        let resume = resume.map(Checkpoint::load).transpose()?;
        let options = RunOptions {
            checkpoint_dir: dir,
            resume,
        };
        Ok(match over {
            Over::Epsilon => run_doi(smodice, self.inputs(), config, options)?,
            Over::Alpha => run_unconstrained(smodice, self.inputs(), config, options)?,
        })
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Headline metrics of a bundle.
struct Summary {
    ratio_l1: f64,
    sf_l2: f64,
    return_fraction: Option<f64>,
    mean_phi: f64,
}

fn summarize(ctx: &Session, bundle: &SkillBundle) -> Result<Summary> {
    let policies = bundle.policies();
    let fmap = ctx.env.metric_features(&ctx.coverage)?;
    let (ratio_l1, sf_l2) = if bundle.num_skills() > 1 {
        (
            ratio_l1_distance(&bundle.ratio_tables())?.headline,
            sf_l2_distance(&policies, &ctx.env.mdp, &fmap, Evaluation::Exact)?.headline,
        )
    } else {
        (0.0, 0.0)
    };
    let return_fraction = match &ctx.env.task_reward {
        Some(r) => return_fraction(&policies, &bundle.expert_policy, &ctx.env.mdp, r, Evaluation::Exact)?.mean(),
        None => None,
    };
    let mean_phi = bundle.skills.iter().map(|s| s.phi).sum::<f64>() / bundle.num_skills() as f64;
    Ok(Summary {
        ratio_l1,
        sf_l2,
        return_fraction,
        mean_phi,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn eval(ctx: &Session, bundle: &SkillBundle, out: &Path) -> Result<()> {
    let policies = bundle.policies();
    let fmap = ctx.env.metric_features(&ctx.coverage)?;
    let mut w = csv::Writer::from_path(out.join("eval.csv"))?;
    w.write_record(["metric", "skill_or_pair", "value"])?;
    let fractions = match &ctx.env.task_reward {
        Some(r) => Some(return_fraction(&policies, &bundle.expert_policy, &ctx.env.mdp, r, Evaluation::Exact)?),
        None => None,
    };
    for (z, skill) in bundle.skills.iter().enumerate() {
        let name = format!("z{z}");
        w.write_record(["phi", &name, &skill.phi.to_string()])?;
        if let Some(f) = &fractions {
            w.write_record(["return_fraction", &name, &fmt_opt(f.fractions[z])])?;
        }
    }
    if bundle.num_skills() > 1 {
        let l1 = ratio_l1_distance(&bundle.ratio_tables())?;
        let sf = sf_l2_distance(&policies, &ctx.env.mdp, &fmap, Evaluation::Exact)?;
        for (i, j, d) in l1.pairs() {
            w.write_record(["ratio_l1", &format!("z{i}-z{j}"), &d.to_string()])?;
        }
        for (i, j, d) in sf.pairs() {
            w.write_record(["sf_l2", &format!("z{i}-z{j}"), &d.to_string()])?;
        }
        w.write_record(["ratio_l1", "all", &l1.headline.to_string()])?;
        w.write_record(["sf_l2", "all", &sf.headline.to_string()])?;
    }
    if let Some(f) = &fractions {
        w.write_record(["return_fraction", "all", &fmt_opt(f.mean())])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("sf.csv"))?;
    let mut header = vec!["policy".to_string()];
    header.extend((0..fmap.dim()).map(|k| format!("psi_{k}")));
    w.write_record(&header)?;
    let named = policies
        .iter()
        .enumerate()
        .map(|(z, p)| (format!("z{z}"), p))
        .chain([("expert".to_string(), &bundle.expert_policy)]);
    for (name, p) in named {
        let (psi, _) = successor_features(&ctx.env.mdp, p, &fmap, Evaluation::Exact)?;
        let mut row = vec![name];
        row.extend(psi.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    if let Command::Oracle { quick } = cli.command {
        let seed = cli.seed.unwrap_or(0);
        let checks = if quick {
            vec![
                verify::duality(3, seed + 1),
                verify::fenchel(10, seed + 2),
                verify::estimators(500, seed + 3, &[]),
                verify::gradients(5, seed + 4),
                verify::variational_bound(10, seed + 5),
            ]
        } else {
            verify::suite(seed)
        };
        for c in &checks {
            println!(
                "{:<18} {}  {} ({:.1}s)",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail,
                c.seconds
            );
        }
        return Ok(checks.iter().all(|c| c.passed));
    }

    let ctx = Session::load(&cli)?;
    let out = cli.out.as_path();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::GenData => {
            ctx.coverage.save(&out.join("coverage.jsonl"))?;
            ctx.expert.save(&out.join("expert.jsonl"))?;
            write_json(&out.join("experiment.json"), &ctx.exp)?;
            let report = ctx.expert.coverage_report(&ctx.coverage);
            println!(
                "{} transitions, {} expert states, {} uncovered expert states",
                ctx.coverage.len(),
                ctx.expert.len(),
                report.violations.len()
            );
        }
        Command::Smodice => {
            let sm = ctx.smodice()?;
            write_json(&out.join("smodice.json"), &sm)?;
        }
        Command::Doi { epsilon, resume } | Command::Uncon { alpha: epsilon, resume } => {
            let over = if matches!(cli.command, Command::Doi { .. }) {
                Over::Epsilon
            } else {
                Over::Alpha
            };
            let mut config = ctx.exp.run.clone();
            match (over, epsilon) {
                (Over::Epsilon, Some(e)) => config.epsilon = *e,
                (Over::Alpha, Some(a)) => config.alpha = *a,
                _ => {}
            }
            config.validate()?;
            let sm = ctx.smodice()?;
            let ckpt = out.join("checkpoints");
            fs::create_dir_all(&ckpt)?;
            let bundle = ctx.train(&sm, &config, over, Some(&ckpt), resume.as_deref())?;
            bundle.save(&out.join("bundle.json"))?;
            write_metrics_csv(&out.join("metrics.csv"), &bundle.metrics)?;
            let s = summarize(&ctx, &bundle)?;
            println!(
                "ratio_l1 {:.4} sf_l2 {:.4} return_fraction {} mean_phi {:.4}",
                s.ratio_l1,
                s.sf_l2,
                fmt_opt(s.return_fraction),
                s.mean_phi
            );
        }
        Command::Eval { bundle } => {
            let bundle = SkillBundle::load(bundle)?;
            if bundle.skills.first().map(|s| s.policy.num_states()) != Some(ctx.env.mdp.num_states()) {
                bail!("bundle does not match the environment");
            }
            eval(&ctx, &bundle, out)?;
        }
        Command::Sweep { over, seeds } => {
            let grid = match over {
                Over::Epsilon => ctx.exp.sweep.epsilons.clone(),
                Over::Alpha => ctx.exp.sweep.alphas.clone(),
            };
            let base_seed = ctx.exp.run.seed;
            let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
            w.write_record([
                "setting", "value", "seed", "ratio_l1", "sf_l2", "return_fraction", "mean_phi",
            ])?;
            let setting = match over {
                Over::Epsilon => "epsilon",
                Over::Alpha => "alpha",
            };
            for seed in base_seed..base_seed + seeds {
                // Data and expert recovery depend on the seed only.
                let mut exp = ctx.exp.clone();
                exp.run.seed = seed;
                let (coverage, expert) = match &cli.data {
                    Some(_) => (ctx.coverage.clone(), ctx.expert.clone()),
                    None => exp.generate(&ctx.env, seed)?,
                };
                let seeded = Session {
                    exp,
                    env: ctx.env.clone(),
                    coverage,
                    expert,
                };
                let sm = seeded.smodice()?;
                for &v in &grid {
                    let mut config = seeded.exp.run.clone();
                    match over {
                        Over::Epsilon => config.epsilon = v,
                        Over::Alpha => config.alpha = v,
                    }
                    config.validate()?;
                    let bundle = seeded.train(&sm, &config, *over, None, None)?;
                    let s = summarize(&seeded, &bundle)?;
                    let row = [
                        setting.to_string(),
                        v.to_string(),
                        seed.to_string(),
                        s.ratio_l1.to_string(),
                        s.sf_l2.to_string(),
                        fmt_opt(s.return_fraction),
                        s.mean_phi.to_string(),
                    ];
                    println!("{}", row.join(","));
                    w.write_record(&row)?;
                    w.flush()?;
                }
            }
        }
        Command::Oracle { .. } => unreachable!("handled above"),
    }
    Ok(true)
}
