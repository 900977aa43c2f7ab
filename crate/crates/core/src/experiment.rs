//! End-to-end experiment description: environment, expert, behaviour data,
//! features, run settings and sweep grids, with the bundled gridworld benchmark
//! as the default.

use serde::{Deserialize, Serialize};

use crate::datagen::{build_coverage_dataset, build_expert_set, sub_seed, DatasetSizes, ExpertStateSet, TransitionDataset};
use crate::error::{Error, Result};
use crate::mdp::gridworld::Gridworld;
use crate::mdp::{default_horizon, FeatureMap, GridworldSpec, MdpDocument, Policy, TabularMdp};
use crate::pipeline::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ExpertSpec {
    /// Uniform over shortest-path moves to the gridworld goal.
    ShortestPath,
    /// A single shortest route, preferring earlier actions on ties.
    GreedyPath,
    /// Explicit per-state action distributions.
    Policy { probs: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub transitions: usize,
    pub expert_fraction: f64,
    pub expert_episodes: usize,
    /// Episode cap; `None` picks the smallest `H` with `γ^H < 1e-4`.
    pub horizon: Option<usize>,
    /// Weight of the uniform-random behaviour policy.
    pub uniform_weight: f64,
    /// Weight of the noisy expert, which follows the expert with probability `1 - noise`.
    pub noisy_expert_weight: f64,
    pub noise: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            transitions: 50_000,
            expert_fraction: 1.0 / 160.0,
            expert_episodes: 200,
            horizon: None,
            uniform_weight: 0.5,
            noisy_expert_weight: 0.5,
            noise: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    OneHot,
    /// Gridworld `(x, y)` in `[0, 1]`.
    Coordinates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    /// Input of the classifier and the skill discriminator.
    pub discriminator: FeatureKind,
    /// Coordinates the discriminator sees; `None` keeps all.
    pub projection: Option<Vec<usize>>,
    /// Features for successor-feature distances.
    pub metrics: FeatureKind,
    /// Standardise metric features over the coverage states.
    pub normalize_metrics: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            discriminator: FeatureKind::OneHot,
            projection: None,
            metrics: FeatureKind::Coordinates,
            normalize_metrics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub epsilons: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            epsilons: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            alphas: vec![0.0, 8.0, 16.0, 32.0, 64.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub environment: MdpDocument,
    #[serde(default = "default_expert")]
    pub expert: ExpertSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_expert() -> ExpertSpec {
    ExpertSpec::ShortestPath
}

/// Built environment: dynamics, policies, features and task reward.
#[derive(Debug, Clone)]
pub struct Environment {
    pub mdp: TabularMdp,
    pub grid: Option<Gridworld>,
    pub expert: Policy,
    pub behaviour: Vec<(Policy, f64)>,
    pub discriminator_features: FeatureMap,
    /// Raw metric features (normalised per dataset by [`Environment::metric_features`]).
    raw_metric_features: FeatureMap,
    normalize_metrics: bool,
    /// Per-`(s,a)` task reward, when the environment defines one.
    pub task_reward: Option<Vec<f64>>,
}

impl Environment {
    /// Metric features, standardised over the coverage states when configured.
    pub fn metric_features(&self, coverage: &TransitionDataset) -> Result<FeatureMap> {
        if self.normalize_metrics {
            self.raw_metric_features.normalized(&coverage.states().collect::<Vec<_>>())
        } else {
            Ok(self.raw_metric_features.clone())
        }
    }
}

/// Ten-by-ten grid with a central 4x4 block between the bottom-left start and
/// the top-right goal. The goal does not absorb, so expert mass stays spread
/// along the route instead of piling up in one cell.
pub fn benchmark_gridworld() -> GridworldSpec {
    let walls = (3..7).flat_map(|x| (3..7).map(move |y| [x, y])).collect();
    GridworldSpec {
        width: 10,
        height: 10,
        slip: 0.1,
        walls,
        start: vec![[0, 0]],
        goal: Some([9, 9]),
        absorbing_goal: false,
    }
}

impl Default for Experiment {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl Experiment {
    /// The bundled gridworld benchmark: a single-route expert, behaviour data
    /// split between uniform and expert episodes, and a discriminator on `(x, y)`.
    pub fn benchmark() -> Self {
        Self {
            environment: MdpDocument::Gridworld {
                gridworld: benchmark_gridworld(),
                discount: 0.98,
            },
            expert: ExpertSpec::GreedyPath,
            data: DataSpec {
                noise: 0.0,
                ..DataSpec::default()
            },
            features: FeatureSpec {
                discriminator: FeatureKind::Coordinates,
                ..FeatureSpec::default()
            },
            run: RunConfig::default(),
            sweep: SweepSpec::default(),
        }
    }

    pub fn build(&self) -> Result<Environment> {
        let (mdp, grid) = match &self.environment {
            MdpDocument::Gridworld { gridworld, discount } => {
                let g = Gridworld::new(gridworld.clone(), *discount)?;
                (g.mdp().clone(), Some(g))
            }
            doc => (doc.build()?, None),
        };
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let expert = match &self.expert {
            ExpertSpec::ShortestPath | ExpertSpec::GreedyPath => {
                let g = grid
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("shortest-path expert needs a gridworld".into()))?;
                let goal = g
                    .goal_state()
                    .ok_or_else(|| Error::InvalidArgument("shortest-path expert needs a goal".into()))?;
                if self.expert == ExpertSpec::GreedyPath {
                    g.greedy_path_policy(goal)
                } else {
                    g.shortest_path_policy(goal)
                }
            }
            ExpertSpec::Policy { probs } => {
                if probs.len() != ns {
                    return Err(Error::InvalidPolicy(format!("expert has {} rows for {ns} states", probs.len())));
                }
                Policy::new(ns, na, probs.iter().flatten().copied().collect())?
            }
        };
        let d = &self.data;
        let uniform = Policy::uniform(ns, na);
        let mut behaviour = Vec::new();
        let total = d.uniform_weight + d.noisy_expert_weight;
        if !(total > 0.0) || d.uniform_weight < 0.0 || d.noisy_expert_weight < 0.0 {
            return Err(Error::InvalidArgument("behaviour weights must be nonnegative with a positive sum".into()));
        }
        if d.uniform_weight > 0.0 {
            behaviour.push((uniform.clone(), d.uniform_weight / total));
        }
        if d.noisy_expert_weight > 0.0 {
            behaviour.push((expert.mix(&uniform, d.noise)?, d.noisy_expert_weight / total));
        }
        let feature = |kind: FeatureKind| -> Result<FeatureMap> {
            match kind {
                FeatureKind::OneHot => Ok(FeatureMap::one_hot(ns)),
                FeatureKind::Coordinates => grid
                    .as_ref()
                    .map(Gridworld::coordinate_features)
                    .ok_or_else(|| Error::InvalidArgument("coordinate features need a gridworld".into())),
            }
        };
        let mut discriminator_features = feature(self.features.discriminator)?;
        if let Some(p) = &self.features.projection {
            discriminator_features = discriminator_features.with_projection(p.clone())?;
        }
        let task_reward = grid.as_ref().and_then(|g| g.goal_reward().ok());
        Ok(Environment {
            raw_metric_features: feature(self.features.metrics)?,
            normalize_metrics: self.features.normalize_metrics,
            mdp,
            grid,
            expert,
            behaviour,
            discriminator_features,
            task_reward,
        })
    }

    /// Coverage dataset and expert state set for `seed`.
    pub fn generate(&self, env: &Environment, seed: u64) -> Result<(TransitionDataset, ExpertStateSet)> {
        let d = &self.data;
        let horizon = d.horizon.unwrap_or_else(|| default_horizon(env.mdp.discount(), 1e-4));
        let coverage = build_coverage_dataset(
            &env.mdp,
            &env.behaviour,
            &env.expert,
            d.expert_fraction,
            DatasetSizes {
                transitions: d.transitions,
                horizon,
            },
            sub_seed(seed, 10),
        )?;
        let expert = build_expert_set(&env.mdp, &env.expert, d.expert_episodes, horizon, sub_seed(seed, 11))?;
        Ok((coverage, expert))
    }
}
