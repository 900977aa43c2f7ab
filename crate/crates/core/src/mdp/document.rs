use serde::{Deserialize, Serialize};

use super::gridworld::Gridworld;
use super::TabularMdp;
use crate::error::Result;

pub(crate) fn default_discount() -> f64 {
    0.99
}

/// Gridworld generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    /// Probability that the move direction is replaced by a uniformly random one.
    #[serde(default)]
    pub slip: f64,
    /// Blocked cells as `[x, y]`.
    #[serde(default)]
    pub walls: Vec<[usize; 2]>,
    /// Start cells; the initial distribution is uniform over them.
    #[serde(default = "default_start")]
    pub start: Vec<[usize; 2]>,
    #[serde(default)]
    pub goal: Option<[usize; 2]>,
    #[serde(default = "default_true")]
    pub absorbing_goal: bool,
}

fn default_start() -> Vec<[usize; 2]> {
    vec![[0, 0]]
}

fn default_true() -> bool {
    true
}

/// Structured-text MDP: either explicit tensors or gridworld parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MdpDocument {
    Explicit {
        num_states: usize,
        num_actions: usize,
        /// `transition[s][a][s']`.
        transition: Vec<Vec<Vec<f64>>>,
        initial_dist: Vec<f64>,
        #[serde(default = "default_discount")]
        discount: f64,
    },
    Gridworld {
        gridworld: GridworldSpec,
        #[serde(default = "default_discount")]
        discount: f64,
    },
}

impl MdpDocument {
    pub fn build(&self) -> Result<TabularMdp> {
        match self {
            MdpDocument::Explicit {
                num_states,
                num_actions,
                transition,
                initial_dist,
                discount,
            } => {
                let flat = transition.iter().flatten().flatten().copied().collect();
                TabularMdp::new(*num_states, *num_actions, flat, initial_dist.clone(), *discount)
            }
            MdpDocument::Gridworld { gridworld, discount } => {
                Ok(Gridworld::new(gridworld.clone(), *discount)?.mdp().clone())
            }
        }
    }

    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let transition = (0..ns)
            .map(|s| (0..na).map(|a| mdp.next_dist(s, a).to_vec()).collect())
            .collect();
        MdpDocument::Explicit {
            num_states: ns,
            num_actions: na,
            transition,
            initial_dist: mdp.initial_dist().to_vec(),
            discount: mdp.discount(),
        }
    }
}
