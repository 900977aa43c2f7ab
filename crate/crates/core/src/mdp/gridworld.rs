//! Gridworld generator: four compass moves, optional slip, walls, absorbing goal.

use std::collections::VecDeque;

use super::{FeatureMap, GridworldSpec, Policy, TabularMdp};
use crate::error::{Error, Result};

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;
const MOVES: [(isize, isize); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];

#[derive(Debug, Clone)]
pub struct Gridworld {
    spec: GridworldSpec,
    cells: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
    mdp: TabularMdp,
}

impl Gridworld {
    pub fn new(spec: GridworldSpec, discount: f64) -> Result<Self> {
        let (w, h) = (spec.width, spec.height);
        if w == 0 || h == 0 {
            return Err(Error::InvalidMdp("gridworld needs positive width and height".into()));
        }
        if !(0.0..=1.0).contains(&spec.slip) {
            return Err(Error::InvalidMdp(format!("slip {} not in [0, 1]", spec.slip)));
        }
        let mut blocked = vec![false; w * h];
        for &[x, y] in &spec.walls {
            if x >= w || y >= h {
                return Err(Error::InvalidMdp(format!("wall ({x}, {y}) outside the grid")));
            }
            blocked[y * w + x] = true;
        }
        let mut cells = Vec::new();
        let mut index = vec![None; w * h];
        for y in 0..h {
            for x in 0..w {
                if !blocked[y * w + x] {
                    index[y * w + x] = Some(cells.len());
                    cells.push((x, y));
                }
            }
        }
        let lookup = |[x, y]: [usize; 2], what: &str| -> Result<usize> {
            if x >= w || y >= h {
                return Err(Error::InvalidMdp(format!("{what} ({x}, {y}) outside the grid")));
            }
            index[y * w + x].ok_or_else(|| Error::InvalidMdp(format!("{what} ({x}, {y}) is a wall")))
        };
        let n = cells.len();
        if spec.start.is_empty() {
            return Err(Error::InvalidMdp("gridworld needs at least one start cell".into()));
        }
        let mut initial = vec![0.0; n];
        for &c in &spec.start {
            initial[lookup(c, "start")?] += 1.0 / spec.start.len() as f64;
        }
        let goal = spec.goal.map(|g| lookup(g, "goal")).transpose()?;

        let step = |s: usize, m: usize| -> usize {
            let (x, y) = cells[s];
            let (dx, dy) = MOVES[m];
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                return s;
            }
            index[ny as usize * w + nx as usize].unwrap_or(s)
        };
        let mut transition = vec![0.0; n * 4 * n];
        for s in 0..n {
            for a in 0..4 {
                let row = &mut transition[(s * 4 + a) * n..(s * 4 + a + 1) * n];
                if spec.absorbing_goal && Some(s) == goal {
                    row[s] = 1.0;
                    continue;
                }
                row[step(s, a)] += 1.0 - spec.slip;
                for m in 0..4 {
                    row[step(s, m)] += spec.slip / 4.0;
                }
            }
        }
        let mdp = TabularMdp::new(n, 4, transition, initial, discount)?;
        Ok(Self {
            spec,
            cells,
            index,
            mdp,
        })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn spec(&self) -> &GridworldSpec {
        &self.spec
    }

    pub fn num_states(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        self.cells[s]
    }

    pub fn state_at(&self, x: usize, y: usize) -> Option<usize> {
        if x >= self.spec.width || y >= self.spec.height {
            return None;
        }
        self.index[y * self.spec.width + x]
    }

    pub fn goal_state(&self) -> Option<usize> {
        self.spec.goal.and_then(|[x, y]| self.state_at(x, y))
    }

    /// `(x, y)` scaled to `[0, 1]`.
    pub fn coordinate_features(&self) -> FeatureMap {
        let sx = (self.spec.width.max(2) - 1) as f64;
        let sy = (self.spec.height.max(2) - 1) as f64;
        let feats = self
            .cells
            .iter()
            .map(|&(x, y)| vec![x as f64 / sx, y as f64 / sy])
            .collect();
        FeatureMap::new("xy", feats).expect("grid has at least one cell")
    }

    /// Reward 1 for every action taken in the goal cell.
    pub fn goal_reward(&self) -> Result<Vec<f64>> {
        let g = self
            .goal_state()
            .ok_or_else(|| Error::InvalidArgument("gridworld has no goal".into()))?;
        let mut r = vec![0.0; self.num_states() * 4];
        r[g * 4..g * 4 + 4].iter_mut().for_each(|x| *x = 1.0);
        Ok(r)
    }

    /// Breadth-first step counts to `target` under deterministic moves.
    pub fn distances_to(&self, target: usize) -> Vec<Option<usize>> {
        let n = self.num_states();
        let mut dist = vec![None; n];
        dist[target] = Some(0);
        let mut queue = VecDeque::from([target]);
        while let Some(u) = queue.pop_front() {
            let (x, y) = self.cells[u];
            for (dx, dy) in MOVES {
                let (px, py) = (x as isize - dx, y as isize - dy);
                if px < 0 || py < 0 {
                    continue;
                }
                if let Some(p) = self.state_at(px as usize, py as usize) {
                    if dist[p].is_none() {
                        dist[p] = Some(dist[u].unwrap() + 1);
                        queue.push_back(p);
                    }
                }
            }
        }
        dist
    }

    /// Uniform over the moves that shorten the path to `target`; uniform over
    /// all moves at the target and where it is unreachable. When several
    /// shortest routes exist this policy spreads over all of them.
    pub fn shortest_path_policy(&self, target: usize) -> Policy {
        self.path_policy(target, false)
    }

    /// Deterministic variant: the first shortening move in `UP, RIGHT, DOWN,
    /// LEFT` order, so the expert follows a single route.
    pub fn greedy_path_policy(&self, target: usize) -> Policy {
        self.path_policy(target, true)
    }

    fn path_policy(&self, target: usize, greedy: bool) -> Policy {
        let n = self.num_states();
        let dist = self.distances_to(target);
        let mut probs = vec![0.0; n * 4];
        for s in 0..n {
            let (x, y) = self.cells[s];
            let mut good: Vec<usize> = match dist[s] {
                Some(d) if d > 0 => (0..4)
                    .filter(|&m| {
                        let (dx, dy) = MOVES[m];
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        nx >= 0
                            && ny >= 0
                            && self
                                .state_at(nx as usize, ny as usize)
                                .and_then(|t| dist[t])
                                .is_some_and(|dt| dt + 1 == d)
                    })
                    .collect(),
                _ => (0..4).collect(),
            };
            if greedy && dist[s].is_some_and(|d| d > 0) {
                good.truncate(1);
            }
            for &m in &good {
                probs[s * 4 + m] = 1.0 / good.len() as f64;
            }
        }
        Policy::new(n, 4, probs).expect("rows normalised by construction")
    }
}
