//! Offline datasets: the state-action coverage set and the state-only expert set.
//!
//! Both are stored as line-delimited JSON: a header line with MDP metadata,
//! then one record per line.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mdp::{episode_rng, rollout, sample_index, Episode, Policy, TabularMdp, Termination};

/// One offline transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "ep")]
    pub episode: usize,
    #[serde(rename = "t")]
    pub step: usize,
    #[serde(rename = "s")]
    pub state: usize,
    #[serde(rename = "a")]
    pub action: usize,
    #[serde(rename = "sp")]
    pub next_state: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Header {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub samples: Vec<Sample>,
    pub feature_ref: Option<String>,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// States of the step-0 records, in record order.
    pub fn initial_states(&self) -> Vec<usize> {
        self.samples
            .iter()
            .filter(|r| r.step == 0)
            .map(|r| r.state)
            .collect()
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.samples.iter().map(|r| r.state)
    }

    /// Empirical `(s,a)` frequencies, row-major.
    pub fn state_action_frequencies(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.num_states * self.num_actions];
        let w = 1.0 / self.len().max(1) as f64;
        for r in &self.samples {
            f[r.state * self.num_actions + r.action] += w;
        }
        f
    }

    pub fn state_support(&self) -> BTreeSet<usize> {
        self.states().collect()
    }

    /// Empirical start distribution from episode starts.
    pub fn empirical_initial_dist(&self) -> Vec<f64> {
        let starts = self.initial_states();
        let mut rho = vec![0.0; self.num_states];
        for &s in &starts {
            rho[s] += 1.0 / starts.len() as f64;
        }
        rho
    }

    /// SHA-256 over the header and every record, identifying the dataset.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for x in [self.num_states as u64, self.num_actions as u64, self.gamma.to_bits()] {
            h.update(x.to_le_bytes());
        }
        for r in &self.samples {
            for x in [r.episode, r.step, r.state, r.action, r.next_state] {
                h.update((x as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Bounds and episode structure: every episode has exactly one step-0
    /// record and contiguous step indices.
    pub fn validate(&self) -> Result<()> {
        let mut steps: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, r) in self.samples.iter().enumerate() {
            if r.state >= self.num_states || r.next_state >= self.num_states {
                return Err(Error::Dataset(format!("record {i}: state out of range")));
            }
            if r.action >= self.num_actions {
                return Err(Error::Dataset(format!("record {i}: action out of range")));
            }
            steps.entry(r.episode).or_default().push(r.step);
        }
        for (ep, mut ts) in steps {
            ts.sort_unstable();
            if ts.iter().enumerate().any(|(k, &t)| k != t) {
                return Err(Error::Dataset(format!(
                    "episode {ep}: step indices are not 0..{} exactly once",
                    ts.len()
                )));
            }
        }
        Ok(())
    }

    fn from_episodes(mdp: &TabularMdp, episodes: &[Episode]) -> Self {
        let mut samples = Vec::with_capacity(episodes.iter().map(Episode::len).sum());
        for (ep, e) in episodes.iter().enumerate() {
            for t in 0..e.len() {
                samples.push(Sample {
                    episode: ep,
                    step: t,
                    state: e.states[t],
                    action: e.actions[t],
                    next_state: e.states[t + 1],
                });
            }
        }
        Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            gamma: mdp.discount(),
            samples,
            feature_ref: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = Header {
            num_states: self.num_states,
            num_actions: self.num_actions,
            gamma: self.gamma,
        };
        write_line(&mut w, path, &header)?;
        for r in &self.samples {
            write_line(&mut w, path, r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Load and validate. An empty file yields an empty dataset.
    pub fn load(path: &Path) -> Result<Self> {
        let mut lines = read_lines(path)?;
        let Some((_, first)) = lines.next() else {
            return Ok(Self {
                num_states: 0,
                num_actions: 0,
                gamma: 0.0,
                samples: Vec::new(),
                feature_ref: None,
            });
        };
        let header = parse_header(path, 1, &first?)?;
        let mut samples = Vec::new();
        for (lineno, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let obj = parse_object(path, lineno, &line)?;
            let field = |name: &str| uint_field(path, lineno, &obj, name);
            samples.push(Sample {
                episode: field("ep")?,
                step: field("t")?,
                state: field("s")?,
                action: field("a")?,
                next_state: field("sp")?,
            });
        }
        let ds = Self {
            num_states: header.num_states,
            num_actions: header.num_actions,
            gamma: header.gamma,
            samples,
            feature_ref: None,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// State-only expert demonstrations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertStateSet {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub states: Vec<usize>,
}

/// States visited by the expert but absent from the coverage data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub violations: Vec<usize>,
}

impl CoverageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ExpertStateSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::Dataset("expert state set is empty".into()));
        }
        if let Some(s) = self.states.iter().find(|&&s| s >= self.num_states) {
            return Err(Error::Dataset(format!("expert state {s} out of range")));
        }
        Ok(())
    }

    /// Expert-coverage check: every expert state must appear in the coverage data.
    pub fn coverage_report(&self, coverage: &TransitionDataset) -> CoverageReport {
        let support = coverage.state_support();
        let expert: BTreeSet<usize> = self.states.iter().copied().collect();
        CoverageReport {
            violations: expert.difference(&support).copied().collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Line {
            s: usize,
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write_line(
            &mut w,
            path,
            &Header {
                num_states: self.num_states,
                num_actions: self.num_actions,
                gamma: self.gamma,
            },
        )?;
        for &s in &self.states {
            write_line(&mut w, path, &Line { s })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Load without validating, so an empty file gives an empty set.
    pub fn load(path: &Path) -> Result<Self> {
        let mut lines = read_lines(path)?;
        let Some((_, first)) = lines.next() else {
            return Ok(Self {
                num_states: 0,
                num_actions: 0,
                gamma: 0.0,
                states: Vec::new(),
            });
        };
        let header = parse_header(path, 1, &first?)?;
        let mut states = Vec::new();
        for (lineno, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let obj = parse_object(path, lineno, &line)?;
            let s = uint_field(path, lineno, &obj, "s")?;
            if s >= header.num_states {
                return Err(Error::Parse {
                    path: path.into(),
                    line: lineno,
                    message: format!("field `s` = {s} out of range"),
                });
            }
            states.push(s);
        }
        Ok(Self {
            num_states: header.num_states,
            num_actions: header.num_actions,
            gamma: header.gamma,
            states,
        })
    }
}

fn write_line<W: Write, T: Serialize>(w: &mut W, path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let owned = path.to_path_buf();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(&owned, e)))))
}

fn parse_object(path: &Path, line: usize, text: &str) -> Result<serde_json::Map<String, Value>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::Parse {
            path: path.into(),
            line,
            message: "expected a JSON object".into(),
        }),
        Err(e) => Err(Error::Parse {
            path: path.into(),
            line,
            message: format!("malformed record: {e}"),
        }),
    }
}

fn uint_field(path: &Path, line: usize, obj: &serde_json::Map<String, Value>, name: &str) -> Result<usize> {
    obj.get(name)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Parse {
            path: path.into(),
            line,
            message: format!("field `{name}` missing or not a non-negative integer"),
        })
}

fn parse_header(path: &Path, line: usize, text: &str) -> Result<Header> {
    let obj = parse_object(path, line, text)?;
    let gamma = obj.get("gamma").and_then(Value::as_f64).ok_or_else(|| Error::Parse {
        path: path.into(),
        line,
        message: "header field `gamma` missing or not a number".into(),
    })?;
    Ok(Header {
        num_states: uint_field(path, line, &obj, "num_states")?,
        num_actions: uint_field(path, line, &obj, "num_actions")?,
        gamma,
    })
}

/// Independent sub-seed derived from a master seed and a tag (splitmix64).
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Target sizes for dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSizes {
    /// Exact number of coverage transitions.
    pub transitions: usize,
    /// Episode length cap; episodes otherwise stop with probability `1-γ` per step.
    pub horizon: usize,
}

fn episodes_until(
    mdp: &TabularMdp,
    budget: usize,
    cap: usize,
    seed: u64,
    mut pick: impl FnMut(&mut ChaCha8Rng) -> usize,
    policies: &[&Policy],
) -> Vec<Episode> {
    let mut out = Vec::new();
    let mut used = 0;
    let mut i = 0u64;
    while used < budget {
        let mut rng = episode_rng(seed, i);
        let k = pick(&mut rng);
        let mut ep = rollout(mdp, policies[k], Termination::Geometric { cap }, &mut rng);
        let keep = ep.len().min(budget - used);
        ep.actions.truncate(keep);
        ep.states.truncate(keep + 1);
        used += keep;
        out.push(ep);
        i += 1;
    }
    out
}

/// Coverage dataset: whole episodes from the behaviour mixture plus an
/// `expert_fraction` share of expert transitions, shuffled at episode level so
/// expert records are indistinguishable. Episodes stop with probability
/// `1-γ` after every step, which makes the record distribution a sample of
/// the mixture's discounted occupancy.
pub fn build_coverage_dataset(
    mdp: &TabularMdp,
    mixture: &[(Policy, f64)],
    expert_policy: &Policy,
    expert_fraction: f64,
    sizes: DatasetSizes,
    seed: u64,
) -> Result<TransitionDataset> {
    if mixture.is_empty() {
        return Err(Error::InvalidArgument("behaviour mixture is empty".into()));
    }
    let weights: Vec<f64> = mixture.iter().map(|(_, w)| *w).collect();
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
        || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidArgument(format!(
            "mixture weights {weights:?} must be nonnegative and sum to 1"
        )));
    }
    if !(0.0..1.0).contains(&expert_fraction) {
        return Err(Error::InvalidArgument(format!(
            "expert fraction {expert_fraction} not in [0, 1)"
        )));
    }
    if sizes.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let n_expert = (expert_fraction * sizes.transitions as f64).round() as usize;
    let experts = episodes_until(
        mdp,
        n_expert,
        sizes.horizon,
        sub_seed(seed, 1),
        |_| 0,
        &[expert_policy],
    );
    let behaviour: Vec<&Policy> = mixture.iter().map(|(p, _)| p).collect();
    let mixed = episodes_until(
        mdp,
        sizes.transitions - n_expert,
        sizes.horizon,
        sub_seed(seed, 2),
        |rng| sample_index(&weights, rng.random()),
        &behaviour,
    );
    let mut episodes = mixed;
    episodes.extend(experts);
    episodes.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(seed, 3)));
    Ok(TransitionDataset::from_episodes(mdp, &episodes))
}

/// Expert demonstrations with actions discarded.
pub fn build_expert_set(
    mdp: &TabularMdp,
    expert_policy: &Policy,
    num_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<ExpertStateSet> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut states = Vec::new();
    for i in 0..num_episodes as u64 {
        let ep = rollout(
            mdp,
            expert_policy,
            Termination::Geometric { cap: horizon },
            &mut episode_rng(sub_seed(seed, 4), i),
        );
        states.extend_from_slice(&ep.states[..ep.len()]);
    }
    Ok(ExpertStateSet {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        gamma: mdp.discount(),
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TabularMdp;

    fn small() -> (TabularMdp, Policy, Policy) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mdp = TabularMdp::random(5, 2, 0.9, &mut rng);
        (mdp, Policy::random(5, 2, &mut rng), Policy::random(5, 2, &mut rng))
    }

    #[test]
    fn expert_share_is_exact() {
        let (mdp, b, e) = small();
        let sizes = DatasetSizes {
            transitions: 160_000,
            horizon: 200,
        };
        let ds = build_coverage_dataset(&mdp, &[(b, 1.0)], &e, 1.0 / 160.0, sizes, 1).unwrap();
        assert_eq!(ds.len(), 160_000);
        ds.validate().unwrap();
    }

    #[test]
    fn zero_fraction_ignores_expert() {
        let (mdp, b, e) = small();
        let sizes = DatasetSizes {
            transitions: 5_000,
            horizon: 100,
        };
        let a = build_coverage_dataset(&mdp, &[(b.clone(), 1.0)], &e, 0.0, sizes, 9).unwrap();
        let other = Policy::uniform(5, 2);
        let c = build_coverage_dataset(&mdp, &[(b, 1.0)], &other, 0.0, sizes, 9).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn deterministic_mixture_on_deterministic_mdp() {
        let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 0.0], 0.9).unwrap();
        let pi = Policy::uniform(2, 1);
        let sizes = DatasetSizes {
            transitions: 1000,
            horizon: 50,
        };
        let ds = build_coverage_dataset(&mdp, &[(pi.clone(), 1.0)], &pi, 0.0, sizes, 2).unwrap();
        // every episode alternates 0,1,0,1,... from the start
        assert!(ds.samples.iter().all(|r| r.state == r.step % 2 && r.next_state == 1 - r.state));
    }

    #[test]
    fn bad_mixtures_rejected() {
        let (mdp, b, e) = small();
        let sizes = DatasetSizes {
            transitions: 10,
            horizon: 10,
        };
        assert!(build_coverage_dataset(&mdp, &[], &e, 0.0, sizes, 0).is_err());
        assert!(build_coverage_dataset(&mdp, &[(b.clone(), 0.7)], &e, 0.0, sizes, 0).is_err());
        assert!(build_coverage_dataset(&mdp, &[(b, 1.0)], &e, 1.0, sizes, 0).is_err());
    }

    #[test]
    fn coverage_report_lists_missing_states() {
        let ds = TransitionDataset {
            num_states: 4,
            num_actions: 1,
            gamma: 0.9,
            samples: vec![
                Sample { episode: 0, step: 0, state: 0, action: 0, next_state: 1 },
                Sample { episode: 0, step: 1, state: 1, action: 0, next_state: 2 },
            ],
            feature_ref: None,
        };
        let mut ex = ExpertStateSet {
            num_states: 4,
            num_actions: 1,
            gamma: 0.9,
            states: vec![0, 1, 1],
        };
        assert!(ex.coverage_report(&ds).is_clean());
        ex.states.push(3);
        assert_eq!(ex.coverage_report(&ds).violations, vec![3]);
    }

    #[test]
    fn save_load_round_trip() {
        let (mdp, b, e) = small();
        let sizes = DatasetSizes {
            transitions: 300,
            horizon: 30,
        };
        let ds = build_coverage_dataset(&mdp, &[(b, 1.0)], &e, 0.1, sizes, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        ds.save(&p).unwrap();
        assert_eq!(TransitionDataset::load(&p).unwrap(), ds);
        let bytes = std::fs::read(&p).unwrap();
        ds.save(&p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), bytes);
        let first = String::from_utf8(bytes).unwrap();
        assert!(first.starts_with(r#"{"num_states":5,"num_actions":2,"gamma":0.9}"#));

        let ex = build_expert_set(&mdp, &e, 10, 30, 1).unwrap();
        let q = dir.path().join("e.jsonl");
        ex.save(&q).unwrap();
        assert_eq!(ExpertStateSet::load(&q).unwrap(), ex);
    }

    #[test]
    fn truncated_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        std::fs::write(
            &p,
            "{\"num_states\":2,\"num_actions\":1,\"gamma\":0.5}\n{\"ep\":0,\"t\":0,\"s\":0,\"a\":0,\"sp\":1}\n{\"ep\":0,\"t\":1,\"s\":1,",
        )
        .unwrap();
        match TransitionDataset::load(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(
            &p,
            "{\"num_states\":2,\"num_actions\":1,\"gamma\":0.5}\n{\"ep\":0,\"t\":0,\"s\":0,\"sp\":1}\n",
        )
        .unwrap();
        let err = TransitionDataset::load(&p).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("`a`"), "{err}");

        std::fs::write(&p, "").unwrap();
        assert!(TransitionDataset::load(&p).unwrap().is_empty());
        let ex = ExpertStateSet::load(&p).unwrap();
        assert!(ex.is_empty());
        assert!(ex.validate().is_err());
    }

    #[test]
    fn broken_episode_structure_rejected() {
        let ds = TransitionDataset {
            num_states: 2,
            num_actions: 1,
            gamma: 0.9,
            samples: vec![
                Sample { episode: 0, step: 0, state: 0, action: 0, next_state: 1 },
                Sample { episode: 0, step: 2, state: 1, action: 0, next_state: 0 },
            ],
            feature_ref: None,
        };
        assert!(ds.validate().is_err());
    }
}
