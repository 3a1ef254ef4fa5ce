use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{Corpus, Source};
use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "SFT")]
    Sft,
    #[serde(rename = "REWARD")]
    Reward,
    #[serde(rename = "RL_DPA")]
    RlDpa,
    #[serde(rename = "HELD_OUT")]
    HeldOut,
}

impl Split {
    pub const TRAINING: [Split; 3] = [Split::Sft, Split::Reward, Split::RlDpa];
}

/// Problem-to-split assignment plus the per-split evaluation carve-outs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub splits: BTreeMap<String, Split>,
    /// Problems set aside for evaluation inside their training split.
    pub eval: BTreeSet<String>,
}

impl SplitAssignment {
    /// Ids in `split`, sorted. With `eval = Some(flag)` only those whose eval flag matches.
    pub fn ids(&self, split: Split, eval: Option<bool>) -> Vec<String> {
        self.splits
            .iter()
            .filter(|(id, s)| **s == split && eval.is_none_or(|e| self.eval.contains(*id) == e))
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.values().filter(|s| **s == split).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Contest problems reserved for held-out evaluation before splitting.
    pub held_out: usize,
    pub sft_percent: usize,
    pub reward_percent: usize,
    pub eval_percent: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { held_out: 10, sft_percent: 40, reward_percent: 66, eval_percent: 5 }
    }
}

/// Largest-remainder apportionment of `total` items over `sizes` proportionally.
fn apportion(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut counts: Vec<usize> = sizes.iter().map(|&s| s * total / n).collect();
    let mut rema: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(i, &s)| ((s * total) % n, i)).collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = total - counts.iter().sum::<usize>();
    for (_, i) in rema {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Assigns problems to SFT / REWARD / RL_DPA / HELD_OUT.
///
/// Sizes use floor at each stage with the remainder going to the last split:
/// `|SFT| = ⌊N·sft%⌋`, `|REWARD| = ⌊(N−|SFT|)·reward%⌋`, RL_DPA takes the rest.
/// Contest/synthetic counts per split are apportioned by largest remainder.
pub fn split_dataset(corpus: &Corpus, seed: u64, cfg: &SplitConfig) -> Result<SplitAssignment, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut contest: Vec<&str> =
        corpus.problems.iter().filter(|p| p.source == Source::Contest).map(|p| p.id.as_str()).collect();
    let mut synthetic: Vec<&str> =
        corpus.problems.iter().filter(|p| p.source == Source::Synthetic).map(|p| p.id.as_str()).collect();
    contest.sort_unstable();
    synthetic.sort_unstable();
    contest.shuffle(&mut rng);
    synthetic.shuffle(&mut rng);
    if cfg.held_out > contest.len() {
        return Err(CorpusError::Sizing(format!(
            "cannot hold out {} contest problems from {}",
            cfg.held_out,
            contest.len()
        )));
    }
    let mut splits = BTreeMap::new();
    for id in contest.drain(..cfg.held_out) {
        splits.insert(id.to_string(), Split::HeldOut);
    }
    let n = contest.len() + synthetic.len();
    let n_sft = n * cfg.sft_percent / 100;
    let rest = n - n_sft;
    let n_reward = rest * cfg.reward_percent / 100;
    let sizes = [n_sft, n_reward, rest - n_reward];
    if sizes.contains(&0) {
        return Err(CorpusError::Sizing(format!(
            "{n} problems give split sizes {sizes:?}; every split needs at least one"
        )));
    }
    let contest_counts = apportion(&sizes, contest.len());
    let (mut ci, mut si) = (0, 0);
    for (k, split) in Split::TRAINING.iter().enumerate() {
        let nc = contest_counts[k];
        let ns = sizes[k] - nc;
        for id in &contest[ci..ci + nc] {
            splits.insert(id.to_string(), *split);
        }
        for id in &synthetic[si..si + ns] {
            splits.insert(id.to_string(), *split);
        }
        ci += nc;
        si += ns;
    }
    let mut eval = BTreeSet::new();
    for split in Split::TRAINING {
        let mut members: Vec<&String> = splits.iter().filter(|(_, s)| **s == split).map(|(id, _)| id).collect();
        let k = (members.len() * cfg.eval_percent / 100).max(1);
        members.shuffle(&mut rng);
        eval.extend(members.into_iter().take(k).cloned());
    }
    Ok(SplitAssignment { seed, splits, eval })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Problem, TestCase};
    use proptest::prelude::*;

    fn corpus(contest: usize, synthetic: usize) -> Corpus {
        let mk = |i: usize, source| Problem {
            id: format!("{}{i:04}", if source == Source::Contest { "c" } else { "s" }),
            statement: String::new(),
            tests: vec![TestCase { input: "1".into(), output: "1".into() }],
            step_limit: 10,
            source,
            median_runtime: None,
        };
        Corpus {
            problems: (0..contest).map(|i| mk(i, Source::Contest)).chain((0..synthetic).map(|i| mk(i, Source::Synthetic))).collect(),
            solutions: Vec::new(),
        }
    }

    fn no_holdout() -> SplitConfig {
        SplitConfig { held_out: 0, ..SplitConfig::default() }
    }

    #[test]
    fn hundred_problems() {
        let a = split_dataset(&corpus(100, 0), 7, &no_holdout()).unwrap();
        assert_eq!(a.count(Split::Sft), 40);
        assert_eq!(a.count(Split::Reward), 39);
        assert_eq!(a.count(Split::RlDpa), 21);
        assert_eq!(a.ids(Split::Sft, Some(true)).len(), 2);
        assert_eq!(a.ids(Split::RlDpa, Some(true)).len(), 1);
    }

    #[test]
    fn deterministic_for_seed() {
        let c = corpus(60, 40);
        assert_eq!(split_dataset(&c, 3, &no_holdout()).unwrap(), split_dataset(&c, 3, &no_holdout()).unwrap());
        assert_ne!(split_dataset(&c, 3, &no_holdout()).unwrap(), split_dataset(&c, 4, &no_holdout()).unwrap());
    }

    #[test]
    fn too_small_is_sizing_error() {
        assert!(matches!(split_dataset(&corpus(1, 0), 0, &no_holdout()), Err(CorpusError::Sizing(_))));
        assert!(matches!(split_dataset(&corpus(5, 0), 0, &SplitConfig::default()), Err(CorpusError::Sizing(_))));
    }

    #[test]
    fn held_out_are_contest_only() {
        let c = corpus(30, 30);
        let a = split_dataset(&c, 1, &SplitConfig { held_out: 10, ..SplitConfig::default() }).unwrap();
        let held = a.ids(Split::HeldOut, None);
        assert_eq!(held.len(), 10);
        assert!(held.iter().all(|id| id.starts_with('c')));
        assert_eq!(a.splits.len(), 60);
    }

    proptest! {
        #[test]
        fn proportions_and_stratification(contest in 50usize..900, synthetic in 0usize..600, seed in any::<u64>()) {
            let c = corpus(contest, synthetic);
            let a = split_dataset(&c, seed, &no_holdout()).unwrap();
            let n = (contest + synthetic) as f64;
            prop_assert_eq!(a.splits.len(), contest + synthetic);
            prop_assert!((a.count(Split::Sft) as f64 / n - 0.40).abs() <= 1.0 / n);
            let global = contest as f64 / n;
            for split in Split::TRAINING {
                let ids = a.ids(split, None);
                let frac = ids.iter().filter(|id| id.starts_with('c')).count() as f64 / ids.len() as f64;
                if ids.len() >= 50 {
                    prop_assert!((frac - global).abs() <= 0.02, "{:?}: {} vs {}", split, frac, global);
                }
                let k = a.ids(split, Some(true)).len();
                prop_assert_eq!(k, (ids.len() * 5 / 100).max(1));
            }
        }
    }
}
