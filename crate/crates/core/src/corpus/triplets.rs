use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{Corpus, Solution, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub problem_id: String,
    pub statement: String,
    pub fast: Solution,
    pub slow: Solution,
    pub slow_is_incorrect: bool,
    /// Contest pair with both runtimes measured.
    pub has_runtimes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletConfig {
    /// Size of the fastest-solutions pool for `fast`.
    pub fast_pool: usize,
    /// Percentage of slowest correct solutions forming the `slow` pool (rounded up).
    pub slow_percent: usize,
    /// Percentage of emitted triplets whose slow side becomes an incorrect solution.
    pub incorrect_percent: usize,
    /// Triplets drawn per contest problem.
    pub per_problem: usize,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { fast_pool: 5, slow_percent: 50, incorrect_percent: 5, per_problem: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSummary {
    pub emitted: usize,
    pub injected: usize,
    /// Problems that could not form a pair.
    pub skipped: Vec<String>,
}

pub(crate) fn ceil_percent(n: usize, percent: usize) -> usize {
    (n * percent).div_ceil(100)
}

/// Picks a (faster, slower) pair of ranks from `n` ranked solutions: the
/// slower from the slowest `slow_count`, the faster from the first
/// `fast_pool` ranks ahead of it, so the two never coincide.
pub(crate) fn draw_pair<R: Rng>(rng: &mut R, n: usize, fast_pool: usize, slow_count: usize) -> (usize, usize) {
    let slow_count = slow_count.clamp(1, n - 1);
    let slow = n - slow_count + rng.gen_range(0..slow_count);
    let fast = rng.gen_range(0..fast_pool.max(1).min(slow));
    (fast, slow)
}

/// Forms training triplets for the problems in `ids` (all problems if empty).
pub fn build_triplets(corpus: &Corpus, ids: &[String], seed: u64, cfg: &TripletConfig) -> (Vec<Triplet>, TripletSummary) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut summary = TripletSummary::default();
    let mut ids: Vec<&str> = if ids.is_empty() {
        corpus.problems.iter().map(|p| p.id.as_str()).collect()
    } else {
        ids.iter().map(String::as_str).collect()
    };
    ids.sort_unstable();
    for id in ids {
        let Some(problem) = corpus.problem(id) else {
            summary.skipped.push(id.to_string());
            continue;
        };
        match problem.source {
            Source::Synthetic => match corpus.synthetic_pair(id) {
                Some((fast, slow)) => out.push(Triplet {
                    problem_id: id.to_string(),
                    statement: problem.statement.clone(),
                    fast: fast.clone(),
                    slow: slow.clone(),
                    slow_is_incorrect: false,
                    has_runtimes: false,
                }),
                None => summary.skipped.push(id.to_string()),
            },
            Source::Contest => {
                let ranked = corpus.ranked_correct(id);
                if ranked.len() < 2 {
                    summary.skipped.push(id.to_string());
                    continue;
                }
                let slow_count = ceil_percent(ranked.len(), cfg.slow_percent);
                for _ in 0..cfg.per_problem.max(1) {
                    let (f, s) = draw_pair(&mut rng, ranked.len(), cfg.fast_pool, slow_count);
                    out.push(Triplet {
                        problem_id: id.to_string(),
                        statement: problem.statement.clone(),
                        fast: ranked[f].clone(),
                        slow: ranked[s].clone(),
                        slow_is_incorrect: false,
                        has_runtimes: true,
                    });
                }
            }
        }
    }

    let candidates: Vec<usize> = out
        .iter()
        .enumerate()
        .filter(|(_, t)| !corpus.incorrect_of(&t.problem_id).is_empty())
        .map(|(i, _)| i)
        .collect();
    let n_inject = (out.len() * cfg.incorrect_percent / 100).min(candidates.len());
    let mut chosen: Vec<usize> = sample(&mut rng, candidates.len(), n_inject).into_iter().map(|i| candidates[i]).collect();
    chosen.sort_unstable();
    for i in chosen {
        let wrong = corpus.incorrect_of(&out[i].problem_id);
        let pick = wrong[rng.gen_range(0..wrong.len())].clone();
        let t = &mut out[i];
        t.slow = pick;
        t.slow_is_incorrect = true;
        t.has_runtimes = false;
    }
    summary.emitted = out.len();
    summary.injected = n_inject;
    (out, summary)
}
