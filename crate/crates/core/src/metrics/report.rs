use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{pass_at_k, speedup_n_at_k, MetricError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub problem_id: String,
    /// 1-based sample index.
    pub index: usize,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<f64>,
    pub processors: u32,
}

/// Samples of one problem together with its baseline runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEval {
    pub problem_id: String,
    pub baseline: f64,
    pub samples: Vec<SampleResult>,
}

impl ProblemEval {
    pub fn correct_count(&self) -> usize {
        self.samples.iter().filter(|s| s.correct).count()
    }

    fn pairs(&self) -> Vec<(bool, f64)> {
        self.samples.iter().map(|s| (s.correct, s.runtime.unwrap_or(0.0))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub k: usize,
    pub pass_at_k: f64,
    pub speedup_at_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetrics {
    pub problem_id: String,
    pub correct: usize,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples_per_problem: usize,
    pub problems: Vec<ProblemEval>,
    pub per_problem: Vec<ProblemMetrics>,
    /// Means over problems, one row per requested k.
    pub metrics: Vec<MetricRow>,
}

impl EvalReport {
    pub fn row(&self, k: usize) -> Option<&MetricRow> {
        self.metrics.iter().find(|r| r.k == k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,pass_at_k,speedup_at_k\n");
        for r in &self.metrics {
            let _ = writeln!(out, "{},{},{}", r.k, r.pass_at_k, r.speedup_at_k);
        }
        out
    }
}

/// Per-k means over problems of pass@k and speedup@k.
pub fn aggregate(problems: Vec<ProblemEval>, ks: &[usize]) -> Result<EvalReport, MetricError> {
    let mut n_samples = None;
    for p in &problems {
        let n = p.samples.len();
        if n == 0 {
            return Err(MetricError::Inconsistent(format!("problem `{}` has no samples", p.problem_id)));
        }
        let mut idx: Vec<usize> = p.samples.iter().map(|s| s.index).collect();
        idx.sort_unstable();
        if idx != (1..=n).collect::<Vec<_>>() || p.samples.iter().any(|s| s.problem_id != p.problem_id) {
            return Err(MetricError::Inconsistent(format!("problem `{}` sample indices are not 1..={n}", p.problem_id)));
        }
        if *n_samples.get_or_insert(n) != n {
            return Err(MetricError::Inconsistent(format!(
                "problem `{}` has {n} samples, others have {}",
                p.problem_id,
                n_samples.unwrap_or_default()
            )));
        }
    }
    let mut per_problem = Vec::with_capacity(problems.len());
    let mut sums: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for p in &problems {
        let mut rows = Vec::with_capacity(ks.len());
        for &k in ks {
            let pass: f64 = pass_at_k(p.samples.len(), p.correct_count(), k)?;
            let speed: f64 = speedup_n_at_k(&p.pairs(), p.baseline, k)?;
            let e = sums.entry(k).or_default();
            e.0 += pass;
            e.1 += speed;
            rows.push(MetricRow { k, pass_at_k: pass, speedup_at_k: speed });
        }
        per_problem.push(ProblemMetrics { problem_id: p.problem_id.clone(), correct: p.correct_count(), rows });
    }
    let count = problems.len().max(1) as f64;
    let metrics = ks
        .iter()
        .map(|&k| {
            let (a, b) = sums.get(&k).copied().unwrap_or_default();
            MetricRow { k, pass_at_k: a / count, speedup_at_k: b / count }
        })
        .collect();
    Ok(EvalReport { samples_per_problem: n_samples.unwrap_or(0), problems, per_problem, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(id: &str, correct: &[bool]) -> ProblemEval {
        ProblemEval {
            problem_id: id.into(),
            baseline: 10.0,
            samples: correct
                .iter()
                .enumerate()
                .map(|(i, &c)| SampleResult {
                    problem_id: id.into(),
                    index: i + 1,
                    correct: c,
                    runtime: c.then_some(5.0),
                    processors: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn mean_over_problems() {
        let a = problem("a", &[true, false, false, false, false]);
        let b = problem("b", &[true, true, false, false, false]);
        let r = aggregate(vec![a, b], &[1]).unwrap();
        assert!((r.row(1).unwrap().pass_at_k - 0.3).abs() < 1e-15);
        assert!((r.row(1).unwrap().speedup_at_k - 0.6).abs() < 1e-15);
        assert!(r.to_csv().starts_with("k,pass_at_k,speedup_at_k\n1,"));
    }

    #[test]
    fn empty_k_list_keeps_samples() {
        let r = aggregate(vec![problem("a", &[true, false])], &[]).unwrap();
        assert!(r.metrics.is_empty());
        assert_eq!(r.problems[0].samples.len(), 2);
    }

    #[test]
    fn inconsistent_n_rejected() {
        let err = aggregate(vec![problem("a", &[true]), problem("b", &[true, false])], &[1]);
        assert!(matches!(err, Err(MetricError::Inconsistent(_))));
        let mut p = problem("a", &[true, false]);
        p.samples[1].index = 1;
        assert!(aggregate(vec![p], &[1]).is_err());
    }
}
