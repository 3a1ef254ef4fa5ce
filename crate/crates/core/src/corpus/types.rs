use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Contest,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    #[serde(default)]
    pub tests: Vec<TestCase>,
    /// Interpreter steps for the minilang backend, milliseconds for process backends.
    pub step_limit: u64,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_runtime: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Correct,
    Incorrect,
    Unverified,
}

/// Which side of a synthetic fast/slow pair a solution is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fast,
    Slow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub problem_id: String,
    pub submission_id: String,
    pub code: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
}

impl Solution {
    pub fn is_correct(&self) -> bool {
        self.label == Label::Correct && self.runtime.is_some()
    }
}

/// One JSONL line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Problem(Problem),
    Solution(Solution),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub problems: Vec<Problem>,
    pub solutions: Vec<Solution>,
}

impl Corpus {
    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }

    pub fn problem_index(&self) -> HashMap<&str, &Problem> {
        self.problems.iter().map(|p| (p.id.as_str(), p)).collect()
    }

    /// Solutions grouped by problem id, each group in file order.
    pub fn solutions_by_problem(&self) -> BTreeMap<&str, Vec<&Solution>> {
        let mut map: BTreeMap<&str, Vec<&Solution>> = BTreeMap::new();
        for s in &self.solutions {
            map.entry(s.problem_id.as_str()).or_default().push(s);
        }
        map
    }

    pub fn solutions_of<'a>(&'a self, id: &str) -> Vec<&'a Solution> {
        self.solutions.iter().filter(|s| s.problem_id == id).collect()
    }

    /// Correct solutions of `id`, fastest first; ties broken by submission id.
    pub fn ranked_correct(&self, id: &str) -> Vec<&Solution> {
        let mut v: Vec<&Solution> = self.solutions_of(id).into_iter().filter(|s| s.is_correct()).collect();
        v.sort_by(|a, b| {
            a.runtime
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.runtime.unwrap_or(f64::INFINITY))
                .then_with(|| a.submission_id.cmp(&b.submission_id))
        });
        v
    }

    pub fn incorrect_of(&self, id: &str) -> Vec<&Solution> {
        let mut v: Vec<&Solution> = self.solutions_of(id).into_iter().filter(|s| s.label == Label::Incorrect).collect();
        v.sort_by(|a, b| a.submission_id.cmp(&b.submission_id));
        v
    }

    /// The stored (fast, slow) pair of a synthetic problem.
    pub fn synthetic_pair(&self, id: &str) -> Option<(&Solution, &Solution)> {
        let fast = self.solutions_of(id).into_iter().find(|s| s.variant == Some(Variant::Fast))?;
        let slow = self.solutions_of(id).into_iter().find(|s| s.variant == Some(Variant::Slow))?;
        Some((fast, slow))
    }

    /// A copy restricted to the given problem ids.
    pub fn subset(&self, ids: &[String]) -> Corpus {
        let keep: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        Corpus {
            problems: self.problems.iter().filter(|p| keep.contains(p.id.as_str())).cloned().collect(),
            solutions: self.solutions.iter().filter(|s| keep.contains(s.problem_id.as_str())).cloned().collect(),
        }
    }
}
