use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::triplets::{ceil_percent, draw_pair};
use super::types::{Corpus, Source};

pub const INSTRUCTION_HEADER: &str = "### Instruction:\n";
pub const RESPONSE_HEADER: &str = "### Response:\n";
pub const FENCE: &str = "```";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Generate,
    Optimize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub kind: PromptKind,
    pub instruction: String,
    /// Source of a fast solution (unfenced).
    pub response: String,
    pub problem_id: String,
}

impl PromptRecord {
    /// The full training text: prompt then fenced response.
    pub fn render(&self) -> String {
        format!("{}{}", render_prompt(&self.instruction), render_response(&self.response))
    }
}

pub fn render_prompt(instruction: &str) -> String {
    format!("{INSTRUCTION_HEADER}{instruction}\n\n{RESPONSE_HEADER}")
}

pub fn render_response(code: &str) -> String {
    format!("{FENCE}\n{code}\n{FENCE}\n")
}

pub fn generate_instruction(statement: &str) -> String {
    statement.to_string()
}

pub fn optimize_instruction(statement: &str, code: &str) -> String {
    format!("{statement}\nOptimize the following code:\n{FENCE}\n{code}\n{FENCE}")
}

/// Pulls the program out of a model completion: the body of the first
/// fenced block, or everything before a closing fence when the opening one
/// is missing.
pub fn extract_code(completion: &str) -> String {
    let text = completion.trim_start();
    if let Some(rest) = text.strip_prefix(FENCE) {
        let body = rest.split_once('\n').map_or("", |(_, b)| b);
        let end = body.find(FENCE).unwrap_or(body.len());
        return body[..end].trim_end().to_string();
    }
    let end = text.find(FENCE).unwrap_or(text.len());
    text[..end].trim_end().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub fast_pool: usize,
    /// Percentage of slowest correct solutions used as optimize inputs (rounded up).
    pub slow_percent: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self { fast_pool: 5, slow_percent: 33 }
    }
}

/// Generate and optimize prompts for the problems in `ids` (all if empty).
/// Returns the records and the ids of problems that yielded none.
pub fn build_sft_prompts(corpus: &Corpus, ids: &[String], seed: u64, cfg: &PromptConfig) -> (Vec<PromptRecord>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    let mut ids: Vec<&str> = if ids.is_empty() {
        corpus.problems.iter().map(|p| p.id.as_str()).collect()
    } else {
        ids.iter().map(String::as_str).collect()
    };
    ids.sort_unstable();
    for id in ids {
        let Some(problem) = corpus.problem(id) else {
            skipped.push(id.to_string());
            continue;
        };
        let record = |kind, instruction, response: &str| PromptRecord {
            kind,
            instruction,
            response: response.to_string(),
            problem_id: id.to_string(),
        };
        match problem.source {
            Source::Synthetic => match corpus.synthetic_pair(id) {
                Some((fast, slow)) => {
                    out.push(record(PromptKind::Generate, generate_instruction(&problem.statement), &fast.code));
                    out.push(record(PromptKind::Optimize, optimize_instruction(&problem.statement, &slow.code), &fast.code));
                }
                None => skipped.push(id.to_string()),
            },
            Source::Contest => {
                let ranked = corpus.ranked_correct(id);
                if ranked.is_empty() {
                    skipped.push(id.to_string());
                    continue;
                }
                let g = rng.gen_range(0..cfg.fast_pool.max(1).min(ranked.len()));
                out.push(record(PromptKind::Generate, generate_instruction(&problem.statement), &ranked[g].code));
                if ranked.len() >= 2 {
                    let slow_count = ceil_percent(ranked.len(), cfg.slow_percent);
                    let (f, s) = draw_pair(&mut rng, ranked.len(), cfg.fast_pool, slow_count);
                    out.push(record(
                        PromptKind::Optimize,
                        optimize_instruction(&problem.statement, &ranked[s].code),
                        &ranked[f].code,
                    ));
                }
            }
        }
    }
    (out, skipped)
}
