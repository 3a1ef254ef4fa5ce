//! Synthetic fast/slow pair generation from seed snippets.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{Corpus, Label, Problem, Solution, Source, Variant};
use super::CorpusError;

pub const MAX_SNIPPET_LINES: usize = 15;

const TEMPLATE: &str = "Below is a code snippet.\n\
\n\
```\n{snippet}\n```\n\
\n\
Write a new programming problem inspired by the snippet, a fast solution to it, \
and a slow but correct solution to it. Answer with exactly three fenced blocks \
labelled statement, fast and slow:\n\
\n\
```statement\n<problem statement>\n```\n\
```fast\n<fast solution>\n```\n\
```slow\n<slow solution>\n```\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSample {
    pub statement: String,
    pub fast: String,
    pub slow: String,
}

pub fn synth_request(snippet: &str) -> Result<GenerationRequest, CorpusError> {
    let lines = snippet.lines().count();
    if lines == 0 || lines > MAX_SNIPPET_LINES {
        return Err(CorpusError::Synth(format!("snippet has {lines} lines; expected 1 to {MAX_SNIPPET_LINES}")));
    }
    Ok(GenerationRequest { prompt: TEMPLATE.replacen("{snippet}", snippet.trim_end_matches('\n'), 1) })
}

/// Body of the first block fenced as ```` ```label ````.
fn fenced(text: &str, label: &str) -> Option<String> {
    let open = format!("```{label}\n");
    let start = text.find(&open)? + open.len();
    let len = text[start..].find("```")?;
    let body = text[start..start + len].trim_end_matches('\n');
    (!body.trim().is_empty()).then(|| body.to_string())
}

pub fn parse_synth_response(text: &str) -> Result<SynthSample, CorpusError> {
    let part = |label: &str| {
        fenced(text, label).ok_or_else(|| CorpusError::SynthParse(format!("response has no `{label}` block")))
    };
    Ok(SynthSample { statement: part("statement")?, fast: part("fast")?, slow: part("slow")? })
}

/// A random run of 1..=`max_lines` consecutive lines of `source`.
pub fn random_snippet<R: Rng>(source: &str, max_lines: usize, rng: &mut R) -> Option<String> {
    let lines: Vec<&str> = source.lines().collect();
    if lines.is_empty() {
        return None;
    }
    let len = rng.gen_range(1..=max_lines.clamp(1, MAX_SNIPPET_LINES).min(lines.len()));
    let start = rng.gen_range(0..=lines.len() - len);
    Some(lines[start..start + len].join("\n"))
}

/// Appends a generated sample to `corpus` as a synthetic problem with a stored fast/slow pair.
pub fn add_synthetic(corpus: &mut Corpus, id: &str, sample: &SynthSample, step_limit: u64) {
    corpus.problems.push(Problem {
        id: id.to_string(),
        statement: sample.statement.clone(),
        tests: Vec::new(),
        step_limit,
        source: Source::Synthetic,
        median_runtime: None,
    });
    for (code, variant, tag) in [(&sample.fast, Variant::Fast, "fast"), (&sample.slow, Variant::Slow, "slow")] {
        corpus.solutions.push(Solution {
            problem_id: id.to_string(),
            submission_id: format!("{id}-{tag}"),
            code: code.clone(),
            label: Label::Unverified,
            runtime: None,
            variant: Some(variant),
        });
    }
}

pub trait SynthProvider {
    fn complete(&self, request: &GenerationRequest) -> Result<String, CorpusError>;
}

/// Replays recorded responses keyed by the exact request prompt.
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    responses: HashMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct FixtureLine {
    prompt: String,
    response: String,
}

impl FixtureProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, request: &GenerationRequest, response: impl Into<String>) {
        self.responses.insert(request.prompt.clone(), response.into());
    }

    /// JSONL of `{"prompt": ..., "response": ...}` objects.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io(path.display().to_string(), e.to_string()))?;
        let mut out = Self::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: FixtureLine =
                serde_json::from_str(line).map_err(|e| CorpusError::Parse { line: i + 1, message: e.to_string() })?;
            out.responses.insert(rec.prompt, rec.response);
        }
        Ok(out)
    }
}

impl SynthProvider for FixtureProvider {
    fn complete(&self, request: &GenerationRequest) -> Result<String, CorpusError> {
        self.responses
            .get(&request.prompt)
            .cloned()
            .ok_or_else(|| CorpusError::Synth("no recorded response for this request".to_string()))
    }
}

/// POSTs `{"prompt": ...}` to an endpoint and reads `{"text": ...}` back.
/// The bearer token comes from the named environment variable.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    pub endpoint: String,
    pub credential_env: String,
}

#[derive(Deserialize)]
struct HttpReply {
    text: String,
}

impl SynthProvider for HttpProvider {
    fn complete(&self, request: &GenerationRequest) -> Result<String, CorpusError> {
        let token = std::env::var(&self.credential_env)
            .map_err(|_| CorpusError::Synth(format!("environment variable {} is not set", self.credential_env)))?;
        let mut reply = ureq::post(&self.endpoint)
            .header("Authorization", &format!("Bearer {token}"))
            .send_json(request)
            .map_err(|e| CorpusError::Synth(format!("request to {} failed: {e}", self.endpoint)))?;
        let body: HttpReply = reply
            .body_mut()
            .read_json()
            .map_err(|e| CorpusError::Synth(format!("bad reply from {}: {e}", self.endpoint)))?;
        Ok(body.text)
    }
}

/// Requests one sample, retrying unparseable replies up to `attempts` times.
pub fn generate_sample(provider: &dyn SynthProvider, snippet: &str, attempts: usize) -> Result<SynthSample, CorpusError> {
    let request = synth_request(snippet)?;
    let mut last = CorpusError::Synth("no attempts made".to_string());
    for _ in 0..attempts.max(1) {
        match parse_synth_response(&provider.complete(&request)?) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(last)
}
