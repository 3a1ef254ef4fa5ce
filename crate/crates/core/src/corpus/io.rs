use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::types::{Corpus, Label, Record, Source};
use super::CorpusError;

/// Parses a JSONL corpus. Blank lines are ignored.
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(line).map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
        match record {
            Record::Problem(p) => {
                if !ids.insert(p.id.clone()) {
                    return Err(CorpusError::Invalid { line: line_no, message: format!("duplicate problem id `{}`", p.id) });
                }
                if p.source == Source::Contest && p.tests.is_empty() {
                    return Err(CorpusError::Invalid {
                        line: line_no,
                        message: format!("contest problem `{}` has no test cases", p.id),
                    });
                }
                if p.step_limit == 0 {
                    return Err(CorpusError::Invalid { line: line_no, message: format!("problem `{}` has zero step_limit", p.id) });
                }
                corpus.problems.push(p);
            }
            Record::Solution(s) => {
                if s.runtime.is_some() != (s.label == Label::Correct) {
                    return Err(CorpusError::Invalid {
                        line: line_no,
                        message: format!("solution `{}`: runtime must be present iff label is correct", s.submission_id),
                    });
                }
                corpus.solutions.push(s);
            }
        }
    }
    for s in &corpus.solutions {
        if !ids.contains(&s.problem_id) {
            return Err(CorpusError::Integrity { problem_id: s.problem_id.clone(), submission_id: s.submission_id.clone() });
        }
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io(path.display().to_string(), e.to_string()))?;
    parse_corpus(&text)
}

/// Serialises problems first, then solutions, one JSON object per line.
pub fn corpus_to_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    let records = corpus
        .problems
        .iter()
        .cloned()
        .map(Record::Problem)
        .chain(corpus.solutions.iter().cloned().map(Record::Solution));
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("corpus record serialises"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    fs::write(path, corpus_to_jsonl(corpus)).map_err(|e| CorpusError::Io(path.display().to_string(), e.to_string()))
}
