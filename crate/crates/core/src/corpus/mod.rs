//! Problem/solution corpus: loading, splitting, triplets, SFT prompts and
//! synthetic pair generation.

mod io;
mod prompts;
mod split;
mod synth;
mod toy;
mod triplets;
mod types;

pub use io::{corpus_to_jsonl, load_corpus, parse_corpus, save_corpus};
pub use prompts::{
    build_sft_prompts, extract_code, generate_instruction, optimize_instruction, render_prompt, render_response, PromptConfig,
    PromptKind, PromptRecord, FENCE, INSTRUCTION_HEADER, RESPONSE_HEADER,
};
pub use split::{split_dataset, Split, SplitAssignment, SplitConfig};
pub use synth::{
    add_synthetic, generate_sample, parse_synth_response, random_snippet, synth_request, FixtureProvider, GenerationRequest,
    HttpProvider, SynthProvider, SynthSample, MAX_SNIPPET_LINES,
};
pub use toy::{toy_corpus, ToyConfig, ToyTask};
pub use triplets::{build_triplets, Triplet, TripletConfig, TripletSummary};
pub use types::{Corpus, Label, Problem, Record, Solution, Source, TestCase, Variant};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("solution `{submission_id}` references unknown problem `{problem_id}`")]
    Integrity { problem_id: String, submission_id: String },
    #[error("{0}")]
    Sizing(String),
    #[error("{0}")]
    Synth(String),
    #[error("unparseable generation: {0}")]
    SynthParse(String),
    #[error("{0}: {1}")]
    Io(String, String),
}
