use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::align::PpoConfig;
use crate::corpus::{PromptConfig, SplitConfig, TripletConfig};
use crate::executor::Backend;
use crate::model::{AdamConfig, ModelConfig, SampleConfig, Tokenizer};
use crate::reward::MarginConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Input corpus (JSONL). Relative paths resolve against the config file.
    pub corpus: PathBuf,
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { corpus: PathBuf::from("data/toy_corpus.jsonl"), workdir: PathBuf::from("work") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    pub context: usize,
    pub init_std: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { layers: 4, heads: 4, width: 128, context: 512, init_std: 0.02 }
    }
}

impl ModelSection {
    pub fn model_config(&self, tokenizer: &Tokenizer) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            heads: self.heads,
            width: self.width,
            context: self.context,
            vocab_size: tokenizer.vocab_size(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub split: SplitConfig,
    pub triplets: TripletConfig,
    pub prompts: PromptConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// Recorded `{prompt, response}` JSONL replayed instead of calling `endpoint`.
    pub fixture: Option<PathBuf>,
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    pub credential_env: String,
    pub count: usize,
    pub attempts: usize,
    pub max_snippet_lines: usize,
    pub step_limit: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            fixture: None,
            endpoint: None,
            credential_env: "PERFALIGN_SYNTH_TOKEN".to_string(),
            count: 10,
            attempts: 3,
            max_snippet_lines: 15,
            step_limit: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftSection {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_steps: Option<usize>,
}

impl Default for SftSection {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), epochs: 3, batch_size: 8, max_steps: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub margin: MarginConfig,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), epochs: 1, batch_size: 8, shuffle: true, margin: MarginConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlpfSection {
    pub ppo: PpoConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub samples_per_prompt: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: usize,
    pub max_new_tokens: usize,
}

impl Default for RlpfSection {
    fn default() -> Self {
        let s = SampleConfig::rollout(0);
        Self {
            ppo: PpoConfig::default(),
            epochs: 4,
            batch_size: 8,
            samples_per_prompt: 1,
            temperature: s.temperature,
            top_p: s.top_p,
            top_k: s.top_k,
            max_new_tokens: s.max_new_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpaSection {
    pub adam: AdamConfig,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub margin: MarginConfig,
}

impl Default for DpaSection {
    fn default() -> Self {
        Self {
            adam: AdamConfig::with_lr(1e-7),
            beta: 0.6,
            epochs: 1,
            batch_size: 8,
            shuffle: true,
            margin: MarginConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub samples: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: usize,
    pub max_new_tokens: usize,
    pub ks: Vec<usize>,
    /// Checkpoints to evaluate, by training stage.
    pub models: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let s = SampleConfig::eval(0);
        Self {
            samples: 20,
            temperature: s.temperature,
            top_p: s.top_p,
            top_k: s.top_k,
            max_new_tokens: s.max_new_tokens,
            ks: vec![1],
            models: vec!["sft".to_string(), "rlpf".to_string(), "dpa".to_string()],
        }
    }
}

/// Everything a pipeline run needs; one TOML file with a section per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    pub paths: Paths,
    pub backend: Backend,
    pub model: ModelSection,
    pub data: DataSection,
    pub synth: SynthSection,
    pub sft: SftSection,
    pub reward: RewardSection,
    pub rlpf: RlpfSection,
    pub dpa: DpaSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            paths: Paths::default(),
            backend: Backend::Minilang,
            model: ModelSection::default(),
            data: DataSection::default(),
            synth: SynthSection::default(),
            sft: SftSection::default(),
            reward: RewardSection::default(),
            rlpf: RlpfSection::default(),
            dpa: DpaSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// Applies `key.path=value` to a TOML tree. The value is parsed as a TOML
/// literal when possible and taken as a plain string otherwise.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), PipelineError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("override key `{key}` is malformed")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text, applies overrides, then validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.workdir);
        if let Some(f) = self.synth.fixture.as_mut() {
            fix(f);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut problems = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        need(self.workers >= 1, "workers: must be at least 1".into());
        let m = &self.model;
        for (name, v) in [("layers", m.layers), ("heads", m.heads), ("width", m.width), ("context", m.context)] {
            need(v > 0, format!("model.{name}: must be positive"));
        }
        need(m.heads == 0 || m.width.is_multiple_of(m.heads), format!("model.width: {} is not divisible by model.heads {}", m.width, m.heads));
        need(m.init_std > 0.0, "model.init_std: must be positive".into());
        let d = &self.data;
        need(d.split.sft_percent <= 100, "data.split.sft_percent: must be at most 100".into());
        need(d.split.reward_percent <= 100, "data.split.reward_percent: must be at most 100".into());
        need(d.split.eval_percent <= 100, "data.split.eval_percent: must be at most 100".into());
        need(d.triplets.fast_pool >= 1, "data.triplets.fast_pool: must be at least 1".into());
        need(
            (1..=100).contains(&d.triplets.slow_percent),
            "data.triplets.slow_percent: must be in 1..=100".into(),
        );
        need(d.triplets.incorrect_percent <= 100, "data.triplets.incorrect_percent: must be at most 100".into());
        need(d.triplets.per_problem >= 1, "data.triplets.per_problem: must be at least 1".into());
        need(d.prompts.fast_pool >= 1, "data.prompts.fast_pool: must be at least 1".into());
        need((1..=100).contains(&d.prompts.slow_percent), "data.prompts.slow_percent: must be in 1..=100".into());
        for (name, adam) in [("sft", &self.sft.adam), ("reward", &self.reward.adam), ("dpa", &self.dpa.adam), ("rlpf.ppo", &self.rlpf.ppo.adam)] {
            need(adam.lr > 0.0 && adam.lr.is_finite(), format!("{name}.adam.lr: must be positive, got {}", adam.lr));
            need((0.0..1.0).contains(&adam.beta1), format!("{name}.adam.beta1: must be in [0, 1)"));
            need((0.0..1.0).contains(&adam.beta2), format!("{name}.adam.beta2: must be in [0, 1)"));
        }
        for (name, b) in [
            ("sft", self.sft.batch_size),
            ("reward", self.reward.batch_size),
            ("dpa", self.dpa.batch_size),
            ("rlpf", self.rlpf.batch_size),
        ] {
            need(b >= 1, format!("{name}.batch_size: must be at least 1"));
        }
        need(self.reward.margin.lambda_max >= 0.0, "reward.margin.lambda_max: must be >= 0".into());
        need(self.dpa.margin.lambda_max >= 0.0, "dpa.margin.lambda_max: must be >= 0".into());
        need(self.dpa.beta >= 0.0, "dpa.beta: must be >= 0".into());
        let ppo = self.rlpf.ppo.validate();
        need(ppo.is_ok(), format!("rlpf.ppo: {}", ppo.err().map(|e| e.to_string()).unwrap_or_default()));
        need(self.rlpf.samples_per_prompt >= 1, "rlpf.samples_per_prompt: must be at least 1".into());
        let rollout = self.rollout_sampling().validate();
        need(rollout.is_ok(), format!("rlpf: {}", rollout.err().map(|e| e.to_string()).unwrap_or_default()));
        need(self.eval.samples >= 1, "eval.samples: must be at least 1".into());
        let sampling = self.eval_sampling().validate();
        need(sampling.is_ok(), format!("eval: {}", sampling.err().map(|e| e.to_string()).unwrap_or_default()));
        need(
            self.eval.ks.iter().all(|&k| k >= 1 && k <= self.eval.samples),
            format!("eval.ks: every k must be in 1..={}", self.eval.samples),
        );
        for name in &self.eval.models {
            need(
                ["sft", "rlpf", "dpa"].contains(&name.as_str()),
                format!("eval.models: unknown model `{name}` (expected sft, rlpf or dpa)"),
            );
        }
        need(self.synth.attempts >= 1, "synth.attempts: must be at least 1".into());
        if problems.is_empty() {
            Ok(())
        } else {
            Err(config_err(problems.join("; ")))
        }
    }

    pub fn rollout_sampling(&self) -> SampleConfig {
        SampleConfig {
            temperature: self.rlpf.temperature,
            top_p: self.rlpf.top_p,
            top_k: self.rlpf.top_k,
            max_new_tokens: self.rlpf.max_new_tokens,
            seed: self.seed,
        }
    }

    pub fn eval_sampling(&self) -> SampleConfig {
        SampleConfig {
            temperature: self.eval.temperature,
            top_p: self.eval.top_p,
            top_k: self.eval.top_k,
            max_new_tokens: self.eval.max_new_tokens,
            seed: self.seed,
        }
    }
}
