//! Stage orchestration: each stage reads artifacts from earlier stages under
//! the work directory and writes its own outputs plus a `manifest.json`
//! to `<workdir>/<stage>/`.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::json;

use crate::align::{dpa_accuracy, dpa_train, rlpf_train, DpaConfig, RlpfConfig};
use crate::corpus::{
    add_synthetic, build_sft_prompts, build_triplets, generate_sample, load_corpus, random_snippet, save_corpus,
    split_dataset, Corpus, FixtureProvider, HttpProvider, PromptRecord, Source, Split, SplitAssignment,
    SynthProvider, Triplet,
};
use crate::executor::label_corpus;
use crate::metrics::{aggregate, sample_tasks, EvalReport, EvalTask, MetricRow, ProblemEval};
use crate::model::{
    completion_perplexity, encode_record, sft_train, Checkpoint, InitOptions, SftConfig, Tokenizer,
};
use crate::reward::{reward_accuracy, train_reward_model, RewardConfig, RewardModel};

pub use config::{
    apply_override, DataSection, DpaSection, EvalSection, ModelSection, Paths, PipelineConfig, RewardSection,
    RlpfSection, SftSection, SynthSection,
};
pub use manifest::{hash_entry, sha256_file, FileHash, Manifest, TOOL_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing prerequisite {path}: run `{stage}` first")]
    Missing { stage: Stage, path: PathBuf },
    #[error("{0}")]
    Stage(String),
}

impl PipelineError {
    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        PipelineError::Stage(format!("{}: {e}", path.display()))
    }

    /// Process exit code: 1 for configuration problems, 2 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn stage_err(e: impl fmt::Display) -> PipelineError {
    PipelineError::Stage(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    DataLabel,
    DataSplit,
    DataTriplets,
    DataSynth,
    TrainSft,
    TrainReward,
    TrainRlpf,
    TrainDpa,
    EvalGenerate,
    EvalOptimize,
    EvalReport,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::DataLabel,
        Stage::DataSplit,
        Stage::DataTriplets,
        Stage::DataSynth,
        Stage::TrainSft,
        Stage::TrainReward,
        Stage::TrainRlpf,
        Stage::TrainDpa,
        Stage::EvalGenerate,
        Stage::EvalOptimize,
        Stage::EvalReport,
    ];

    /// Stages of a full offline run, in order. Synthetic generation needs a
    /// provider and is run separately.
    pub const OFFLINE: [Stage; 10] = [
        Stage::DataLabel,
        Stage::DataSplit,
        Stage::DataTriplets,
        Stage::TrainSft,
        Stage::TrainReward,
        Stage::TrainRlpf,
        Stage::TrainDpa,
        Stage::EvalGenerate,
        Stage::EvalOptimize,
        Stage::EvalReport,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::DataLabel => "data_label",
            Stage::DataSplit => "data_split",
            Stage::DataTriplets => "data_triplets",
            Stage::DataSynth => "data_synth",
            Stage::TrainSft => "train_sft",
            Stage::TrainReward => "train_reward",
            Stage::TrainRlpf => "train_rlpf",
            Stage::TrainDpa => "train_dpa",
            Stage::EvalGenerate => "eval_generate",
            Stage::EvalOptimize => "eval_optimize",
            Stage::EvalReport => "eval_report",
        }
    }

    pub fn command(self) -> String {
        self.dir_name().replace('_', " ")
    }

    fn model_stage(name: &str) -> Option<Stage> {
        match name {
            "sft" => Some(Stage::TrainSft),
            "rlpf" => Some(Stage::TrainRlpf),
            "dpa" => Some(Stage::TrainDpa),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.command())
    }
}

pub const MODEL_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.json";

/// Artifact layout of one work directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.dir_name())
    }

    pub fn path(&self, stage: Stage, file: &str) -> PathBuf {
        self.dir(stage).join(file)
    }

    /// An earlier stage's output, or an error naming it.
    pub fn require(&self, stage: Stage, file: &str) -> Result<PathBuf, PipelineError> {
        let p = self.path(stage, file);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::Missing { stage, path: p })
        }
    }

    /// The corpus downstream stages consume: synthetic-augmented if present.
    pub fn current_corpus(&self) -> Result<PathBuf, PipelineError> {
        let synth = self.path(Stage::DataSynth, "corpus.jsonl");
        if synth.is_file() {
            return Ok(synth);
        }
        self.require(Stage::DataLabel, "corpus.jsonl")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.path(Stage::EvalReport, METRICS_FILE)
    }
}

struct StageRun<'a> {
    cfg: &'a PipelineConfig,
    ws: Workspace,
    stage: Stage,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> StageRun<'a> {
    fn new(cfg: &'a PipelineConfig, stage: Stage) -> Result<Self, PipelineError> {
        let ws = Workspace::new(&cfg.paths.workdir);
        let dir = ws.dir(stage);
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        Ok(Self { cfg, ws, stage, inputs: Vec::new(), outputs: Vec::new() })
    }

    fn input(&mut self, path: PathBuf) -> PathBuf {
        self.inputs.push(path.clone());
        path
    }

    fn require(&mut self, stage: Stage, file: &str) -> Result<PathBuf, PipelineError> {
        let p = self.ws.require(stage, file)?;
        Ok(self.input(p))
    }

    fn write(&mut self, file: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let p = self.ws.path(self.stage, file);
        std::fs::write(&p, bytes).map_err(|e| PipelineError::io(&p, e))?;
        self.outputs.push(p);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).map_err(stage_err)?;
        text.push('\n');
        self.write(file, text.as_bytes())
    }

    fn write_jsonl<T: Serialize>(&mut self, file: &str, rows: &[T]) -> Result<(), PipelineError> {
        let mut text = String::new();
        for r in rows {
            text.push_str(&serde_json::to_string(r).map_err(stage_err)?);
            text.push('\n');
        }
        self.write(file, text.as_bytes())
    }

    fn write_csv<T: Serialize>(&mut self, file: &str, rows: &[T]) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(stage_err)?;
        }
        let bytes = w.into_inner().map_err(stage_err)?;
        self.write(file, &bytes)
    }

    fn write_corpus(&mut self, corpus: &Corpus) -> Result<(), PipelineError> {
        let p = self.ws.path(self.stage, "corpus.jsonl");
        save_corpus(&p, corpus).map_err(stage_err)?;
        self.outputs.push(p);
        Ok(())
    }

    fn write_model<S: crate::Scalar>(&mut self, ckpt: &Checkpoint<S>) -> Result<(), PipelineError> {
        let p = self.ws.path(self.stage, MODEL_FILE);
        ckpt.save(&p).map_err(stage_err)?;
        self.outputs.push(p);
        Ok(())
    }

    fn finish(self, summary: serde_json::Value) -> Result<serde_json::Value, PipelineError> {
        let hash_all = |paths: &[PathBuf]| -> Result<Vec<FileHash>, PipelineError> {
            paths.iter().map(|p| hash_entry(&self.ws.root, p)).collect()
        };
        let manifest = Manifest {
            stage: self.stage.command(),
            tool_version: TOOL_VERSION.to_string(),
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(&self.outputs)?,
            summary: summary.clone(),
        };
        let p = self.ws.path(self.stage, "manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).map_err(stage_err)?;
        text.push('\n');
        std::fs::write(&p, text).map_err(|e| PipelineError::io(&p, e))?;
        Ok(summary)
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| PipelineError::io(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn load_model(path: &Path) -> Result<Checkpoint<f64>, PipelineError> {
    Checkpoint::load(path).map_err(stage_err)
}

/// Runs one stage and returns its summary (also stored in its manifest).
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<serde_json::Value, PipelineError> {
    cfg.validate()?;
    log::info!("running {stage}");
    let mut run = StageRun::new(cfg, stage)?;
    let summary = match stage {
        Stage::DataLabel => data_label(&mut run)?,
        Stage::DataSplit => data_split(&mut run)?,
        Stage::DataTriplets => data_triplets(&mut run)?,
        Stage::DataSynth => data_synth(&mut run)?,
        Stage::TrainSft => train_sft(&mut run)?,
        Stage::TrainReward => train_reward(&mut run)?,
        Stage::TrainRlpf => train_rlpf(&mut run)?,
        Stage::TrainDpa => train_dpa(&mut run)?,
        Stage::EvalGenerate => eval_samples(&mut run, false)?,
        Stage::EvalOptimize => eval_samples(&mut run, true)?,
        Stage::EvalReport => eval_report(&mut run)?,
    };
    run.finish(summary)
}

/// Runs every offline stage in order and returns the final metrics file contents.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<String, PipelineError> {
    for stage in Stage::OFFLINE {
        run_stage(cfg, stage)?;
    }
    let p = Workspace::new(&cfg.paths.workdir).metrics_path();
    std::fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))
}

fn data_label(run: &mut StageRun) -> Result<serde_json::Value, PipelineError> {
    let path = run.cfg.paths.corpus.clone();
    if !path.is_file() {
        return Err(PipelineError::Config(format!("paths.corpus: {} does not exist", path.display())));
    }
    let corpus = load_corpus(&run.input(path)).map_err(stage_err)?;
    let (labeled, report) = label_corpus(&corpus, &run.cfg.backend, run.cfg.workers);
    run.write_corpus(&labeled)?;
    run.write_json("label_report.json", &report)?;
    Ok(json!({
        "problems": labeled.problems.len(),
        "solutions": labeled.solutions.len(),
        "relabeled": report.relabeled().count(),
    }))
}

fn data_split(run: &mut StageRun) -> Result<serde_json::Value, PipelineError> {
    let path = run.ws.current_corpus()?;
    let corpus = load_corpus(&run.input(path)).map_err(stage_err)?;
    let split = split_dataset(&corpus, run.cfg.seed, &run.cfg.data.split).map_err(stage_err)?;
    run.write_json("split.json", &split)?;
    let counts: BTreeMap<String, usize> = [Split::Sft, Split::Reward, Split::RlDpa, Split::HeldOut]
        .into_iter()
        .map(|s| (format!("{s:?}"), split.count(s)))
        .collect();
    Ok(json!({ "counts": counts, "eval": split.eval.len() }))
}

fn load_split(run: &mut StageRun) -> Result<(Corpus, SplitAssignment), PipelineError> {
    let corpus_path = run.ws.current_corpus()?;
    let corpus = load_corpus(&run.input(corpus_path)).map_err(stage_err)?;
    let split_path = run.require(Stage::DataSplit, "split.json")?;
    Ok((corpus, read_json(&split_path)?))
}

fn data_triplets(run: &mut StageRun) -> Result<serde_json::Value, PipelineError> {
    let (corpus, split) = load_split(run)?;
    let data = run.cfg.data;
    let seed = run.cfg.seed;
    let mut summary = serde_json::Map::new();
    for (name, eval) in [("sft_prompts", false), ("sft_eval_prompts", true)] {
        let (records, skipped) = build_sft_prompts(&corpus, &split.ids(Split::Sft, Some(eval)), seed, &data.prompts);
        run.write_jsonl(&format!("{name}.jsonl"), &records)?;
        summary.insert(name.to_string(), json!({ "records": records.len(), "skipped": skipped.len() }));
    }
    for (name, which, eval) in [
        ("reward_triplets", Split::Reward, false),
        ("reward_eval_triplets", Split::Reward, true),
        ("rl_triplets", Split::RlDpa, false),
        ("rl_eval_triplets", Split::RlDpa, true),
    ] {
        let ids = split.ids(which, Some(eval));
        let triplets = if ids.is_empty() { (Vec::new(), Default::default()) } else { build_triplets(&corpus, &ids, seed, &data.triplets) };
        run.write_jsonl(&format!("{name}.jsonl"), &triplets.0)?;
        summary.insert(name.to_string(), serde_json::to_value(&triplets.1).map_err(stage_err)?);
    }
    Ok(serde_json::Value::Object(summary))
}

/// The generation requests `data synth` will issue, in order, for `corpus`.
pub fn synth_snippets(corpus: &Corpus, cfg: &PipelineConfig) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sources: Vec<&str> = corpus.solutions.iter().map(|s| s.code.as_str()).filter(|c| !c.trim().is_empty()).collect();
    if sources.is_empty() {
        return Vec::new();
    }
    (0..cfg.synth.count)
        .filter_map(|_| {
            let src = sources[rng.gen_range(0..sources.len())];
            random_snippet(src, cfg.synth.max_snippet_lines, &mut rng)
        })
        .collect()
}

fn data_synth(run: &mut StageRun) -> Result<serde_json::Value, PipelineError> {
    let path = run.require(Stage::DataLabel, "corpus.jsonl")?;
    let mut corpus = load_corpus(&path).map_err(stage_err)?;
    let synth = &run.cfg.synth;
    let provider: Box<dyn SynthProvider> = match (&synth.fixture, &synth.endpoint) {
        (Some(f), _) => {
            if !f.is_file() {
                return Err(PipelineError::Config(format!("synth.fixture: {} does not exist", f.display())));
            }
            Box::new(FixtureProvider::load(&run.input(f.clone())).map_err(stage_err)?)
        }
        (None, Some(endpoint)) => {
            Box::new(HttpProvider { endpoint: endpoint.clone(), credential_env: synth.credential_env.clone() })
        }
        (None, None) => {
            return Err(PipelineError::Config("synth: set either synth.fixture or synth.endpoint".to_string()));
        }
    };
    let mut added = Vec::new();
    for (i, snippet) in synth_snippets(&corpus, run.cfg).iter().enumerate() {
        let sample = generate_sample(provider.as_ref(), snippet, synth.attempts).map_err(stage_err)?;
        let id = format!("synth-{i:04}");
        if corpus.problem(&id).is_some() {
            return Err(PipelineError::Stage(format!("corpus already contains a problem named {id}")));
        }
        add_synthetic(&mut corpus, &id, &sample, synth.step_limit);
        added.push(id);
    }
    run.write_corpus(&corpus)?;
    Ok(json!({ "added": added.len() }))
}

fn base_model(cfg: &PipelineConfig) -> Result<Checkpoint<f64>, PipelineError> {
    let tok = Tokenizer::new();
    let mc = cfg.model.model_config(&tok);
    Checkpoint::init(mc, tok, InitOptions { std: cfg.model.init_std, zero_head: true }, cfg.seed).map_err(stage_err)
}

fn train_sft(run: &mut StageRun) -> Result<serde_json::Value, PipelineError> {
    let records: Vec<PromptRecord> = read_jsonl(&run.require(Stage::DataTriplets, "sft_prompts.jsonl")?)?;
    let eval: Vec<PromptRecord> = read_jsonl(&run.require(Stage::DataTriplets, "sft_eval_prompts.jsonl")?)?;
    let cfg = run.cfg;
    let base = base_model(cfg)?;
    let sft_cfg = SftConfig {
        adam: cfg.sft.adam,
        epochs: cfg.sft.epochs,
        batch_size: cfg.sft.batch_size,
        max_steps: cfg.sft.max_steps,
        seed: cfg.seed,
        workers: cfg.workers,
    };
    let (model, history) = sft_train(&base, &records, &sft_cfg).map_err(stage_err)?;
    let perplexity = if eval.is_empty() {
        None
    } else {
        let examples = eval.iter().map(|r| encode_record(&model.tokenizer, r)).collect::<Result<Vec<_>, _>>().map_err(stage_err)?;
        Some(completion_perplexity(&model, &examples).map_err(stage_err)?)
    };
    run.write_model(&model)?;
    run.write_csv("log.csv", &history)?;
    Ok(json!({
        "steps": history.len(),
        "final_loss": history.last().map(|h| h.loss),
        "eval_perplexity": perplexity,
    }))
}

fn train_reward(run: &mut StageRun) -> Result<serde_json::Value, PipelineError> {
    let sft = load_model(&run.require(Stage::TrainSft, MODEL_FILE)?)?;
    let train: Vec<Triplet> = read_jsonl(&run.require(Stage::DataTriplets, "reward_triplets.jsonl")?)?;
    let eval: Vec<Triplet> = read_jsonl(&run.require(Stage::DataTriplets, "reward_eval_triplets.jsonl")?)?;
    let c = &run.cfg.reward;
    let rcfg = RewardConfig {
        adam: c.adam,
        epochs: c.epochs,
        batch_size: c.batch_size,
        shuffle: c.shuffle,
        margin: c.margin,
        seed: run.cfg.seed,
        workers: run.cfg.workers,
    };
    let (model, history) = train_reward_model(&sft, &train, &rcfg, &eval).map_err(stage_err)?;
    let accuracy = if eval.is_empty() { None } else { Some(reward_accuracy(&model, &eval).map_err(stage_err)?) };
    run.write_model(&model.ckpt)?;
    run.write_csv("log.csv", &history)?;
    Ok(json!({ "steps": history.len(), "train_triplets": train.len(), "eval_accuracy": accuracy }))
}

fn rl_problems(corpus: &Corpus, split: &SplitAssignment) -> Vec<crate::corpus::Problem> {
    split.ids(Split::RlDpa, Some(false)).iter().filter_map(|id| corpus.problem(id).cloned()).collect()
}

fn train_rlpf(run: &mut StageRun) -> Result<serde_json::Value, PipelineError> {
    let sft = load_model(&run.require(Stage::TrainSft, MODEL_FILE)?)?;
    let rm_ckpt = load_model(&run.require(Stage::TrainReward, MODEL_FILE)?)?;
    let rm = RewardModel::from_checkpoint(rm_ckpt).map_err(stage_err)?;
    let (corpus, split) = load_split(run)?;
    let problems = rl_problems(&corpus, &split);
    let cfg = run.cfg;
    let rcfg = RlpfConfig {
        ppo: cfg.rlpf.ppo,
        epochs: cfg.rlpf.epochs,
        batch_size: cfg.rlpf.batch_size,
        samples_per_prompt: cfg.rlpf.samples_per_prompt,
        sample: cfg.rollout_sampling(),
        seed: cfg.seed,
        workers: cfg.workers,
    };
    let out = rlpf_train(&sft, &problems, &cfg.backend, Some(&rm), &rcfg).map_err(stage_err)?;
    run.write_model(&out.ckpt)?;
    run.write_csv("log.csv", &out.history)?;
    let max_kl = out.history.iter().map(|h| h.kl_estimate).fold(f64::NEG_INFINITY, f64::max);
    Ok(json!({
        "problems": problems.len(),
        "epoch_rewards": out.epoch_rewards(),
        "max_kl": if out.history.is_empty() { None } else { Some(max_kl) },
        "aborted": out.aborted,
    }))
}

fn train_dpa(run: &mut StageRun) -> Result<serde_json::Value, PipelineError> {
    let sft = load_model(&run.require(Stage::TrainSft, MODEL_FILE)?)?;
    let train: Vec<Triplet> = read_jsonl(&run.require(Stage::DataTriplets, "rl_triplets.jsonl")?)?;
    let eval: Vec<Triplet> = read_jsonl(&run.require(Stage::DataTriplets, "rl_eval_triplets.jsonl")?)?;
    let c = &run.cfg.dpa;
    let dcfg = DpaConfig {
        adam: c.adam,
        beta: c.beta,
        epochs: c.epochs,
        batch_size: c.batch_size,
        shuffle: c.shuffle,
        margin: c.margin,
        seed: run.cfg.seed,
        workers: run.cfg.workers,
    };
    let (model, history) = dpa_train(&sft, &train, &dcfg).map_err(stage_err)?;
    let accuracy = if eval.is_empty() { None } else { Some(dpa_accuracy(&model, &sft, &eval).map_err(stage_err)?) };
    run.write_model(&model)?;
    run.write_csv("log.csv", &history)?;
    Ok(json!({ "steps": history.len(), "train_triplets": train.len(), "eval_accuracy": accuracy }))
}

/// Held-out contest problems with a known baseline, as evaluation tasks.
pub fn eval_tasks(corpus: &Corpus, split: &SplitAssignment, optimize: bool) -> Vec<EvalTask> {
    split
        .ids(Split::HeldOut, None)
        .iter()
        .filter_map(|id| corpus.problem(id))
        .filter(|p| p.source == Source::Contest)
        .filter_map(|p| {
            if optimize {
                let slowest = corpus.ranked_correct(&p.id).last().copied()?;
                Some(EvalTask::optimize(p, &slowest.code, slowest.runtime?))
            } else {
                EvalTask::generate(p)
            }
        })
        .collect()
}

fn eval_samples(run: &mut StageRun, optimize: bool) -> Result<serde_json::Value, PipelineError> {
    let (corpus, split) = load_split(run)?;
    let tasks = eval_tasks(&corpus, &split, optimize);
    if tasks.is_empty() {
        return Err(PipelineError::Stage("no held-out contest problems with runtimes to evaluate".to_string()));
    }
    let cfg = run.cfg;
    let mut summary = serde_json::Map::new();
    for name in &cfg.eval.models {
        let stage = Stage::model_stage(name).expect("validated model name");
        let model = load_model(&run.require(stage, MODEL_FILE)?)?;
        let evals = sample_tasks(&model, &tasks, cfg.eval.samples, &cfg.backend, &cfg.eval_sampling(), cfg.workers)
            .map_err(stage_err)?;
        let correct: usize = evals.iter().map(ProblemEval::correct_count).sum();
        run.write_json(&format!("{name}.json"), &evals)?;
        summary.insert(name.clone(), json!({ "problems": evals.len(), "correct_samples": correct }));
    }
    Ok(serde_json::Value::Object(summary))
}

/// Aggregate metrics per evaluation kind (`generate`, `optimize`) and model.
pub type MetricsTable = BTreeMap<String, BTreeMap<String, Vec<MetricRow>>>;

fn eval_report(run: &mut StageRun) -> Result<serde_json::Value, PipelineError> {
    let cfg = run.cfg;
    let mut table: MetricsTable = BTreeMap::new();
    let mut csv_rows = Vec::new();
    for (kind, stage) in [("generate", Stage::EvalGenerate), ("optimize", Stage::EvalOptimize)] {
        for name in &cfg.eval.models {
            let p = run.ws.path(stage, &format!("{name}.json"));
            if !p.is_file() {
                continue;
            }
            let evals: Vec<ProblemEval> = read_json(&run.input(p))?;
            let report: EvalReport = aggregate(evals, &cfg.eval.ks).map_err(stage_err)?;
            run.write_json(&format!("{kind}_{name}.json"), &report)?;
            for row in &report.metrics {
                csv_rows.push(ReportRow { kind, model: name, k: row.k, pass_at_k: row.pass_at_k, speedup_at_k: row.speedup_at_k });
            }
            table.entry(kind.to_string()).or_default().insert(name.clone(), report.metrics);
        }
    }
    if table.is_empty() {
        return Err(PipelineError::Missing { stage: Stage::EvalGenerate, path: run.ws.dir(Stage::EvalGenerate) });
    }
    run.write_json(METRICS_FILE, &table)?;
    run.write_csv("metrics.csv", &csv_rows)?;
    serde_json::to_value(&table).map_err(stage_err)
}

#[derive(Serialize)]
struct ReportRow<'a> {
    kind: &'a str,
    model: &'a str,
    k: usize,
    pass_at_k: f64,
    speedup_at_k: f64,
}

/// Reads a metrics file written by `eval report`.
pub fn load_metrics(path: &Path) -> Result<MetricsTable, PipelineError> {
    read_json(path)
}
