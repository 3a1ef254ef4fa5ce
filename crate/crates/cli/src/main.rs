use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perfalign::corpus::{save_corpus, toy_corpus, ToyConfig};
use perfalign::pipeline::{run_stage, PipelineConfig, PipelineError, Stage};

#[derive(Parser)]
#[command(name = "perfalign", version, about = "Align small code models toward faster code")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sft.adam.lr=0.002`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Cap on worker threads (same as `--set workers=N`).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Work directory (same as `--set paths.workdir=DIR`).
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus preparation stages.
    #[command(subcommand)]
    Data(DataCmd),
    /// Model training stages.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Sampling and scoring stages.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Every offline stage in order (no synthetic generation).
    Run,
    /// Print the resolved config as TOML.
    Config,
}

#[derive(Subcommand)]
enum DataCmd {
    /// Run every solution against its tests and record runtimes.
    Label,
    /// Assign problems to SFT / reward / RL-DPA / held-out splits.
    Split,
    /// Build SFT prompts and fast/slow triplets from the splits.
    Triplets,
    /// Add generated synthetic problems to the labeled corpus.
    Synth,
    /// Write the toy minilang corpus.
    Toy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = ToyConfig::default().problems)]
        problems: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum TrainCmd {
    Sft,
    Reward,
    Rlpf,
    Dpa,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Sample solutions to held-out problems.
    Generate,
    /// Ask for faster versions of the slowest known solutions.
    Optimize,
    /// Aggregate pass@k / speedup@k from the sampled results.
    Report,
}

fn load_config(g: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut overrides = g.overrides.clone();
    if let Some(w) = g.workers {
        overrides.push(format!("workers={w}"));
    }
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path, &overrides)?,
        None => PipelineConfig::from_toml("", &overrides)?,
    };
    if let Some(dir) = &g.workdir {
        cfg.paths.workdir = dir.clone();
    }
    Ok(cfg)
}

fn stages(cmd: &Command) -> Vec<Stage> {
    match cmd {
        Command::Data(d) => vec![match d {
            DataCmd::Label => Stage::DataLabel,
            DataCmd::Split => Stage::DataSplit,
            DataCmd::Triplets => Stage::DataTriplets,
            DataCmd::Synth => Stage::DataSynth,
            DataCmd::Toy { .. } => unreachable!("handled before config loading"),
        }],
        Command::Train(t) => vec![match t {
            TrainCmd::Sft => Stage::TrainSft,
            TrainCmd::Reward => Stage::TrainReward,
            TrainCmd::Rlpf => Stage::TrainRlpf,
            TrainCmd::Dpa => Stage::TrainDpa,
        }],
        Command::Eval(e) => vec![match e {
            EvalCmd::Generate => Stage::EvalGenerate,
            EvalCmd::Optimize => Stage::EvalOptimize,
            EvalCmd::Report => Stage::EvalReport,
        }],
        Command::Run => Stage::OFFLINE.to_vec(),
        Command::Config => Vec::new(),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Command::Data(DataCmd::Toy { out, problems, seed }) = &cli.command {
        let corpus = toy_corpus(&ToyConfig { problems: *problems, seed: *seed, ..ToyConfig::default() });
        save_corpus(out, &corpus).map_err(|e| PipelineError::Stage(e.to_string()))?;
        println!("wrote {} problems to {}", corpus.problems.len(), out.display());
        return Ok(());
    }
    let cfg = load_config(&cli.global)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    for stage in stages(&cli.command) {
        let summary = run_stage(&cfg, stage)?;
        println!("{stage}: {summary}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
