//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

// quoted four-decimal figures are compared against, not used as constants
#![allow(clippy::approx_constant)]

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use perfalign::align::{
    dpa_accuracy, dpa_loss, dpa_loss_on_graph, ppo_loss_on_graph, rollout, DpaConfig, EncodedPair, PpoConfig, VALUE_HEAD,
};
use perfalign::corpus::{toy_corpus, Corpus, Source, ToyConfig, Triplet};
use perfalign::executor::{evaluate, evaluate_code, label_corpus, median, Backend};
use perfalign::metrics::{pass_at_k, speedup_n_at_k};
use perfalign::model::transformer::{ensure_scalar_head, hidden_on_graph, token_logprobs_on_graph};
use perfalign::model::*;
use perfalign::pipeline::{load_metrics, run_pipeline, run_stage, PipelineConfig, Stage, Workspace, MODEL_FILE};
use perfalign::reward::*;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- metrics

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            out.push((0..n).filter(|i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

fn criterion_1() -> Check {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 1..=8 {
        for k in 1..=n {
            let subs = subsets(n, k);
            for c in 0..=n {
                // samples 0..c are the correct ones
                let hits = subs.iter().filter(|s| s.iter().any(|&i| i < c)).count();
                let oracle = hits as f64 / subs.len() as f64;
                let got: f64 = pass_at_k(n, c, k).map_err(err)?;
                worst = worst.max((got - oracle).abs());
                cases += 1;
            }
            for variant in 0..4 {
                let samples: Vec<(bool, f64)> = (0..n)
                    .map(|i| {
                        let correct = (i + variant) % 3 != 0;
                        (correct, 1.0 + ((i * 7 + variant * 3) % 11) as f64 * 0.37)
                    })
                    .collect();
                let baseline = 3.3;
                let speed = |i: usize| if samples[i].0 { baseline / samples[i].1 } else { 0.0 };
                let oracle = subs.iter().map(|s| s.iter().map(|&i| speed(i)).fold(0.0, f64::max)).sum::<f64>() / subs.len() as f64;
                let got: f64 = speedup_n_at_k(&samples, baseline, k).map_err(err)?;
                worst = worst.max((got - oracle).abs());
                cases += 1;
            }
        }
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:.3e} over {cases} cases"))?;
    let p: f64 = pass_at_k(5, 2, 2).map_err(err)?;
    ensure((p - 0.7).abs() <= 1e-9, format!("pass@2 with N=5 c=2 is {p}"))?;
    let s: f64 = speedup_n_at_k(&[(true, 4.0), (true, 2.0), (true, 1.0)], 4.0, 2).map_err(err)?;
    ensure((s - 10.0 / 3.0).abs() <= 1e-9, format!("speedup@2 of {{1,2,4}} is {s}"))?;
    Ok(format!("{cases} cases, max deviation {worst:.2e}; worked values {p:.12} and {s:.12}"))
}

// ---------------------------------------------------------------- losses

fn criterion_2() -> Check {
    let ln2 = 2f64.ln();
    let checks: [(&str, f64, f64, f64); 6] = [
        ("reward loss at zero", reward_loss(0.0, 0.0, 0.0), ln2, 0.6931),
        ("reward loss (2, 1, 3)", reward_loss(2.0, 1.0, 3.0), (1.0 + 2f64.exp()).ln(), 2.1269),
        ("dpa loss at zero", dpa_loss(0.0, 0.0, 0.0, 0.0, 0.0, 0.6), ln2, 0.6931),
        ("dpa loss, difference 1, mu 0", dpa_loss(1.0, 0.0, 0.0, 0.0, 0.0, 0.6), (1.0 + (-0.6f64).exp()).ln(), 0.4375),
        ("dpa loss, difference 1, mu 3", dpa_loss(1.0, 0.0, 0.0, 0.0, 3.0, 0.6), (1.0 + 2.4f64.exp()).ln(), 2.4869),
        ("dpa loss, split log-ratios", dpa_loss(-1.5, -2.0, -3.0, -2.5, 3.0, 0.6), (1.0 + 2.4f64.exp()).ln(), 2.4869),
    ];
    let mut shown = Vec::new();
    for (name, got, exact, rounded) in checks {
        ensure((got - exact).abs() <= 1e-6, format!("{name}: {got} vs {exact}"))?;
        // the quoted figures carry four decimals
        ensure((got - rounded).abs() < 1e-4, format!("{name}: {got} far from the quoted {rounded}"))?;
        shown.push(format!("{got:.6}"));
    }
    let mut t = common::triplet("s", "a", "b", Some((2.0, 10.0)));
    let m = margin(&t, &MarginConfig { lambda_max: 3.0 }).map_err(err)?;
    ensure(m == 3.0, format!("margin at speedup 5 is {m}"))?;
    t.slow.runtime = Some(4.0);
    let below = margin(&t, &MarginConfig { lambda_max: 3.0 }).map_err(err)?;
    ensure(below == 2.0, format!("margin at speedup 2 is {below}"))?;
    Ok(format!("losses {}; margin clamps to {m}", shown.join(" ")))
}

// ---------------------------------------------------------------- gradients

fn desk_model(seed: u64) -> Checkpoint<f64> {
    let tok = Tokenizer::new();
    let cfg = PipelineConfig::default().model.model_config(&tok);
    Checkpoint::init(cfg, tok, InitOptions { std: 0.05, zero_head: false }, seed).unwrap()
}

fn criterion_3() -> Check {
    let opts = GradCheckOptions { per_tensor: 2, abs_floor: 1e-5, ..Default::default() };
    let mut m = desk_model(1);
    ensure(m.config.layers == 4, "desk model must have 4 layers")?;
    let mcfg = m.config;
    ensure_scalar_head(&mut m.params, &mcfg, REWARD_HEAD);
    ensure_scalar_head(&mut m.params, &mcfg, VALUE_HEAD);
    for name in [REWARD_HEAD, VALUE_HEAD] {
        for (i, v) in m.params.get_mut(&format!("{name}.w")).unwrap().data.iter_mut().enumerate() {
            *v = 0.05 * ((i % 5) as f64 - 2.0);
        }
    }
    let reference = desk_model(2);
    let mut results = Vec::new();

    let prompt = encode_prompt(&m.tokenizer, "Print in0 times 3.").map_err(err)?;
    let completion = encode_completion(&m.tokenizer, "print(in0 * 3);").map_err(err)?;
    let mut seq = prompt.clone();
    seq.extend_from_slice(&completion);
    let sft = grad_check(
        &m.params,
        |g, p, b| {
            let h = hidden_on_graph(g, &mcfg, p, b, &seq).unwrap();
            let lp = token_logprobs_on_graph(g, p, b, h, &seq, prompt.len());
            let s = g.sum(lp);
            g.scale(s, -1.0 / completion.len() as f64)
        },
        &opts,
    );
    results.push(("sft", sft));

    let rm = RewardModel::from_checkpoint(m.clone().with_role(Role::Reward)).map_err(err)?;
    let fast = rm.encode("Print in0 times 3.", "print(in0 * 3);").map_err(err)?;
    let slow = rm.encode("Print in0 times 3.", "print(in0 + in0 + in0);").map_err(err)?;
    let ranking = grad_check(&m.params, |g, _, b| pair_loss_on_graph(g, &m, b, &fast, &slow, 1.7).unwrap(), &opts);
    results.push(("reward", ranking));

    let t = common::triplet("Print in0 times 3.", "print(in0 * 3);", "print(in0 + in0 + in0);", Some((4.0, 6.0)));
    let pair = EncodedPair::new(&reference, &t, 1.5).map_err(err)?;
    let dpa = grad_check(&m.params, |g, _, b| dpa_loss_on_graph(g, &m, b, &pair, 0.6).unwrap(), &opts);
    results.push(("dpa", dpa));

    let problem = common::doubling_problem();
    let cfg = SampleConfig { max_new_tokens: 10, ..SampleConfig::rollout(3) };
    let mut batch = rollout(&m, &reference, &[&problem, &problem], &Backend::Minilang, None, &cfg, 3, 1).map_err(err)?;
    for (i, s) in batch.samples.iter_mut().enumerate() {
        s.reward = 1.5 - 2.0 * i as f64;
        for (j, lp) in s.old_logprobs.iter_mut().enumerate() {
            *lp += 0.25 * (((i + j) % 5) as f64 - 2.0);
        }
    }
    let ppo_cfg = PpoConfig::default();
    batch.compute_advantages(&ppo_cfg);
    let sample = &batch.samples[0];
    let ppo = grad_check(&m.params, |g, _, b| ppo_loss_on_graph(g, &m, b, sample, &ppo_cfg, 1.0).unwrap().0, &opts);
    results.push(("ppo", ppo));

    let mut shown = Vec::new();
    for (name, r) in &results {
        let worst = r.worst.as_ref().map(|w| w.rel_error).unwrap_or(0.0);
        ensure(r.passes(1e-4), format!("{name}: {:?}", r.worst))?;
        shown.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("max relative error: {}", shown.join(", ")))
}

// ---------------------------------------------------------------- perplexity

fn criterion_4() -> Check {
    let p = perplexity_from_nll(0.48);
    ensure((1.616..=1.62).contains(&p), format!("perplexity at CE 0.48 is {p}"))?;
    let m = common::model(2, 16, 64, 4);
    let data: Vec<Vec<usize>> = ["print(in0);", "x = 2; print(x * in0);"]
        .iter()
        .map(|s| {
            let mut t = vec![BOS];
            t.extend(m.tokenizer.encode(s).unwrap());
            t
        })
        .collect();
    let (mut nll, mut count) = (0.0, 0usize);
    for d in &data {
        let lp = m.token_logprobs(&d[..1], &d[1..]).map_err(err)?;
        nll -= lp.iter().sum::<f64>();
        count += lp.len();
    }
    let direct = (nll / count as f64).exp();
    let got = perplexity(&m, &data).map_err(err)?;
    ensure((got - direct).abs() <= 1e-12 * direct, format!("perplexity {got} vs exp(mean nll) {direct}"))?;
    let u = common::uniform_model(5);
    let v = u.config.vocab_size as f64;
    let up = perplexity(&u, &data).map_err(err)?;
    // exp(ln |V|) is not bit-exact in binary floating point, so allow a few ulps
    let ulps = (up - v).abs() / (f64::from_bits(v.to_bits() + 1) - v);
    ensure((up - v).abs() <= 1e-12 * v, format!("uniform perplexity {up} vs |V| = {v}"))?;
    Ok(format!("CE 0.48 -> {p:.6}; uniform model -> {up} vs |V| = {v} ({ulps:.0} ulp)"))
}

// ---------------------------------------------------------------- shared pipeline runs

struct Runs {
    root: PathBuf,
    base: PipelineConfig,
    seeds: BTreeMap<u64, PathBuf>,
}

impl Runs {
    fn config(&self, seed: u64, workdir: &Path) -> PipelineConfig {
        let mut cfg = self.base.clone();
        cfg.seed = seed;
        cfg.paths.workdir = workdir.to_path_buf();
        cfg
    }

    fn pipeline(&mut self, seed: u64) -> Result<PathBuf, String> {
        if let Some(p) = self.seeds.get(&seed) {
            return Ok(p.clone());
        }
        let dir = self.root.join(format!("seed{seed}"));
        run_pipeline(&self.config(seed, &dir)).map_err(err)?;
        self.seeds.insert(seed, dir.clone());
        Ok(dir)
    }
}

// ---------------------------------------------------------------- separable triplets

/// Closed-form (fast) versus loop (slow) solutions of every toy task, split by problem.
fn separable_triplets() -> (Vec<Triplet>, Vec<Triplet>) {
    let cfg = ToyConfig { problems: usize::MAX, synthetic_percent: 0, seed: 17, ..Default::default() };
    let (labeled, _) = label_corpus(&toy_corpus(&cfg), &Backend::Minilang, 1);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, p) in labeled.problems.iter().filter(|p| p.source == Source::Contest).enumerate() {
        let ranked = labeled.ranked_correct(&p.id);
        let fast: Vec<_> = ranked.iter().filter(|s| !s.code.contains("while")).collect();
        let slow: Vec<_> = ranked.iter().filter(|s| s.code.contains("while")).collect();
        for (f, s) in fast.iter().zip(slow.iter().rev()) {
            let t = Triplet {
                problem_id: p.id.clone(),
                statement: p.statement.clone(),
                fast: (**f).clone(),
                slow: (**s).clone(),
                slow_is_incorrect: false,
                has_runtimes: true,
            };
            if i % 5 == 0 {
                held.push(t);
            } else {
                train.push(t);
            }
        }
    }
    (train, held)
}

fn sft_of(dir: &Path) -> Result<Checkpoint<f64>, String> {
    Checkpoint::load(&Workspace::new(dir).path(Stage::TrainSft, MODEL_FILE)).map_err(err)
}

fn criterion_5(runs: &mut Runs, data: &(Vec<Triplet>, Vec<Triplet>)) -> Check {
    let (train, held) = data;
    ensure(train.len() + held.len() >= 500, format!("only {} triplets", train.len() + held.len()))?;
    let sft = sft_of(&runs.pipeline(0)?)?;
    let constant = RewardModel::from_base(&sft);
    let before = reward_accuracy(&constant, held).map_err(err)?;
    ensure(before == 0.0, format!("untrained accuracy {before}"))?;
    let c = &runs.base.reward;
    let cfg = RewardConfig {
        adam: c.adam,
        epochs: c.epochs,
        batch_size: c.batch_size,
        shuffle: c.shuffle,
        margin: c.margin,
        seed: 0,
        workers: runs.base.workers,
    };
    let (model, _) = train_reward_model(&sft, train, &cfg, &[]).map_err(err)?;
    let train_acc = reward_accuracy(&model, train).map_err(err)?;
    let acc = reward_accuracy(&model, held).map_err(err)?;
    ensure(acc >= 0.90, format!("held-out accuracy {acc:.3} (train {train_acc:.3})"))?;
    Ok(format!(
        "{} train / {} held-out triplets; accuracy {before} untrained, {acc:.3} held-out, {train_acc:.3} train",
        train.len(),
        held.len()
    ))
}

fn criterion_6(runs: &mut Runs, data: &(Vec<Triplet>, Vec<Triplet>)) -> Check {
    let (train, held) = data;
    let sft = sft_of(&runs.pipeline(0)?)?;
    let before = dpa_accuracy(&sft, &sft, held).map_err(err)?;
    ensure(before == 0.0, format!("accuracy before training {before}"))?;
    let c = &runs.base.dpa;
    let cfg = DpaConfig {
        adam: c.adam,
        beta: c.beta,
        epochs: 1,
        batch_size: c.batch_size,
        shuffle: c.shuffle,
        margin: c.margin,
        seed: 0,
        workers: runs.base.workers,
    };
    let (policy, _) = perfalign::align::dpa_train(&sft, train, &cfg).map_err(err)?;
    let acc = dpa_accuracy(&policy, &sft, held).map_err(err)?;
    ensure(acc >= 0.80, format!("held-out accuracy {acc:.3}"))?;
    Ok(format!("{} held-out triplets; accuracy {before} before, {acc:.3} after one epoch", held.len()))
}

fn criterion_7(runs: &mut Runs) -> Check {
    let source = runs.pipeline(0)?;
    let mut first = Vec::new();
    let mut last = Vec::new();
    let mut max_kl: f64 = 0.0;
    for seed in 0..5u64 {
        let dir = runs.root.join(format!("rlpf{seed}"));
        let _ = std::fs::remove_dir_all(&dir);
        for stage in [Stage::DataLabel, Stage::DataSplit, Stage::DataTriplets, Stage::TrainSft, Stage::TrainReward] {
            let from = Workspace::new(&source).dir(stage);
            let to = Workspace::new(&dir).dir(stage);
            std::fs::create_dir_all(&to).map_err(err)?;
            for entry in std::fs::read_dir(&from).map_err(err)? {
                let entry = entry.map_err(err)?;
                std::fs::copy(entry.path(), to.join(entry.file_name())).map_err(err)?;
            }
        }
        let summary = run_stage(&runs.config(seed, &dir), Stage::TrainRlpf).map_err(err)?;
        ensure(summary["aborted"].is_null(), format!("seed {seed} aborted: {}", summary["aborted"]))?;
        let rewards: Vec<f64> = serde_json::from_value(summary["epoch_rewards"].clone()).map_err(err)?;
        let kl = summary["max_kl"].as_f64().ok_or_else(|| format!("seed {seed}: no KL recorded"))?;
        ensure(kl.is_finite() && kl < 5.0, format!("seed {seed}: KL {kl}"))?;
        ensure(rewards.len() >= 2, format!("seed {seed}: {} epochs", rewards.len()))?;
        max_kl = max_kl.max(kl);
        first.push(rewards[0]);
        last.push(*rewards.last().unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&first), mean(&last));
    ensure(b > a, format!("mean reward epoch 1 {a:.3}, final {b:.3}"))?;
    Ok(format!("mean reward epoch 1 {a:.3} -> final {b:.3} over 5 seeds; max KL {max_kl:.4}"))
}

fn criterion_8(runs: &mut Runs) -> Check {
    ensure(runs.base.eval.samples == 20, "eval.samples must be 20")?;
    ensure(runs.base.eval.temperature == 0.2 && runs.base.eval.top_p == 0.95, "eval sampling must be T=0.2, top-p 0.95")?;
    let mut sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut problems = usize::MAX;
    for seed in 0..3 {
        let dir = runs.pipeline(seed)?;
        let ws = Workspace::new(&dir);
        let table = load_metrics(&ws.metrics_path()).map_err(err)?;
        let evals: Vec<perfalign::metrics::ProblemEval> =
            serde_json::from_str(&std::fs::read_to_string(ws.path(Stage::EvalGenerate, "sft.json")).map_err(err)?).map_err(err)?;
        problems = problems.min(evals.len());
        for (model, rows) in &table["generate"] {
            let row = rows.iter().find(|r| r.k == 1).ok_or("no k=1 row")?;
            let e = sums.entry(model.clone()).or_default();
            e.0 += row.pass_at_k / 3.0;
            e.1 += row.speedup_at_k / 3.0;
        }
    }
    ensure(problems >= 10, format!("only {problems} held-out problems"))?;
    let get = |m: &str| sums.get(m).copied().ok_or_else(|| format!("no metrics for {m}"));
    let (sft, rlpf, dpa) = (get("sft")?, get("rlpf")?, get("dpa")?);
    let shown = format!(
        "{problems} problems; pass@1 / speedup@1 averaged over 3 seeds: sft {:.3}/{:.3}, rlpf {:.3}/{:.3}, dpa {:.3}/{:.3}",
        sft.0, sft.1, rlpf.0, rlpf.1, dpa.0, dpa.1
    );
    ensure(rlpf.1 >= sft.1, format!("rlpf speedup below sft: {shown}"))?;
    ensure(dpa.1 >= sft.1, format!("dpa speedup below sft: {shown}"))?;
    ensure(rlpf.0 >= sft.0 - 0.05 && dpa.0 >= sft.0 - 0.05, format!("pass@1 dropped: {shown}"))?;
    Ok(shown)
}

// ---------------------------------------------------------------- executor

fn criterion_9() -> Check {
    let problem = common::doubling_problem();
    let fixtures = common::verdict_fixtures();
    ensure(fixtures.len() == 12, "fixture suite must have 12 programs")?;
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for (code, expected) in &fixtures {
        let v = evaluate_code(code, &problem, &Backend::Minilang);
        ensure(v.status == *expected, format!("{code}: {:?}, expected {expected:?}", v.status))?;
        ensure(v.per_test.len() == problem.tests.len(), format!("{code}: tests skipped"))?;
        *tally.entry(format!("{expected:?}")).or_default() += 1;
    }
    ensure(median(&[5.0, 1.0, 3.0]) == Some(3.0), "odd median")?;
    ensure(median(&[4.0, 1.0, 3.0, 8.0]) == Some(3.5), "even median")?;
    ensure(median(&[]).is_none(), "empty median")?;

    // two-level averaging: mean over tests per solution, then median over solutions
    let mut p = common::doubling_problem();
    p.id = "p".into();
    let codes: Vec<String> =
        [0usize, 4, 9, 30].iter().map(|n| format!("j = 0; while (j < {n}) {{ j = j + 1; }} print(in0 * 2);")).collect();
    let solutions = codes.iter().enumerate().map(|(i, c)| common::solution("p", &format!("s{i}"), c, None)).collect();
    let (labeled, _) = label_corpus(&Corpus { problems: vec![p.clone()], solutions }, &Backend::Minilang, 1);
    let mut avgs: Vec<f64> = labeled
        .solutions
        .iter()
        .map(|s| {
            let v = evaluate(s, &p, &Backend::Minilang);
            v.per_test.iter().map(|t| t.runtime).sum::<f64>() / v.per_test.len() as f64
        })
        .collect();
    for (s, a) in labeled.solutions.iter().zip(&avgs) {
        ensure(s.runtime == Some(*a), format!("{}: runtime {:?} vs mean {a}", s.submission_id, s.runtime))?;
    }
    avgs.sort_by(f64::total_cmp);
    let want = (avgs[1] + avgs[2]) / 2.0;
    let got = labeled.problems[0].median_runtime;
    ensure(got == Some(want), format!("median runtime {got:?} vs {want}"))?;
    Ok(format!("12/12 verdicts {tally:?}; medians exact; problem median {want}"))
}

fn criterion_10(runs: &mut Runs) -> Check {
    let first = runs.pipeline(0)?;
    let dir = runs.root.join("seed0-repeat");
    let again = run_pipeline(&runs.config(0, &dir)).map_err(err)?;
    let a = std::fs::read(Workspace::new(&first).metrics_path()).map_err(err)?;
    let b = std::fs::read(Workspace::new(&dir).metrics_path()).map_err(err)?;
    ensure(a == b && again.as_bytes() == a.as_slice(), "metrics JSON differs between runs")?;
    Ok(format!("{} bytes of metrics JSON identical across two seed-0 runs", a.len()))
}

// ---------------------------------------------------------------- driver

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn record(lines: &mut Vec<Line>, id: usize, name: &'static str, limit: Duration, f: impl FnOnce() -> Check) {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let (mut pass, mut detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if elapsed > limit {
        pass = false;
        detail = format!("{detail}; exceeded the {:.0} s budget", limit.as_secs_f64());
    }
    let line = Line { id, name, pass, detail, elapsed };
    print_line(&line);
    lines.push(line);
}

fn print_line(l: &Line) {
    println!(
        "criterion {:>2} {:<28} {} ({:.1} s) {}",
        l.id,
        l.name,
        if l.pass { "PASS" } else { "FAIL" },
        l.elapsed.as_secs_f64(),
        l.detail
    );
}

fn main() {
    let secs = Duration::from_secs;
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let base = PipelineConfig::load(&config, &[]).expect("configs/toy.toml loads");
    let mut runs = Runs { root, base, seeds: BTreeMap::new() };
    let mut lines = Vec::new();

    record(&mut lines, 1, "metric oracles", secs(10), criterion_1);
    record(&mut lines, 2, "closed-form losses", secs(1), criterion_2);
    record(&mut lines, 3, "gradient checks", secs(120), criterion_3);
    record(&mut lines, 4, "perplexity identity", secs(1), criterion_4);
    record(&mut lines, 9, "executor truth table", secs(30), criterion_9);
    // the seed runs are shared by the remaining criteria
    record(&mut lines, 8, "end-to-end ordering", secs(2 * 3600), || criterion_8(&mut runs));
    let c8 = lines.last().map(|l| l.elapsed).unwrap_or_default();
    let data = separable_triplets();
    record(&mut lines, 5, "reward model accuracy", secs(15 * 60), || criterion_5(&mut runs, &data));
    record(&mut lines, 6, "dpa accuracy", secs(15 * 60), || criterion_6(&mut runs, &data));
    record(&mut lines, 7, "rlpf dynamics", secs(30 * 60), || criterion_7(&mut runs));
    record(&mut lines, 10, "determinism", (2 * c8).max(secs(60)), || criterion_10(&mut runs));

    lines.sort_by_key(|l| l.id);
    println!("\nsummary");
    for l in &lines {
        print_line(l);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("{} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
