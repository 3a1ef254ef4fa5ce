mod common;

use perfalign::model::graph::Graph;
use perfalign::model::tensor::log_softmax;
use perfalign::model::transformer::{hidden_on_graph, token_logprobs_on_graph};
use perfalign::model::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tokens(ckpt: &Checkpoint<f64>, text: &str) -> Vec<usize> {
    let mut t = vec![BOS];
    t.extend(ckpt.tokenizer.encode(text).unwrap());
    t
}

#[test]
fn uniform_initialisation_has_vocabulary_perplexity() {
    let m = common::uniform_model(3);
    let v = m.config.vocab_size as f64;
    let data = vec![tokens(&m, "print(in0 * 2);"), tokens(&m, "x = 1;")];
    let ppl = perplexity(&m, &data).unwrap();
    assert!((ppl - v).abs() <= 1e-9 * v, "{ppl} vs {v}");
    let logits = m.logits(&data[0]).unwrap();
    assert!(logits.data.iter().all(|&l| l == 0.0));
}

#[test]
fn later_tokens_do_not_change_earlier_logits() {
    let m = common::model(2, 16, 64, 1);
    let a = tokens(&m, "print(in0 + 1);");
    let mut b = a.clone();
    let n = b.len();
    b[n - 1] = EOS;
    b[n - 2] = BOS;
    let la = m.logits(&a).unwrap();
    let lb = m.logits(&b).unwrap();
    for r in 0..n - 2 {
        assert_eq!(la.row(r), lb.row(r), "row {r}");
    }
    assert_ne!(la.row(n - 1), lb.row(n - 1));
}

#[test]
fn sequences_longer_than_context_are_rejected() {
    let m = common::model(1, 8, 16, 0);
    let long = vec![BOS; 17];
    assert!(matches!(m.logits(&long), Err(ModelError::Length { len: 17, context: 16 })));
    assert!(matches!(m.token_logprobs(&long[..10], &long[10..]), Err(ModelError::Length { .. })));
    assert!(m.logits(&long[..16]).is_ok());
}

#[test]
fn log_probabilities_are_additive_over_a_split_completion() {
    let m = common::model(2, 16, 64, 2);
    let prompt = tokens(&m, "x");
    let comp = m.tokenizer.encode(" = in0 * 3;").unwrap();
    let whole = m.sequence_logprob(&prompt, &comp).unwrap();
    let cut = 4;
    let first = m.sequence_logprob(&prompt, &comp[..cut]).unwrap();
    let mut longer = prompt.clone();
    longer.extend_from_slice(&comp[..cut]);
    let second = m.sequence_logprob(&longer, &comp[cut..]).unwrap();
    assert!((whole - (first + second)).abs() < 1e-12);
    assert_eq!(m.sequence_logprob(&prompt, &[]).unwrap(), 0.0);
}

#[test]
fn tape_and_incremental_decoder_agree() {
    let m = common::model(2, 16, 64, 4);
    let seq = tokens(&m, "while (i < 3) { i = i + 1; }");
    let start = 5;
    let mut g = Graph::new();
    let bound = Bound::frozen(&mut g, &m.params);
    let hidden = hidden_on_graph(&mut g, &m.config, &m.params, &bound, &seq).unwrap();
    let lp = token_logprobs_on_graph(&mut g, &m.params, &bound, hidden, &seq, start);
    let tape = g.value(lp).data.clone();
    let direct = m.token_logprobs(&seq[..start], &seq[start..]).unwrap();
    assert_eq!(tape.len(), direct.len());
    for (a, b) in tape.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    // and both against a softmax over the full-sequence logits
    let logits = m.logits(&seq).unwrap();
    for (i, &d) in direct.iter().enumerate() {
        let row = log_softmax(logits.row(start - 1 + i));
        assert!((row[seq[start + i]] - d).abs() < 1e-12);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let m = common::model(2, 16, 64, 5).with_role(Role::Dpa);
    let bytes = m.to_bytes();
    let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_bytes(), bytes);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    m.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(Checkpoint::<f64>::load(&path).unwrap(), m);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let m = common::model(1, 8, 16, 0);
    let bytes = m.to_bytes();
    assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes[..10]), Err(ModelError::Format(_))));
    assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 8]), Err(ModelError::Format(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::<f64>::from_bytes(&bad).is_err());
}

/// First-token frequencies over 100k draws against the truncated distribution.
#[test]
fn sampling_frequencies_match_the_distribution() {
    let m = common::model(1, 8, 16, 9);
    let prompt = vec![BOS];
    let logits = m.logits(&prompt).unwrap().row(0).to_vec();
    let draws = 100_000usize;
    for (temperature, top_p, top_k) in [(1.0, 1.0, 0), (0.7, 0.9, 0), (1.3, 1.0, 5)] {
        let dist = truncated_distribution(&logits, temperature, top_k, top_p);
        let cfg = SampleConfig { temperature, top_p, top_k, max_new_tokens: 1, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = vec![0usize; m.config.vocab_size];
        for _ in 0..draws {
            let out = sample_with_rng(&m, &prompt, &cfg, &mut rng).unwrap();
            counts[out[0]] += 1;
        }
        let allowed: std::collections::HashMap<usize, f64> = dist.iter().copied().collect();
        for (tok, &c) in counts.iter().enumerate() {
            let p = allowed.get(&tok).copied().unwrap_or(0.0);
            if p == 0.0 {
                assert_eq!(c, 0, "token {tok} outside the truncated support");
                continue;
            }
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            let expected = draws as f64 * p;
            assert!((c as f64 - expected).abs() <= 3.0 * sd.max(1.0), "token {tok}: {c} vs {expected:.1} (T={temperature})");
        }
    }
}

#[test]
fn greedy_sampling_is_argmax_and_stops_at_eos() {
    let m = common::model(1, 8, 32, 3);
    let prompt = vec![BOS];
    let cfg = SampleConfig { temperature: 0.0, top_p: 1.0, top_k: 0, max_new_tokens: 10, seed: 0 };
    let out = sample(&m, &prompt, &cfg).unwrap();
    let mut ctx = prompt.clone();
    for &t in &out {
        let logits = m.logits(&ctx).unwrap();
        assert_eq!(t, argmax(logits.row(ctx.len() - 1)));
        ctx.push(t);
    }
    assert!(out.len() == 10 || *out.last().unwrap() == EOS);
    let tight = SampleConfig { max_new_tokens: 100, ..cfg };
    assert!(sample(&m, &vec![BOS; 30], &tight).unwrap().len() <= 2);
}

fn example(m: &Checkpoint<f64>, instruction: &str, code: &str) -> SftExample {
    SftExample { prompt: encode_prompt(&m.tokenizer, instruction).unwrap(), completion: encode_completion(&m.tokenizer, code).unwrap() }
}

#[test]
fn sft_loss_covers_completion_tokens_only() {
    let m = common::model(1, 16, 128, 6);
    let ex = example(&m, "Print 1.", "print(1);");
    let (nll, _) = example_nll_grads(&m, &ex, 1.0).unwrap();
    let direct: f64 = -m.token_logprobs(&ex.prompt, &ex.completion).unwrap().iter().sum::<f64>();
    assert!((nll - direct).abs() < 1e-10);
    let (mean, _) = batch_loss_grads(&m, std::slice::from_ref(&ex), 1).unwrap();
    assert!((mean - direct / ex.completion.len() as f64).abs() < 1e-12);
    let ex2 = SftExample { prompt: ex.prompt.clone(), completion: vec![] };
    assert!(matches!(batch_loss_grads(&m, &[ex2], 1), Err(ModelError::EmptyInput)));
}

#[test]
fn per_example_gradients_sum_independently_of_workers() {
    let m = common::model(2, 16, 128, 7);
    let batch = vec![
        example(&m, "Print 1.", "print(1);"),
        example(&m, "Print in0.", "print(in0);"),
        example(&m, "Double it.", "print(in0 * 2);"),
    ];
    let (l1, g1) = batch_loss_grads(&m, &batch, 1).unwrap();
    let (l3, g3) = batch_loss_grads(&m, &batch, 3).unwrap();
    assert_eq!(l1.to_bits(), l3.to_bits());
    assert_eq!(g1, g3);
}

#[test]
fn sft_reduces_loss_on_a_small_set() {
    let m = common::model(1, 16, 128, 8);
    let records = vec![
        perfalign::corpus::PromptRecord {
            kind: perfalign::corpus::PromptKind::Generate,
            instruction: "Print 1.".into(),
            response: "print(1);".into(),
            problem_id: "a".into(),
        },
        perfalign::corpus::PromptRecord {
            kind: perfalign::corpus::PromptKind::Generate,
            instruction: "Print 2.".into(),
            response: "print(2);".into(),
            problem_id: "b".into(),
        },
    ];
    let examples: Vec<SftExample> = records.iter().map(|r| encode_record(&m.tokenizer, r).unwrap()).collect();
    let before = mean_completion_nll(&m, &examples).unwrap();
    let cfg = SftConfig { adam: AdamConfig::with_lr(1e-2), epochs: 30, batch_size: 2, ..Default::default() };
    let (trained, history) = sft_train(&m, &records, &cfg).unwrap();
    let after = mean_completion_nll(&trained, &examples).unwrap();
    assert_eq!(history.len(), 30);
    assert!(after < before * 0.5, "{before} -> {after}");
    assert_eq!(trained.role, Role::Sft);
    let (again, _) = sft_train(&m, &records, &cfg).unwrap();
    assert_eq!(again, trained);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn truncated_distribution_is_normalised(
        logits in proptest::collection::vec(-5.0f64..5.0, 2..12),
        temperature in 0.05f64..3.0,
        top_p in 0.05f64..1.0,
        top_k in 0usize..6,
    ) {
        let dist = truncated_distribution(&logits, temperature, top_k, top_p);
        let total: f64 = dist.iter().map(|d| d.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(!dist.is_empty());
        if top_k > 0 {
            prop_assert!(dist.len() <= top_k);
        }
        for w in dist.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
        prop_assert_eq!(dist[0].0, argmax(&logits));
    }

    #[test]
    fn tokenizer_round_trips_code(s in "[a-z0-9 (){};=+*/%<>!-]{0,40}") {
        let tok = Tokenizer::new();
        let ids = tok.encode(&s).unwrap();
        prop_assert_eq!(tok.decode(&ids), s);
    }
}
