mod common;

use perfalign::align::*;
use perfalign::executor::Backend;
use perfalign::model::transformer::ensure_scalar_head;
use perfalign::model::*;
use perfalign::reward::*;

const TOL: f64 = 1e-4;

// Central differences at step 1e-5 carry ~1e-10 of rounding noise, and key
// biases have an exactly zero gradient, so tiny entries compare absolutely.
fn opts() -> GradCheckOptions {
    GradCheckOptions { per_tensor: 3, abs_floor: 1e-5, ..Default::default() }
}

fn with_heads(mut m: Checkpoint<f64>) -> Checkpoint<f64> {
    let cfg = m.config;
    ensure_scalar_head(&mut m.params, &cfg, VALUE_HEAD);
    ensure_scalar_head(&mut m.params, &cfg, REWARD_HEAD);
    // nonzero heads so their gradients are exercised
    for name in [VALUE_HEAD, REWARD_HEAD] {
        let w = m.params.get_mut(&format!("{name}.w")).unwrap();
        for (i, v) in w.data.iter_mut().enumerate() {
            *v = 0.05 * ((i % 7) as f64 - 3.0);
        }
    }
    m
}

#[test]
fn sft_cross_entropy_gradient() {
    let m = common::model(2, 16, 128, 11);
    let ex = SftExample {
        prompt: encode_prompt(&m.tokenizer, "Print in0 plus 1.").unwrap(),
        completion: encode_completion(&m.tokenizer, "print(in0 + 1);").unwrap(),
    };
    let report = grad_check(
        &m.params,
        |g, p, b| {
            let mut tokens = ex.prompt.clone();
            tokens.extend_from_slice(&ex.completion);
            let h = perfalign::model::transformer::hidden_on_graph(g, &m.config, p, b, &tokens).unwrap();
            let lp = perfalign::model::transformer::token_logprobs_on_graph(g, p, b, h, &tokens, ex.prompt.len());
            let s = g.sum(lp);
            g.scale(s, -1.0 / ex.completion.len() as f64)
        },
        &opts(),
    );
    assert!(report.passes(TOL), "{:?}", report.worst);
}

#[test]
fn reward_ranking_loss_gradient() {
    let m = with_heads(common::model(2, 16, 128, 12)).with_role(Role::Reward);
    let rm = RewardModel::from_checkpoint(m.clone()).unwrap();
    let fast = rm.encode("Double in0.", "print(in0 * 2);").unwrap();
    let slow = rm.encode("Double in0.", "print(in0 + in0);").unwrap();
    let report = grad_check(&m.params, |g, _, b| pair_loss_on_graph(g, &m, b, &fast, &slow, 1.5).unwrap(), &opts());
    assert!(report.passes(TOL), "{:?}", report.worst);
}

#[test]
fn dpa_loss_gradient() {
    let policy = common::model(2, 16, 128, 13);
    let reference = common::model(2, 16, 128, 14);
    let t = common::triplet("Double in0.", "print(in0 * 2);", "print(in0 + in0);", Some((4.0, 10.0)));
    let pair = EncodedPair::new(&reference, &t, 2.5).unwrap();
    let report = grad_check(&policy.params, |g, _, b| dpa_loss_on_graph(g, &policy, b, &pair, 0.6).unwrap(), &opts());
    assert!(report.passes(TOL), "{:?}", report.worst);
}

fn scored_batch(policy: &Checkpoint<f64>, reference: &Checkpoint<f64>, n: usize) -> RolloutBatch {
    let problem = common::doubling_problem();
    let problems: Vec<&_> = (0..n).map(|_| &problem).collect();
    let cfg = SampleConfig { max_new_tokens: 12, ..SampleConfig::rollout(0) };
    let mut batch = rollout(policy, reference, &problems, &Backend::Minilang, None, &cfg, 5, 1).unwrap();
    for (i, s) in batch.samples.iter_mut().enumerate() {
        // vary the rewards so advantages are not all equal
        s.reward = i as f64 - 1.0;
        // pretend the rollout came from a slightly different policy
        for (j, lp) in s.old_logprobs.iter_mut().enumerate() {
            *lp += 0.3 * (((i + j) % 5) as f64 - 2.0);
        }
    }
    batch.compute_advantages(&PpoConfig::default());
    batch
}

#[test]
fn ppo_surrogate_gradient() {
    let policy = with_heads(common::model(2, 16, 128, 15));
    let batch = scored_batch(&policy, &policy, 2);
    let cfg = PpoConfig::default();
    for sample in &batch.samples {
        let report = grad_check(
            &policy.params,
            |g, _, b| {
                let (pl, vl) = ppo_loss_on_graph(g, &policy, b, sample, &cfg, 1.0).unwrap();
                g.add(pl, vl)
            },
            &opts(),
        );
        assert!(report.passes(TOL), "{:?}", report.worst);
    }
}

#[test]
fn ppo_objective_uses_the_pessimistic_ratio() {
    let mut policy = with_heads(common::model(1, 16, 128, 16));
    let reference = policy.clone();
    let batch = scored_batch(&policy, &reference, 4);
    let cfg = PpoConfig { clip_eps: 0.2, adam: AdamConfig::with_lr(1e-2), ..PpoConfig::default() };
    let mut opt = Adam::new(cfg.adam, &policy.params);
    let ref_before = reference.clone();
    let mut seen_clipped = false;
    for _ in 0..3 {
        let stats = ppo_step(&mut policy, &mut opt, &batch, &cfg, 1, true).unwrap();
        assert_eq!(stats.traces.len(), batch.tokens());
        for t in &stats.traces {
            assert!(t.clipped_ratio >= 1.0 - cfg.clip_eps - 1e-15 && t.clipped_ratio <= 1.0 + cfg.clip_eps + 1e-15);
            let used = t.objective / t.advantage;
            let pessimistic = (t.ratio * t.advantage).min(t.clipped_ratio * t.advantage);
            assert_eq!(t.objective, pessimistic);
            if t.advantage != 0.0 {
                let in_band = used >= 1.0 - cfg.clip_eps - 1e-12 && used <= 1.0 + cfg.clip_eps + 1e-12;
                let unclipped_worse = (used - t.ratio).abs() < 1e-12 && t.ratio * t.advantage <= t.clipped_ratio * t.advantage;
                assert!(in_band || unclipped_worse, "{t:?}");
            }
            seen_clipped |= t.ratio != t.clipped_ratio;
        }
    }
    assert!(seen_clipped);
    assert_eq!(reference, ref_before);
}

#[test]
fn untrained_models_score_zero_under_strict_comparison() {
    let sft = common::model(1, 16, 128, 17);
    let triplets = vec![
        common::triplet("Double in0.", "print(in0 * 2);", "print(in0 + in0);", Some((4.0, 10.0))),
        common::triplet("Print 3.", "print(3);", "x = 3; print(x);", None),
    ];
    assert_eq!(dpa_accuracy(&sft, &sft, &triplets).unwrap(), 0.0);
    let rm = RewardModel::from_base(&sft);
    assert_eq!(reward_accuracy(&rm, &triplets).unwrap(), 0.0);
}

#[test]
fn rlpf_zero_epochs_returns_the_sft_parameters() {
    let sft = common::model(1, 16, 128, 18);
    let problems = vec![common::doubling_problem()];
    let cfg = RlpfConfig { epochs: 0, ..Default::default() };
    let out = rlpf_train(&sft, &problems, &Backend::Minilang, None, &cfg).unwrap();
    assert_eq!(out.ckpt.params, sft.params);
    assert_eq!(out.ckpt.role, Role::Rlpf);
    assert!(out.history.is_empty());
}

#[test]
fn rlpf_is_reproducible_and_keeps_kl_finite() {
    let sft = common::model(1, 16, 128, 19);
    let problems = vec![common::doubling_problem(); 4];
    let cfg = RlpfConfig {
        epochs: 2,
        batch_size: 2,
        sample: SampleConfig { max_new_tokens: 16, ..SampleConfig::rollout(0) },
        ppo: PpoConfig { adam: AdamConfig::with_lr(1e-3), ..Default::default() },
        ..Default::default()
    };
    let a = rlpf_train(&sft, &problems, &Backend::Minilang, None, &cfg).unwrap();
    let b = rlpf_train(&sft, &problems, &Backend::Minilang, None, &RlpfConfig { workers: 2, ..cfg }).unwrap();
    assert_eq!(a.ckpt, b.ckpt);
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 4);
    assert!(a.history.iter().all(|h| h.kl_estimate.is_finite()));
    assert!(!a.ckpt.params.contains(&format!("{VALUE_HEAD}.w")));
    assert_eq!(a.epoch_rewards().len(), 2);
}

#[test]
fn dpa_training_separates_fast_from_slow() {
    let sft = common::model(1, 16, 128, 20);
    let triplets: Vec<_> = (2..8)
        .map(|c| {
            common::triplet(
                &format!("Print in0 times {c}."),
                &format!("print(in0 * {c});"),
                &format!("s = 0; i = 0; while (i < {c}) {{ s = s + in0; i = i + 1; }} print(s);"),
                Some((4.0, 40.0)),
            )
        })
        .collect();
    let cfg = DpaConfig { adam: AdamConfig::with_lr(1e-3), epochs: 3, batch_size: 2, ..Default::default() };
    let (policy, log) = dpa_train(&sft, &triplets, &cfg).unwrap();
    assert_eq!(policy.role, Role::Dpa);
    assert!(log.last().unwrap().loss < log[0].loss);
    assert_eq!(dpa_accuracy(&policy, &sft, &triplets).unwrap(), 1.0);
}
