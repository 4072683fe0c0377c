mod oracles;

use std::sync::Arc;

use gazedwell::engine::EngineConfig;
use gazedwell::sim::{
    grid, replay, synth_trials, GridSpec, PolicyEvalResult, PostSelectNoise, SynthConfig, TrialOutcome, TrialRecord,
};
use gazedwell::trace::{load_trials, read_trials, save_trials, trial_to_line, write_trials, TraceHeader};
use gazedwell::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn models() -> ModelParams {
    ModelParams::fixture()
}

fn corpus(n: usize, seed: u64) -> Vec<TrialRecord> {
    synth_trials(&SynthConfig { n_trials: n, seed, ..Default::default() }, &models()).unwrap()
}

fn some_policies() -> Vec<PolicyParams> {
    vec![
        PolicyParams::uniform(100.0).unwrap(),
        PolicyParams::uniform(300.0).unwrap(),
        PolicyParams::new(500.0, 16.67, 16.67, 1.0).unwrap(),
        PolicyParams::new(500.0, 16.67, 50.0, 0.5).unwrap(),
        PolicyParams::new(400.0, 100.0, 300.0, 0.6).unwrap(),
        PolicyParams::new(250.0, 33.34, 33.34, 0.0).unwrap(),
    ]
}

#[test]
fn synth_is_deterministic() {
    let a = corpus(30, 5);
    let b = corpus(30, 5);
    let c = corpus(30, 6);
    let bytes = |t: &[TrialRecord]| {
        let mut v = Vec::new();
        write_trials(&mut v, t).unwrap();
        v
    };
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
    for t in &a {
        t.validate().unwrap();
    }
}

#[test]
fn synth_rejects_bad_config() {
    let bad = SynthConfig { n_trials: 0, ..Default::default() };
    assert!(synth_trials(&bad, &models()).is_err());
    let bad = SynthConfig { link_fill: 1.5, ..Default::default() };
    assert!(synth_trials(&bad, &models()).is_err());
}

#[test]
fn table_replay_matches_live_engine() {
    let trials = corpus(120, 17);
    let m = Arc::new(models());
    for strict in [false, true] {
        for quantization in [Quantization::PerSample, Quantization::Coarse(3)] {
            let mut cfg = EngineConfig { quantization, strict_button_dwell: strict, ..Default::default() };
            let prepared = replay::prepare_trials(&trials, &m, &cfg).unwrap();
            for policy in some_policies() {
                cfg.policy = policy;
                for (t, p) in trials.iter().zip(&prepared) {
                    let (live, _) = replay::replay_with_engine(t, m.clone(), &cfg).unwrap();
                    assert_eq!(live, p.outcome(&policy, quantization).unwrap(), "{policy} {:?}", t.meta);
                }
            }
        }
    }
}

#[test]
fn uniform_policy_ignores_the_posterior() {
    let trials = corpus(80, 3);
    let cfg = EngineConfig::default();
    let prepared = replay::prepare_trials(&trials, &models(), &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scrambled: Vec<_> = prepared
        .iter()
        .map(|p| {
            let w: Vec<f64> = (0..p.posterior.len()).map(|_| rng.gen::<f64>()).collect();
            let z: f64 = w.iter().sum();
            p.with_posterior(IntentPosterior { probs: w.iter().map(|x| x / z).collect() })
        })
        .collect();
    for t in [100.0, 300.0, 500.0] {
        let pol = PolicyParams::uniform(t).unwrap();
        let a = replay::evaluate_policy(&prepared, &pol, cfg.quantization).unwrap();
        let b = replay::evaluate_policy(&scrambled, &pol, cfg.quantization).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn metrics_do_not_depend_on_trial_order() {
    let mut trials = corpus(80, 4);
    let cfg = EngineConfig::default();
    let m = models();
    let before: Vec<_> = some_policies().iter().map(|p| sim::simulate_policy(&trials, p, &m, &cfg).unwrap()).collect();
    trials.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let after: Vec<_> = some_policies().iter().map(|p| sim::simulate_policy(&trials, p, &m, &cfg).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn noiseless_corpus_has_no_errors() {
    let cfg = SynthConfig { n_trials: 60, seed: 8, post: PostSelectNoise::noiseless(), ..Default::default() };
    let trials = synth_trials(&cfg, &models()).unwrap();
    let ecfg = EngineConfig::default();
    let prepared = replay::prepare_trials(&trials, &models(), &ecfg).unwrap();
    let policies = GridSpec::stepped(30, 3, 5).policies().unwrap();
    let rows = grid::grid_search(&prepared, &policies, ecfg.quantization, true).unwrap();
    assert!(rows.iter().all(|r| r.errors == 0 && r.timeouts == 0));
    let mut uniform: Vec<_> = rows.iter().filter(|r| r.policy.is_uniform()).collect();
    uniform.sort_by(|a, b| a.policy.t_max.total_cmp(&b.policy.t_max));
    assert!(uniform.windows(2).all(|w| w[1].error_rate <= w[0].error_rate));
}

fn hand_trial(post: Vec<Point>) -> TrialRecord {
    let layout = PageLayout::from_boxes(
        DEFAULT_SCREEN,
        [BoundingBox::new(100.0, 100.0, 80.0, 18.0).unwrap(), BoundingBox::new(100.0, 400.0, 80.0, 18.0).unwrap()],
    )
    .unwrap();
    let select = gazedwell::engine::default_task_bar(DEFAULT_SCREEN)[1].bbox.center();
    let mut pre: Vec<GazeSample> = (0..30).map(|t| GazeSample::new(t, 140.0, 109.0)).collect();
    pre.extend((30..54).map(|t| GazeSample { t, point: select }));
    let post_select = post.into_iter().enumerate().map(|(i, p)| GazeSample { t: 56 + i as u64, point: p }).collect();
    TrialRecord { layout, pre_select: pre, post_select, true_target: 2, meta: Default::default() }
}

#[test]
fn steady_gaze_on_target_is_always_correct() {
    let trial = hand_trial(vec![Point::new(140.0, 409.0); 40]);
    let cfg = EngineConfig::default();
    for policy in some_policies() {
        let r = sim::simulate_policy(std::slice::from_ref(&trial), &policy, &models(), &cfg).unwrap();
        assert_eq!(r.errors, 0);
        let n = policy.t_max.max(policy.t_min) / SAMPLE_PERIOD_MS;
        assert!(r.mean_response_time_ms <= n.ceil() * SAMPLE_PERIOD_MS);
    }
}

#[test]
fn timeouts_are_errors_without_response_time() {
    let far = hand_trial(vec![Point::new(800.0, 800.0); 40]);
    let near = hand_trial(vec![Point::new(140.0, 409.0); 40]);
    let cfg = EngineConfig::default();
    let pol = PolicyParams::uniform(100.0).unwrap();
    let r = sim::simulate_policy(&[far.clone(), near], &pol, &models(), &cfg).unwrap();
    assert_eq!((r.n_trials, r.errors, r.timeouts), (2, 1, 1));
    assert!((r.mean_response_time_ms - 5.0 * SAMPLE_PERIOD_MS).abs() < 1e-9);
    let only = sim::simulate_policy(&[far], &pol, &models(), &cfg).unwrap();
    assert!(only.mean_response_time_ms.is_nan());
    assert_eq!(only.error_rate, 1.0);
    assert!(sim::simulate_policy(&[], &pol, &models(), &cfg).is_err());
}

#[test]
fn grid_size_matches_direct_count() {
    let spec = GridSpec::default();
    assert_eq!(spec.times_ms.len(), 30);
    assert_eq!(spec.p_breaks.len(), 11);
    let policies = spec.policies().unwrap();
    assert_eq!(policies.len(), oracles::grid_count(30, 11));
    assert_eq!(policies.len(), 54_560);
    for k in 1..=30 {
        let t = grid::samples_to_ms(k);
        assert!(policies.iter().any(|p| p.is_uniform() && p.t_max == t));
    }
    let two = GridSpec { times_ms: vec![300.0], p_breaks: vec![0.0, 1.0] };
    assert_eq!(two.policies().unwrap().len(), 2);
}

fn row(e: f64, rt: f64) -> PolicyEvalResult {
    PolicyEvalResult {
        policy: PolicyParams::uniform(100.0).unwrap(),
        n_trials: 10,
        errors: 0,
        timeouts: 0,
        error_rate: e,
        error_ci: 0.0,
        mean_response_time_ms: rt,
        response_time_ci: 0.0,
    }
}

#[test]
fn pareto_examples_and_oracle() {
    assert_eq!(grid::pareto_frontier(&[row(0.1, 200.0)]), vec![row(0.1, 200.0)]);
    assert_eq!(grid::pareto_frontier(&[row(0.2, 300.0), row(0.1, 200.0)]), vec![row(0.1, 200.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        // coarse values so ties and duplicates occur
        let rows: Vec<_> = (0..100)
            .map(|_| row(rng.gen_range(0..10) as f64 / 10.0, rng.gen_range(0..20) as f64 * 25.0))
            .collect();
        assert_eq!(grid::pareto_frontier(&rows), oracles::pareto_pairwise(&rows));
    }
}

#[test]
fn csv_layout() {
    let mut out = Vec::new();
    grid::write_csv(&mut out, &[row(0.25, 123.456)]).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "tmax_ms,tmin_ms,tbreak_ms,pbreak,error_rate,err_ci,mean_rt_ms,rt_ci,n,timeouts");
    assert_eq!(lines.next().unwrap(), "100.000,100.000,100.000,1.00,0.250000,0.000000,123.456,0.000,10,0");
}

#[test]
fn trial_file_round_trip() {
    let trials = corpus(10, 21);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.jsonl");
    save_trials(&trials, &path).unwrap();
    assert_eq!(load_trials(&path).unwrap(), trials);
}

#[test]
fn trial_file_diagnostics() {
    let header = serde_json::to_string(&TraceHeader::default()).unwrap();
    let good = trial_to_line(&corpus(1, 2)[0]);
    let err = |text: String| read_trials(text.as_bytes(), "f.jsonl").unwrap_err().to_string();

    let e = err(format!("{header}\n{good}\n{}\n", good.replace("\"true_target\"", "\"target\"")));
    assert!(e.starts_with("f.jsonl:3:") && e.contains("true_target"), "{e}");
    let e = err(format!("{header}\n{{not json\n"));
    assert!(e.starts_with("f.jsonl:2:"), "{e}");
    let e = err(good.clone());
    assert!(e.contains("header"), "{e}");
    let e = err(header.replace("gdw-trace/1", "gdw-trace/9"));
    assert!(e.contains("unsupported version"), "{e}");
    let e = err(format!("{header}\n{}\n", good.replace("\"true_target\":", "\"true_target\":9999,\"x\":")));
    assert!(e.contains("f.jsonl:2"), "{e}");
}

#[test]
fn posterior_on_recorded_scanpath_feeds_dwells() {
    let trials = corpus(5, 12);
    let cfg = EngineConfig::default();
    for t in &trials {
        let sp = replay::pre_select_scanpath(t, &models(), &cfg).unwrap();
        let post = forward_posterior(&sp, &t.layout, &models().intent).unwrap();
        assert!((post.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let d = assign_dwells(&post, &PolicyParams::new(500.0, 16.67, 16.67, 1.0).unwrap(), Quantization::PerSample).unwrap();
        assert_eq!(d.len(), t.layout.len());
        let best = post.argmax();
        assert!(d.dwells.iter().all(|x| x.samples >= d.samples(best)));
    }
}

#[test]
fn outcomes_report_response_samples() {
    let trial = hand_trial(vec![Point::new(800.0, 800.0), Point::new(140.0, 409.0), Point::new(140.0, 409.0)]);
    let cfg = EngineConfig::default();
    let p = replay::prepare_trial(&trial, &models(), &cfg).unwrap();
    let pol = PolicyParams::uniform(2.0 * SAMPLE_PERIOD_MS).unwrap();
    assert_eq!(p.outcome(&pol, Quantization::PerSample).unwrap(), TrialOutcome::Selected { link: 2, response_samples: 2 });
}
