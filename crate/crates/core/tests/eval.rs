mod support;

use pinshape_core::eval::{parse_corpus, Evaluator, DEFAULT_CORPUS};
use pinshape_core::{EvalReport, Gateway, PipelineVariant};
use support::*;

fn run(gateway: Gateway, variant: PipelineVariant, prompts: &[String]) -> EvalReport {
    let engine = (*engine(gateway)).clone();
    Evaluator::new(engine, variant).with_jobs(3).run(prompts).unwrap()
}

#[test]
fn full_variant_all_compiling_scores_one() {
    let t = eval_transport(false);
    let report = run(Gateway::live(t), PipelineVariant::Full, &eval_prompts());
    assert_eq!(report.n, 6);
    assert_eq!(report.success_rate, 1.0);
    let m: Vec<_> = report.per_sample.iter().map(|s| s.m_i).collect();
    assert_eq!(m, [3, 3, 3, 3, 1, 1]);
    // 4 helper calls + 3 generators, or 3 helper calls (no validation) + 1 generator.
    assert_eq!(report.latencies.len(), 4 * 7 + 2 * 4);
    assert!(report.latency_is_physical);
}

#[test]
fn failing_animation_matches_hand_arithmetic() {
    let t = eval_transport(true);
    let report = run(Gateway::live(t), PipelineVariant::Full, &eval_prompts());
    for s in &report.per_sample[..4] {
        assert_eq!(s.s_ij, [1, 0, 1]);
        assert!(s.errors[0].contains("heart stopped"));
    }
    // (4 * 2/3 + 2 * 1) / 6
    let expected = (4.0 * (2.0 / 3.0) + 2.0) / 6.0;
    assert!((report.success_rate - expected).abs() < 1e-12);
}

#[test]
fn segmentation_variant_skips_parameter_chains() {
    let t = eval_transport(false);
    let report = run(Gateway::live(t.clone()), PipelineVariant::Segmentation, &eval_prompts());
    assert_eq!(report.success_rate, 1.0);
    assert!(t.requests().iter().all(|(_, m)| !m[0].content.contains(GEN) && !m[0].content.contains(INS)));
    let m: Vec<_> = report.per_sample.iter().map(|s| s.m_i).collect();
    assert_eq!(m, [3, 3, 3, 3, 1, 1]);
}

#[test]
fn baseline_variants_use_one_generator_call() {
    for variant in [PipelineVariant::Baseline, PipelineVariant::BaselineRag] {
        let t = eval_transport(false);
        let report = run(Gateway::live(t.clone()), variant, &eval_prompts());
        assert!(report.per_sample.iter().all(|s| s.m_i == 1));
        assert_eq!(report.success_rate, 1.0);
        assert_eq!(t.chat_calls(), 6);
        let first = &t.requests()[0].1;
        assert_eq!(first.len(), 1 + 2 * 3 + 1);
        if variant == PipelineVariant::Baseline {
            assert!(first[1].content.contains("Generate a customizable square shape"));
            assert!(first[4].content.contains("\"type\": \"animation\""));
        }
    }
}

#[test]
fn replay_misses_score_zero_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let t = eval_transport(false);
    let prompts = eval_prompts();
    run(Gateway::record(t, dir.path()), PipelineVariant::Full, &prompts[..5]);

    let report = run(Gateway::replay(dir.path()), PipelineVariant::Full, &prompts);
    assert_eq!(report.n, 6);
    assert!(!report.latency_is_physical);
    assert_eq!(report.per_sample[..5].iter().map(|s| s.score()).sum::<f64>(), 5.0);
    let missed = &report.per_sample[5];
    assert_eq!(missed.s_ij, [0]);
    assert!(!missed.errors.is_empty());
    assert!((report.success_rate - 5.0 / 6.0).abs() < 1e-12);
}

#[test]
fn shipped_corpus_has_fifty_prompts() {
    assert_eq!(parse_corpus(DEFAULT_CORPUS).len(), 50);
}
