use std::process::Command;
use std::sync::Arc;

use pinshape_core::llm::{Match, ScriptedTransport, FALLBACK_EMBEDDING_MODEL};
use pinshape_core::{Engine, EngineConfig, EvalReport, Evaluator, Gateway, ModelConfig, PipelineVariant};
use serde_json::json;

const HEART: &str = include_str!("../../core/tests/fixtures/scripts/heart_primitive.js");

#[test]
fn replayed_baseline_run_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures");
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, "a heart\n\na bigger heart\n").unwrap();

    let t = Arc::new(ScriptedTransport::new());
    t.on(
        Match::system("create primitives"),
        json!({"type": "primitive", "message": "Created a heart", "content": HEART}).to_string(),
    );
    let config = EngineConfig {
        embedding_model: FALLBACK_EMBEDDING_MODEL.into(),
        ..EngineConfig::from_models(&ModelConfig::default())
    };
    let engine = Engine::seeded(Gateway::record(t, &fixtures), config).unwrap();
    let prompts = vec!["a heart".to_string(), "a bigger heart".to_string()];
    Evaluator::new(engine, PipelineVariant::Baseline).run(&prompts).unwrap();

    let out = dir.path().join("report.json");
    let status = Command::new(env!("CARGO_BIN_EXE_pinshape"))
        .args(["eval", "run", "--variant", "baseline", "--mode", "replay", "--jobs", "2"])
        .arg("--corpus")
        .arg(&corpus)
        .arg("--fixtures")
        .arg(&fixtures)
        .arg("--out")
        .arg(&out)
        .env_remove("PINSHAPE_MODE")
        .status()
        .unwrap();
    assert!(status.success());
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.n, 2);
    assert_eq!(report.success_rate, 1.0);
    assert!(!report.latency_is_physical);
}

#[test]
fn check_prints_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("heart.js");
    std::fs::write(&file, HEART).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pinshape")).arg("check").arg(&file).output().unwrap();
    assert!(out.status.success());
    let params: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(params["heartScale"], 8.0);

    std::fs::write(&file, "function initializeParams() { return {}; }").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pinshape")).arg("check").arg(&file).output().unwrap();
    assert!(!out.status.success());
}
