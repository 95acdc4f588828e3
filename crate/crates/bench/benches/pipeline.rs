use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pinshape_bench::{full_scene, SQUARE};
use pinshape_core::llm::FALLBACK_EMBEDDING_MODEL;
use pinshape_core::{sim, Gateway, HeightField, RagStore, PIN_COUNT, ScriptCategory, WireFrame, DEFAULT_TOP_K};

fn scene_step(c: &mut Criterion) {
    let mut scene = full_scene();
    c.bench_function("scene_step", |b| b.iter(|| scene.step(black_box(1.0 / 30.0)).unwrap()));
}

fn wire(c: &mut Criterion) {
    let mut field = HeightField::zeros();
    for i in 0..PIN_COUNT {
        field.set(i, (i % 101) as f64).unwrap();
    }
    c.bench_function("wire_encode", |b| b.iter(|| WireFrame::encode(black_box(&field))));
    let frame = WireFrame::encode(&field);
    c.bench_function("wire_decode", |b| b.iter(|| black_box(&frame).decode()));
}

fn retrieval(c: &mut Criterion) {
    let store = RagStore::seeded(Gateway::replay(std::env::temp_dir()), FALLBACK_EMBEDDING_MODEL).unwrap();
    c.bench_function("top_k_primitive", |b| {
        b.iter(|| store.top_k(ScriptCategory::Primitive, black_box("a rotating heart"), DEFAULT_TOP_K).unwrap())
    });
}

fn compile(c: &mut Criterion) {
    c.bench_function("compile_check_square", |b| {
        b.iter(|| sim::compile_check(black_box(SQUARE), ScriptCategory::Primitive).unwrap())
    });
}

criterion_group!(benches, scene_step, wire, retrieval, compile);
criterion_main!(benches);
