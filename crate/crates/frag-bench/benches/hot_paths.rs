//! Benchmarks for the per-frame hot paths: selection over large score
//! vectors, index sampling, score extraction, and the text metrics.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use frag_bench::synthetic_frames;
use frag_core::backend::TokenLogprob;
use frag_core::media::uniform_indices;
use frag_core::metrics::{anls_score, levenshtein, word_f1};
use frag_core::scoring::{extract_score, ScoreMode, TokenDistribution};
use frag_core::selection::{select_top_k, SelectionConfig};

fn bench_select_top_k(c: &mut Criterion) {
    let mut group = c.benchmark_group("select_top_k");
    for len in [256usize, 1024, 4096] {
        let frames = synthetic_frames(len, 7);
        group.throughput(Throughput::Elements(len as u64));
        group.bench_with_input(BenchmarkId::new("k32", len), &frames, |b, frames| {
            b.iter(|| select_top_k(black_box(frames), SelectionConfig::new(32, frames.len())));
        });
    }
    group.finish();
}

fn bench_uniform_indices(c: &mut Criterion) {
    c.bench_function("uniform_indices_t1e6_n256", |b| {
        b.iter(|| uniform_indices(black_box(1_000_000), black_box(256)));
    });
}

fn bench_extract_score(c: &mut Criterion) {
    let dist = TokenDistribution::new(
        [("A", 0.58), ("B", 0.31), ("C", 0.06), ("D", 0.03), ("E", 0.02)]
            .iter()
            .map(|(token, p): &(&str, f64)| TokenLogprob {
                token: token.to_string(),
                logprob: p.ln(),
            })
            .collect(),
    );
    c.bench_function("extract_score_top5", |b| {
        b.iter(|| extract_score(black_box(&dist), ScoreMode::Renormalized));
    });
}

fn bench_text_metrics(c: &mut Criterion) {
    let prediction = "the delivery van parked outside the western warehouse entrance";
    let truths = vec![
        "a delivery van parked outside the western warehouse entrance".to_string(),
        "the van stopped near the warehouse".to_string(),
        "van at the west entrance".to_string(),
    ];
    c.bench_function("levenshtein_62x60", |b| {
        b.iter(|| levenshtein(black_box(prediction), black_box(&truths[0])));
    });
    c.bench_function("anls_3_truths", |b| {
        b.iter(|| anls_score(black_box(prediction), black_box(&truths)));
    });
    c.bench_function("word_f1_3_truths", |b| {
        b.iter(|| word_f1(black_box(prediction), black_box(&truths)));
    });
}

criterion_group!(
    benches,
    bench_select_top_k,
    bench_uniform_indices,
    bench_extract_score,
    bench_text_metrics
);
criterion_main!(benches);
