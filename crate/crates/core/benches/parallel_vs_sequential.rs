//! Parallel and sequential execution of the three data-parallel hot paths:
//! batch gradients, corpus prediction and corpus evaluation.
//!
//! Build with `--no-default-features` to measure the pure sequential build;
//! both modes then run the same code.

use std::hint::black_box;

use coauthor_core::corpus::{CaseKind, Document, Label};
use coauthor_core::crf::{nll_and_grad, Sequence, TrainConfig};
use coauthor_core::evaluation::{evaluate_corpus, EvalOptions};
use coauthor_core::pipeline::{predict_corpus, to_sequence, train_corpus, PredictOptions};
use coauthor_core::synthesis::{
    compose_corpus, mock, mock_sources, Generator, MarkovStyle, MockGenerator, SynthesisConfig,
};
use coauthor_core::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn corpus(n: usize) -> Vec<Document> {
    let style = MarkovStyle::new(mock::HUMAN_STYLE_SEED, mock::DEFAULT_DIVERGENCE);
    let sources: Vec<Document> = mock_sources(n, 60, 160, &style, 1)
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            Document::single(
                format!("b{i}"),
                "en",
                CaseKind::Human,
                None,
                t,
                Label::Human,
            )
            .unwrap()
        })
        .collect();
    let gens: Vec<Box<dyn Generator>> = vec![Box::new(MockGenerator::numbered(0))];
    compose_corpus(&sources, &gens, &SynthesisConfig::default())
        .unwrap()
        .samples
        .into_iter()
        .map(|s| s.into_document())
        .collect()
}

fn benches(c: &mut Criterion) {
    let docs = corpus(400);
    let train_cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    let (model, _) = train_corpus(&docs, &train_cfg, Execution::Parallel).unwrap();
    let seqs: Vec<Sequence> = docs.iter().map(|d| to_sequence(d).unwrap()).collect();

    let mut g = c.benchmark_group("gradient");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, seqs.len()), |b| {
            b.iter(|| black_box(nll_and_grad(&model, &seqs, 1e-4, exec).unwrap().0))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("predict");
    let opts = PredictOptions::default();
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, docs.len()), |b| {
            b.iter(|| black_box(predict_corpus(&model, &docs, &opts, exec).len()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("evaluate");
    for (name, exec) in MODES {
        let opts = EvalOptions {
            exec,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::new(name, docs.len()), |b| {
            b.iter(|| {
                black_box(
                    evaluate_corpus(&model, &docs, &opts)
                        .unwrap()
                        .unit_total()
                        .tp,
                )
            })
        });
    }
    g.finish();
}

criterion_group! {
    name = parallel_vs_sequential;
    config = Criterion::default().sample_size(10);
    targets = benches
}
criterion_main!(parallel_vs_sequential);
