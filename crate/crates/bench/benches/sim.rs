use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ests_core::es_rapp::{Predictor, PredictorKind, SeasonalEwma};
use ests_core::messages::KpmReport;
use ests_core::traffic::{DiurnalConfig, INTERVALS_PER_DAY};
use ests_core::{decode, encode, run, CellId, Message};

fn bench_runs(c: &mut Criterion) {
    let s1 = ests_bench::s1();
    c.bench_function("run_s1", |b| b.iter(|| run(black_box(&s1)).unwrap()));

    let s2 = ests_bench::s2_days(1);
    let mut g = c.benchmark_group("s2");
    g.sample_size(10);
    g.bench_function("run_one_day", |b| b.iter(|| run(black_box(&s2)).unwrap()));
    g.finish();
}

fn bench_predictor(c: &mut Criterion) {
    let cfg = DiurnalConfig::default();
    let history: Vec<f64> = (0..7 * INTERVALS_PER_DAY).map(|i| cfg.mean_utilization(1, i)).collect();
    let p = SeasonalEwma::default();
    c.bench_function("seasonal_ewma_h1", |b| {
        b.iter(|| p.predict(black_box(&history), 1).unwrap())
    });
    let boxed = PredictorKind::SeasonalEwma.build();
    c.bench_function("seasonal_ewma_h96", |b| {
        b.iter(|| boxed.predict(black_box(&history), 96).unwrap())
    });
}

fn bench_codec(c: &mut Criterion) {
    let msg = Message::KpmReport(KpmReport {
        ts: 900,
        cell: CellId {
            site: 3,
            sector: 1,
            band: 2,
        },
        prb_utilization: 0.4375,
        rrc_count: 14,
    });
    let line = encode(&msg).unwrap();
    c.bench_function("encode_kpm", |b| b.iter(|| encode(black_box(&msg)).unwrap()));
    c.bench_function("decode_kpm", |b| {
        b.iter_batched(|| line.clone(), |l| decode(&l).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(sim, bench_runs);
criterion_group!(parts, bench_predictor, bench_codec);
criterion_main!(sim, parts);
