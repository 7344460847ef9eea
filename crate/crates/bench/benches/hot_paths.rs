use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use lossless_hedge::combiner::build_multiscale_tree;
use lossless_hedge::{derive_params, ConfidenceParams, PredictorState, Schedule, Variant};

fn predictor_step(c: &mut Criterion) {
    let params = derive_params(1e4, 0.05).unwrap();
    let mut g = c.benchmark_group("predictor_step");
    g.bench_function("with_potential", |b| {
        let mut st = PredictorState::new(params, Schedule::constant(&params)).unwrap();
        let mut sign = 1.0;
        b.iter(|| {
            sign = -sign;
            black_box(st.step(black_box(sign)).unwrap());
        });
    });
    g.bench_function("without_potential", |b| {
        let mut st = PredictorState::new(params, Schedule::constant(&params))
            .unwrap()
            .without_potential();
        let mut sign = 1.0;
        b.iter(|| {
            sign = -sign;
            black_box(st.step(black_box(sign)).unwrap());
        });
    });
    g.finish();
}

fn tree_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("multiscale_tree_step");
    for n in [3usize, 10, 30] {
        let t = 1 << 14;
        let z = ((n * t) as f64).powi(-2);
        let mut tree = build_multiscale_tree(n, t, z).unwrap();
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|k| (0..n).map(|i| if (k + i) % 3 == 0 { 1.0 } else { -0.5 }).collect())
            .collect();
        let mut w = vec![0.0; n];
        let mut k = 0;
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                k = (k + 1) % rows.len();
                black_box(tree.step_into(&rows[k], &mut w).unwrap());
            });
        });
    }
    g.finish();
}

fn potential(c: &mut Criterion) {
    let mut g = c.benchmark_group("potential");
    for v in [Variant::StepExp, Variant::RampExp] {
        let p = ConfidenceParams::new(1e-6, 100.0, 1e4, v).unwrap();
        let xs: Vec<f64> = (0..256)
            .map(|i| -p.u() * 1.2 + 2.4 * p.u() * i as f64 / 255.0)
            .collect();
        g.bench_function(format!("{v:?}"), |b| {
            b.iter(|| xs.iter().map(|&x| p.potential(black_box(x))).sum::<f64>());
        });
    }
    g.finish();
}

criterion_group!(benches, predictor_step, tree_step, potential);
criterion_main!(benches);
