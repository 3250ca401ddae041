//! Benchmarks for the hot paths: boundary queries, gradient kernels,
//! pseudo-open synthesis and inference.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::Rng;

use elidecide_core::{
    aniso_k4, axis_decomposition, generate, gram, loss_gradient, predict, radius,
    sample_dirichlet, scl_loss, substream, synthesize_batch, train_boundaries, Ellipsoid,
    GradientDiagnostics, GradientKind, LabeledSample, Matrix, MixConfig, TrainConfig,
};

fn random_ellipsoid(n: usize, seed: u64) -> Ellipsoid {
    let mut rng = substream(seed, "bench");
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let base = if i == j { 1.0 } else { 0.0 };
                    base + 0.3 * (rng.random::<f64>() - 0.5)
                })
                .collect()
        })
        .collect();
    let centroid: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    Ellipsoid::new(centroid, Matrix::from_rows(&rows).unwrap(), 1.0).unwrap()
}

fn bench_geometry(c: &mut Criterion) {
    let e = random_ellipsoid(32, 1);
    let z: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
    c.bench_function("radius_n32", |b| {
        b.iter(|| radius(black_box(&e), black_box(&z)).unwrap())
    });
    c.bench_function("gram_n32", |b| b.iter(|| gram(black_box(&e.matrix))));
    c.bench_function("axis_decomposition_n32", |b| {
        b.iter(|| axis_decomposition(black_box(&e)).unwrap())
    });
}

fn bench_gradients(c: &mut Criterion) {
    let e = random_ellipsoid(8, 2);
    let z: Vec<f64> = e.centroid.iter().map(|c| c + 0.8).collect();
    c.bench_function("loss_gradient_n8", |b| {
        b.iter(|| {
            let mut diag = GradientDiagnostics::default();
            loss_gradient(
                black_box(&e),
                black_box(&z),
                GradientKind::Contraction,
                0.5,
                &mut diag,
            )
            .unwrap()
        })
    });
}

fn bench_synthesis(c: &mut Criterion) {
    let (known, open) = aniso_k4(0);
    let splits = generate(&known, &open, 0).unwrap();
    let cfg = MixConfig::default();
    c.bench_function("dirichlet_p3", |b| {
        let mut rng = substream(3, "bench");
        b.iter(|| sample_dirichlet(black_box(0.6), 3, &mut rng))
    });
    c.bench_function("synthesize_batch_64", |b| {
        let mut rng = substream(4, "bench");
        b.iter(|| synthesize_batch(black_box(&splits.train), 64, &cfg, &mut rng).unwrap())
    });
}

fn bench_inference(c: &mut Criterion) {
    let (known, open) = aniso_k4(0);
    let splits = generate(&known, &open, 0).unwrap();
    let out = train_boundaries(
        &splits.train,
        &splits.val,
        &TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let probes: Vec<Vec<f64>> = splits
        .test
        .samples
        .iter()
        .take(256)
        .map(|s| s.embedding.values.clone())
        .collect();
    c.bench_function("predict_256_probes", |b| {
        b.iter(|| {
            for z in &probes {
                black_box(predict(&out.boundaries, z).unwrap());
            }
        })
    });
}

fn bench_contrastive(c: &mut Criterion) {
    let mut rng = substream(5, "bench");
    let batch: Vec<LabeledSample> = (0..64)
        .map(|i| {
            let v: Vec<f64> = (0..8).map(|_| rng.random::<f64>() - 0.5).collect();
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            LabeledSample::new(
                v.into_iter().map(|x| x / nrm).collect::<Vec<f64>>(),
                i % 4,
            )
        })
        .collect();
    c.bench_function("scl_loss_batch64_n8", |b| {
        b.iter(|| scl_loss(black_box(&batch), 0.07).unwrap())
    });
}

criterion_group!(
    benches,
    bench_geometry,
    bench_gradients,
    bench_synthesis,
    bench_inference,
    bench_contrastive
);
criterion_main!(benches);
