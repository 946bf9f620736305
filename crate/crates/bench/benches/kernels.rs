use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use idrate::dimension::sample_blocks;
use idrate::rd::EigenSpectrum;
use idrate::suite;
use idrate::{
    block_entropy, exact_cell_entropy, quantize, rank_integral, sample_paths_spectral, welch_psd,
    FrequencyGrid, RankTolerance, WelchSettings,
};
use std::hint::black_box;

fn spectral(c: &mut Criterion) {
    let grid = FrequencyGrid::default();
    let pair = suite::independent_half_band().unwrap();
    c.bench_function("rank_integral/bivariate/4096", |b| {
        b.iter(|| rank_integral(black_box(&pair), &grid, RankTolerance::default()).unwrap())
    });
    let spec = EigenSpectrum::from_model(&pair, &grid).unwrap();
    c.bench_function("waterfill/bivariate/4096", |b| {
        b.iter(|| spec.waterfill(black_box(1e-6)).unwrap())
    });
}

fn sampling(c: &mut Criterion) {
    let band = suite::band_04().unwrap();
    let grid = FrequencyGrid::new(8192).unwrap();
    c.bench_function("sample_spectral/k4096/R20", |b| {
        b.iter(|| sample_paths_spectral(&band, &grid, 4096, 20, black_box(1)).unwrap())
    });
    c.bench_function("sample_dense/k2/R100000", |b| {
        b.iter(|| sample_blocks(&band, 2, 100_000, black_box(1)).unwrap())
    });
    let batch = sample_paths_spectral(&band, &grid, 4096, 20, 1).unwrap();
    c.bench_function("welch/k4096/R20", |b| {
        b.iter(|| welch_psd(black_box(&batch), WelchSettings::default()).unwrap())
    });
}

fn entropy(c: &mut Criterion) {
    let white = suite::white().unwrap();
    c.bench_function("plugin_entropy/k1/R100000/m64", |b| {
        b.iter_batched(
            || quantize(&sample_blocks(&white, 1, 100_000, 3).unwrap(), 64).unwrap(),
            |q| block_entropy(&q, true).unwrap(),
            BatchSize::LargeInput,
        )
    });
    let band = suite::band_04().unwrap();
    c.bench_function("exact_cell_entropy/k3/m2", |b| {
        b.iter(|| exact_cell_entropy(black_box(&band), 3, 2).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = spectral, sampling, entropy
}
criterion_main!(benches);
