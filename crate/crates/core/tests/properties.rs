use idrate::dimension::{sample_blocks, SlopeSettings};
use idrate::entropy::{block_law, cell_probabilities, exact_cell_entropy_gaussian, kl_bound_check};
use idrate::suite;
use idrate::{
    block_entropy, corollary_bound, eval_spectrum, idr_slope_estimate, properness_check, quantize,
    rank_integral, welch_psd, Band, FrequencyGrid, RankTolerance, SpectralMatrix, SpectralModel,
    WelchSettings,
};
use num_complex::Complex64;
use proptest::prelude::*;
use std::collections::HashMap;

/// `B Bᴴ` for an `L × r` factor.
fn gram(l: usize, factor: &[Complex64]) -> SpectralMatrix {
    let r = factor.len() / l;
    let b = SpectralMatrix::from_row_slice(l, r, factor);
    &b * b.adjoint()
}

fn real_factor(l: usize) -> impl Strategy<Value = Vec<Complex64>> {
    (0..=l).prop_flat_map(move |r| {
        prop::collection::vec((-2.0f64..2.0).prop_map(|v| Complex64::new(v, 0.0)), l * r)
    })
}

/// Real-symmetric band models: a central band `[-c1, c1)` and disjoint
/// pairs `±[c_{i-1}, c_i)`, each with its own density.
fn real_model() -> impl Strategy<Value = SpectralModel> {
    (1usize..=3, 1usize..=3).prop_flat_map(|(l, n)| {
        (
            prop::collection::vec(0.005f64..0.495, n),
            prop::collection::vec(real_factor(l), n),
        )
            .prop_map(move |(mut cuts, fs)| {
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let mut bands = Vec::new();
                let mut lo = 0.0;
                for (c, f) in cuts.iter().zip(&fs) {
                    let d = gram(l, f);
                    if lo == 0.0 {
                        bands.push(Band::new(-c, *c, d));
                    } else {
                        bands.push(Band::new(-c, -lo, d.clone()));
                        bands.push(Band::new(lo, *c, d));
                    }
                    lo = *c;
                }
                SpectralModel::new(l, bands, vec![], vec![], None).unwrap()
            })
    })
}

/// Bivariate `(Re Z, Im Z)` models with a general Hermitian density on
/// `(0, h)` and its conjugate on `(-h, 0)`.
fn complex_model() -> impl Strategy<Value = SpectralModel> {
    (0.01f64..0.5, 0usize..=2).prop_flat_map(|(h, r)| {
        prop::collection::vec(
            (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| Complex64::new(a, b)),
            2 * r,
        )
        .prop_map(move |f| {
            let m = gram(2, &f);
            SpectralModel::new(
                2,
                vec![Band::new(-h, 0.0, m.conjugate()), Band::new(0.0, h, m)],
                vec![],
                vec![],
                None,
            )
            .unwrap()
        })
    })
}

fn proper_model() -> impl Strategy<Value = SpectralModel> {
    (0.01f64..0.5, 0.0f64..2.0, -1.0f64..1.0).prop_map(|(h, a, q)| suite_proper(h, a, a * q))
}

fn suite_proper(h: f64, a: f64, q: f64) -> SpectralModel {
    let c = Complex64::new;
    let m = SpectralMatrix::from_row_slice(2, 2, &[c(a, 0.0), c(0.0, q), c(0.0, -q), c(a, 0.0)]);
    SpectralModel::new(
        2,
        vec![Band::new(-h, 0.0, m.conjugate()), Band::new(0.0, h, m)],
        vec![],
        vec![],
        None,
    )
    .unwrap()
}

fn d(model: &SpectralModel) -> f64 {
    rank_integral(model, &FrequencyGrid::default(), RankTolerance::default())
        .unwrap()
        .value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rank_integral_within_range(m in real_model()) {
        let v = d(&m);
        prop_assert!((0.0..=m.dim() as f64 + 1e-12).contains(&v), "{v}");
    }

    #[test]
    fn scale_invariance_exact(m in real_model(), a in prop::collection::vec(0.01f64..100.0, 3)) {
        let scaled = m.scaled(&a[..m.dim()]).unwrap();
        prop_assert_eq!(d(&scaled), d(&m));
    }

    #[test]
    fn permutation_invariance(m in real_model()) {
        let perm: Vec<usize> = (0..m.dim()).rev().collect();
        prop_assert_eq!(d(&m.select(&perm).unwrap()), d(&m));
    }

    #[test]
    fn independent_blocks_add(a in real_model(), b in real_model()) {
        let joint = a.block_diagonal(&b).unwrap();
        prop_assert!((d(&joint) - d(&a) - d(&b)).abs() < 1e-12);
    }

    #[test]
    fn grid_refinement_stability(m in real_model(), n in prop::sample::select(vec![256usize, 1024, 4096])) {
        let tol = RankTolerance::default();
        let coarse = rank_integral(&m, &FrequencyGrid::new(n).unwrap(), tol).unwrap().value;
        let fine = rank_integral(&m, &FrequencyGrid::new(2 * n).unwrap(), tol).unwrap().value;
        prop_assert!((coarse - fine).abs() <= m.interior_endpoints() as f64 / n as f64 + 1e-12);
    }

    #[test]
    fn complex_bound_ordering(m in complex_model()) {
        let b = corollary_bound(&m, &FrequencyGrid::default(), RankTolerance::default()).unwrap();
        prop_assert!(b.ordering_holds, "{b:?}");
    }

    #[test]
    fn proper_models_attain_bound(m in proper_model()) {
        let g = FrequencyGrid::default();
        prop_assert!(properness_check(&eval_spectrum(&m, &g).unwrap()).unwrap().proper);
        let b = corollary_bound(&m, &g, RankTolerance::default()).unwrap();
        prop_assert!(b.equal, "{b:?}");
    }
}

#[test]
fn welch_round_trip_integrates_to_variance() {
    let band = suite::band_04().unwrap();
    let batch = sample_blocks(&band, 1024, 200, 8).unwrap();
    let est = welch_psd(&batch, WelchSettings::default()).unwrap();
    let total = |s: &idrate::GridSpectrum| s.integral()[(0, 0)].re;
    let groups: Vec<f64> = est.groups.iter().map(total).collect();
    let g = groups.len() as f64;
    let mean = groups.iter().sum::<f64>() / g;
    let se = (groups.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (g - 1.0) / g).sqrt();
    let all = total(&est.spectrum);
    assert!((all - 1.0).abs() <= 5.0 * se, "∫Ŝ = {all}, se {se}");
}

#[test]
fn sampled_cell_frequencies_match_oracle() {
    // Two consecutive steps of the band model at m = 1.
    let band = suite::band_04().unwrap();
    let (mean, cov) = block_law(&band, 2).unwrap();
    let table = cell_probabilities(&mean, &cov, 1).unwrap();
    let n = 400_000;
    let q = quantize(&sample_blocks(&band, 2, n, 21).unwrap(), 1).unwrap();
    let mut counts: HashMap<Vec<i64>, f64> = HashMap::new();
    for r in 0..n {
        *counts.entry(q.path(r).to_vec()).or_default() += 1.0;
    }
    for (cell, p) in table.cells.iter().filter(|(_, p)| *p > 1e-3) {
        let f = counts.get(cell).copied().unwrap_or(0.0) / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() <= 5.0 * se, "cell {cell:?}: {f} vs {p}");
    }
}

#[test]
fn block_entropy_rate_non_increasing_in_k() {
    let band = suite::band_04().unwrap();
    let mut prev = f64::INFINITY;
    for k in 1..=3 {
        let (mean, cov) = block_law(&band, k).unwrap();
        let rate = exact_cell_entropy_gaussian(&mean, &cov, 2).unwrap().value / k as f64;
        assert!(rate <= prev + 1e-12, "k = {k}: {rate} > {prev}");
        prev = rate;
    }
    // And the sample version, within SE.
    let batch = sample_blocks(&band, 3, 200_000, 4).unwrap();
    let q2 = quantize(&batch, 2).unwrap();
    let h3 = block_entropy(&q2, true).unwrap();
    let (mean, cov) = block_law(&band, 1).unwrap();
    let h1 = exact_cell_entropy_gaussian(&mean, &cov, 2).unwrap().value;
    assert!(h3.value / 3.0 <= h1 + 2.0 * h3.se / 3.0);
}

#[test]
fn widening_ladder_does_not_drift() {
    let white = suite::white().unwrap();
    let ladders: [&[u32]; 3] = [&[4, 8], &[4, 8, 16], &[4, 8, 16, 32]];
    let mut prev_gap: Option<f64> = None;
    for ladder in ladders {
        let s = SlopeSettings {
            m_ladder: ladder.to_vec(),
            k: Some(1),
            paths: 400_000,
            seed: 9,
            miller_madow: true,
        };
        let est = idr_slope_estimate(&white, &s).unwrap();
        let gap = (est.value - 1.0).abs();
        if let Some(p) = prev_gap {
            assert!(gap <= p + 2.0 * est.se, "{ladder:?}: gap {gap} after {p}");
        }
        prev_gap = Some(gap);
    }
}

#[test]
fn kl_bound_bivariate() {
    for (model, k) in [
        (suite::correlated_pair().unwrap(), 1),
        (suite::band_04().unwrap(), 2),
    ] {
        for m in [1, 2, 4] {
            let r = kl_bound_check(&model, k, m).unwrap();
            assert!(r.pass && r.kl >= -1e-12, "{r:?}");
        }
    }
}

#[test]
fn model_document_round_trip() {
    for named in suite::benchmark_suite().unwrap() {
        let json = serde_json::to_string(&named.model.to_document()).unwrap();
        let back = SpectralModel::from_document(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(
            back.fingerprint(),
            named.model.fingerprint(),
            "{}",
            named.name
        );
        assert_eq!(d(&back), d(&named.model));
    }
}
