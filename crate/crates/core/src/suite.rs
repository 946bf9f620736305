//! Constructed models with closed-form dimension, used by the acceptance
//! tests, the CLI `verify` task and the benches.

use crate::error::Result;
use crate::spectral::{real_matrix, Band, SpectralMatrix, SpectralModel};
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct NamedModel {
    pub name: &'static str,
    pub model: SpectralModel,
    /// Closed-form rank integral.
    pub dimension: f64,
    /// Complex process `(Re, Im)`.
    pub complex: bool,
}

fn named(name: &'static str, model: SpectralModel, dimension: f64, complex: bool) -> NamedModel {
    NamedModel {
        name,
        model,
        dimension,
        complex,
    }
}

pub fn white() -> Result<SpectralModel> {
    SpectralModel::white(1, 1.0)
}

/// Unit variance on `[-0.2, 0.2)`.
pub fn band_04() -> Result<SpectralModel> {
    SpectralModel::univariate_band(-0.2, 0.2, 2.5)
}

/// Two independent unit-variance components on `[-1/4, 1/4)`.
pub fn independent_half_band() -> Result<SpectralModel> {
    SpectralModel::new(
        2,
        vec![Band::new(
            -0.25,
            0.25,
            real_matrix(&[&[2.0, 0.0], &[0.0, 2.0]]),
        )],
        vec![],
        vec![],
        None,
    )
}

/// `X_2 = X_1`, white.
pub fn correlated_pair() -> Result<SpectralModel> {
    SpectralModel::flat(real_matrix(&[&[1.0, 1.0], &[1.0, 1.0]]))
}

pub fn zero() -> Result<SpectralModel> {
    SpectralModel::zero(1)
}

/// Proper complex process, flat on `[-1/4, 1/4)`: `S_R = S_I = 1` and
/// `S_RI = ±i q`, purely imaginary and odd in θ.
pub fn proper_complex_band(q: f64) -> Result<SpectralModel> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let neg =
        SpectralMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, -q), c(0.0, q), c(1.0, 0.0)]);
    SpectralModel::new(
        2,
        vec![
            Band::new(-0.25, 0.0, neg.clone()),
            Band::new(0.0, 0.25, neg.conjugate()),
        ],
        vec![],
        vec![],
        None,
    )
}

/// Complex process with `I ≡ 0` and `R` on `[-1/4, 1/4)`.
pub fn real_only_complex() -> Result<SpectralModel> {
    SpectralModel::new(
        2,
        vec![Band::new(
            -0.25,
            0.25,
            real_matrix(&[&[2.0, 0.0], &[0.0, 0.0]]),
        )],
        vec![],
        vec![],
        None,
    )
}

/// `S_RI = 0`, `S_R ≠ S_I`, both supported on `[-1/4, 1/4)`.
pub fn unmatched_complex() -> Result<SpectralModel> {
    SpectralModel::new(
        2,
        vec![Band::new(
            -0.25,
            0.25,
            real_matrix(&[&[1.0, 0.0], &[0.0, 2.0]]),
        )],
        vec![],
        vec![],
        None,
    )
}

/// The six benchmark models.
pub fn benchmark_suite() -> Result<Vec<NamedModel>> {
    Ok(vec![
        named("white", white()?, 1.0, false),
        named("band-0.4", band_04()?, 0.4, false),
        named(
            "independent-half-band",
            independent_half_band()?,
            1.0,
            false,
        ),
        named("correlated-pair", correlated_pair()?, 1.0, false),
        named("zero", zero()?, 0.0, false),
        named("proper-complex-band", proper_complex_band(0.5)?, 1.0, true),
    ])
}
