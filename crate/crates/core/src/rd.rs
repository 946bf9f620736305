//! Gaussian rate-distortion by reverse water-filling over spectral
//! eigenvalues, and the rate-distortion dimension read off `R(D)` as
//! `D ↓ 0`.
//!
//! Distortion is mean-square per time step, summed over components.

use crate::dimension::{DimensionEstimate, DimensionMethod};
use crate::error::{Error, Result};
use crate::numeric::{ls_slope, symmetric_eigenvalues};
use crate::sim::autocovariance_from_spectrum;
use crate::spectral::{
    eval_spectrum, normalize_components, rank_integral, rank_profile, FrequencyGrid, RankTolerance,
    SpectralModel,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const BISECTION_ITERATIONS: usize = 200;
pub const BISECTION_RTOL: f64 = 1e-12;
/// Block length limit of the finite-k cross-check.
pub const BLOCK_CHECK_MAX_K: usize = 64;

/// Eigenvalues `μ_i(θ_j)` with their quadrature weight.
#[derive(Clone, Debug)]
pub struct EigenSpectrum {
    values: Vec<f64>,
    weight: f64,
    max: f64,
    total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub distortion: f64,
    pub rate: f64,
    pub water_level: f64,
}

impl EigenSpectrum {
    pub fn new(values: Vec<f64>, weight: f64) -> Self {
        let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let max = values.iter().copied().fold(0.0, f64::max);
        let total = values.iter().sum::<f64>() * weight;
        Self {
            values,
            weight,
            max,
            total,
        }
    }

    pub fn from_model(model: &SpectralModel, grid: &FrequencyGrid) -> Result<Self> {
        let profile = rank_profile(&eval_spectrum(model, grid)?, RankTolerance::default())?;
        Ok(Self::new(
            profile.eigenvalues.into_iter().flatten().collect(),
            profile.weight,
        ))
    }

    /// Eigenvalues of the `kL × kL` block-Toeplitz covariance, each carrying
    /// weight `1/k`.
    pub fn from_block_covariance(
        model: &SpectralModel,
        grid: &FrequencyGrid,
        k: usize,
    ) -> Result<Self> {
        if k == 0 || k > BLOCK_CHECK_MAX_K {
            return Err(Error::Domain(format!(
                "block length must be in 1..={BLOCK_CHECK_MAX_K}, got {k}"
            )));
        }
        let acov = autocovariance_from_spectrum(model, grid, k - 1)?;
        let cov = acov.block_toeplitz(k)?;
        let eig = symmetric_eigenvalues(&cov).ok_or(Error::EigenFailure {
            node: 0,
            theta: 0.0,
        })?;
        Ok(Self::new(eig, 1.0 / k as f64))
    }

    /// Total power `Σ μ · weight`.
    pub fn total(&self) -> f64 {
        self.total
    }

    fn distortion_at(&self, w: f64) -> f64 {
        self.values.iter().map(|&m| m.min(w)).sum::<f64>() * self.weight
    }

    fn rate_at(&self, w: f64) -> f64 {
        self.values
            .iter()
            .filter(|&&m| m > w)
            .map(|&m| 0.5 * (m / w).ln())
            .sum::<f64>()
            * self.weight
    }

    /// Reverse water-filling: the level `w` with `Σ min(w, μ)·weight = D`
    /// and the rate `Σ max(0, ½ log(μ/w))·weight`, in nats.
    pub fn waterfill(&self, distortion: f64) -> Result<RdPoint> {
        if !(distortion > 0.0) {
            return Err(Error::Domain(format!(
                "distortion must be positive, got {distortion}"
            )));
        }
        if distortion >= self.total {
            return Ok(RdPoint {
                distortion,
                rate: 0.0,
                water_level: self.max,
            });
        }
        let (mut lo, mut hi) = (0.0, self.max);
        for _ in 0..BISECTION_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            let d = self.distortion_at(mid);
            if (d - distortion).abs() <= BISECTION_RTOL * distortion {
                return Ok(RdPoint {
                    distortion,
                    rate: self.rate_at(mid),
                    water_level: mid,
                });
            }
            if d < distortion {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::Bisection {
            lo,
            hi,
            target: distortion,
        })
    }
}

/// `(R, w)` for a model on a grid.
pub fn waterfill_rate(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    distortion: f64,
) -> Result<RdPoint> {
    EigenSpectrum::from_model(model, grid)?.waterfill(distortion)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RdCurve {
    /// Fingerprint of the generating model.
    pub model: String,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["D", "R", "w"])?;
        for p in &self.points {
            w.write_record([
                p.distortion.to_string(),
                p.rate.to_string(),
                p.water_level.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn rd_curve(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    distortions: &[f64],
) -> Result<RdCurve> {
    let spec = EigenSpectrum::from_model(model, grid)?;
    let points = distortions
        .iter()
        .map(|&d| spec.waterfill(d))
        .collect::<Result<_>>()?;
    Ok(RdCurve {
        model: model.fingerprint(),
        points,
    })
}

/// `D` values spaced evenly in `log D` from `hi` down to `lo`.
pub fn log_ladder(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    let (a, b) = (hi.ln(), lo.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

fn check_d_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::Domain(
            "distortion ladder needs at least two points".into(),
        ));
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) || ladder.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Domain(format!(
            "distortion ladder must be positive and decreasing: {ladder:?}"
        )));
    }
    Ok(())
}

/// Least-squares slope of `R(D)` against `-½ log D` on the normalized model.
pub fn rd_dimension_from_spectrum(
    spec: &EigenSpectrum,
    dim: usize,
    ladder: &[f64],
) -> Result<DimensionEstimate> {
    check_d_ladder(ladder)?;
    let total = spec.total();
    if total > 0.0 && ladder[0] >= total / 4.0 {
        return Err(Error::Domain(format!(
            "distortion ladder must lie below a quarter of the total power {total}"
        )));
    }
    let rates = ladder
        .iter()
        .map(|&d| spec.waterfill(d).map(|p| p.rate))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = ladder.iter().map(|d| -0.5 * d.ln()).collect();
    let (slope, _, _) = ls_slope(&x, &rates);
    let local: Vec<f64> = x
        .windows(2)
        .zip(rates.windows(2))
        .map(|(a, b)| (b[1] - b[0]) / (a[1] - a[0]))
        .collect();
    let spread = local.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - local.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DimensionEstimate {
        value: slope,
        se: 0.0,
        method: DimensionMethod::RateDistortion,
        dim,
        m_ladder: Vec::new(),
        k: 0,
        paths: 0,
        reference: None,
        ladder: Vec::new(),
        d_ladder: ladder.to_vec(),
        spread,
        in_range: (-crate::dimension::RANGE_SLACK..=dim as f64 + crate::dimension::RANGE_SLACK)
            .contains(&slope),
    })
}

pub fn rd_dimension_estimate(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    ladder: &[f64],
) -> Result<DimensionEstimate> {
    let reference = rank_integral(model, grid, RankTolerance::default())?.value;
    let norm = normalize_components(model)?;
    let spec = if norm.model.dim() == 0 {
        EigenSpectrum::new(Vec::new(), grid.weight())
    } else {
        EigenSpectrum::from_model(&norm.model, grid)?
    };
    let mut est = rd_dimension_from_spectrum(&spec, model.dim(), ladder)?;
    est.reference = Some(reference);
    Ok(est)
}

/// The same slope from exact water-filling on the block-Toeplitz covariance
/// of length `k`.
pub fn rd_dimension_block(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    k: usize,
    ladder: &[f64],
) -> Result<DimensionEstimate> {
    let norm = normalize_components(model)?;
    let spec = if norm.model.dim() == 0 {
        EigenSpectrum::new(Vec::new(), 1.0)
    } else {
        EigenSpectrum::from_block_covariance(&norm.model, grid, k)?
    };
    let mut est = rd_dimension_from_spectrum(&spec, model.dim(), ladder)?;
    est.k = k;
    Ok(est)
}
