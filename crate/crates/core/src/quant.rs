//! Uniform floor quantization `[x]_m = ⌊m x⌋/m`, the error process
//! `N = X - [X]_m`, non-subtractive dithering `W = [X]_m + U`, and the
//! Bussgang diagnostics that tie their spectra together.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};
use crate::sim::{welch_psd, SamplePathBatch, WelchSettings};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Integer codes `⌊m x⌋` with the layout of the source batch.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedPathBatch {
    pub dim: usize,
    pub k: usize,
    pub paths: usize,
    pub m: u32,
    pub codes: Vec<i64>,
    pub seed: u64,
    pub source: String,
}

/// Largest magnitude for which `m·x` still has an exact integer floor.
fn limit(m: u32) -> f64 {
    2f64.powi(53) / f64::from(m)
}

#[inline]
pub fn quantize_value(x: f64, m: u32) -> i64 {
    (f64::from(m) * x).floor() as i64
}

pub fn quantize(batch: &SamplePathBatch, m: u32) -> Result<QuantizedPathBatch> {
    if m == 0 {
        return Err(Error::Domain(
            "quantizer precision m must be at least 1".into(),
        ));
    }
    let lim = limit(m);
    if let Some(&x) = batch.data.iter().find(|x| !(x.abs() <= lim)) {
        return Err(Error::QuantizerOverflow { value: x, m });
    }
    let codes = batch
        .data
        .par_iter()
        .map(|&x| quantize_value(x, m))
        .collect();
    Ok(QuantizedPathBatch {
        dim: batch.dim,
        k: batch.k,
        paths: batch.paths,
        m,
        codes,
        seed: batch.seed,
        source: batch.source.clone(),
    })
}

impl QuantizedPathBatch {
    /// The block of codes of path `r`.
    pub fn path(&self, r: usize) -> &[i64] {
        let w = self.k * self.dim;
        &self.codes[r * w..(r + 1) * w]
    }

    fn as_batch(&self, data: Vec<f64>) -> SamplePathBatch {
        SamplePathBatch {
            dim: self.dim,
            k: self.k,
            paths: self.paths,
            data,
            seed: self.seed,
            source: self.source.clone(),
        }
    }

    /// `[X]_m = code/m` as a real batch.
    pub fn reconstruction(&self) -> SamplePathBatch {
        let m = f64::from(self.m);
        self.as_batch(self.codes.iter().map(|&c| c as f64 / m).collect())
    }
}

/// `N = X - [X]_m`, every sample in `[0, 1/m)`.
pub fn quantization_error(batch: &SamplePathBatch, q: &QuantizedPathBatch) -> SamplePathBatch {
    let m = f64::from(q.m);
    batch.with_data(
        batch
            .data
            .iter()
            .zip(&q.codes)
            .map(|(x, &c)| x - c as f64 / m)
            .collect(),
    )
}

/// `W = code/m + U` with `U` i.i.d. uniform on `[0, 1/m)`; path `r` draws
/// from stream `r` of a seed derived from `seed`.
pub fn dither(q: &QuantizedPathBatch, seed: u64) -> SamplePathBatch {
    let m = f64::from(q.m);
    let sub = derive_seed(seed, "dither");
    let w = q.k * q.dim;
    let mut data = vec![0.0; q.codes.len()];
    data.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(r, out)| {
            let mut rng = stream_rng(sub, r as u64);
            for (o, &c) in out.iter_mut().zip(q.path(r)) {
                let u: f64 = rng.random();
                *o = (c as f64 + u) / m;
            }
        });
    SamplePathBatch {
        seed: sub,
        ..q.as_batch(data)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BussgangComponent {
    /// `â = Ĉov(X, [X]_m) / σ̂²`.
    pub a: f64,
    pub se: f64,
    /// `(1/m)·√(2/(πσ²))`.
    pub bound: f64,
    pub variance: f64,
    pub noise_variance: f64,
    pub noise_bound: f64,
    /// `|1 - â| ≤ bound + 5·se`.
    pub bound_holds: bool,
    pub noise_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BussgangReport {
    pub m: u32,
    pub components: Vec<BussgangComponent>,
    /// Pairwise `|â_i - â_j| ≤ 5·√(se_i² + se_j²)`; checked only when every
    /// sample variance is within 2% of one.
    pub equal_coefficients: Option<bool>,
    pub pass: bool,
}

const UNIT_VARIANCE_TOL: f64 = 0.02;

/// Monte Carlo Bussgang gain per component. Standard errors treat paths as
/// independent clusters, so serial correlation within a path is accounted
/// for.
pub fn bussgang_coefficient(batch: &SamplePathBatch, m: u32) -> Result<BussgangReport> {
    let q = quantize(batch, m)?;
    let mf = f64::from(m);
    let l = batch.dim;
    let n = (batch.k * batch.paths) as f64;
    let mean_x = batch.component_means();
    let mean_q = q.reconstruction().component_means();
    let mut components = Vec::with_capacity(l);
    for i in 0..l {
        // Per-path sums of (x - x̄)(q - q̄), (x - x̄)², and the error moments.
        let per_path: Vec<[f64; 4]> = (0..batch.paths)
            .into_par_iter()
            .map(|r| {
                let mut acc = [0.0; 4];
                for t in 0..batch.k {
                    let idx = (r * batch.k + t) * l + i;
                    let x = batch.data[idx];
                    let qv = q.codes[idx] as f64 / mf;
                    let dx = x - mean_x[i];
                    acc[0] += dx * (qv - mean_q[i]);
                    acc[1] += dx * dx;
                    acc[2] += x - qv;
                    acc[3] += (x - qv) * (x - qv);
                }
                acc
            })
            .collect();
        let sxq: f64 = per_path.iter().map(|a| a[0]).sum();
        let sxx: f64 = per_path.iter().map(|a| a[1]).sum();
        if !(sxx > 0.0) {
            return Err(Error::ZeroVariance { component: i });
        }
        let a = sxq / sxx;
        let rr = batch.paths as f64;
        let resid: f64 = per_path.iter().map(|p| (p[0] - a * p[1]).powi(2)).sum();
        let se = if batch.paths > 1 {
            (resid * rr / (rr - 1.0)).sqrt() / sxx
        } else {
            f64::NAN
        };
        let variance = sxx / n;
        let n_mean = per_path.iter().map(|p| p[2]).sum::<f64>() / n;
        let noise_variance =
            (per_path.iter().map(|p| p[3]).sum::<f64>() / n - n_mean * n_mean).max(0.0);
        let bound = (2.0 / (PI * variance)).sqrt() / mf;
        let noise_bound = 1.0 / (mf * mf);
        components.push(BussgangComponent {
            a,
            se,
            bound,
            variance,
            noise_variance,
            noise_bound,
            bound_holds: (1.0 - a).abs() <= bound + 5.0 * se,
            noise_holds: noise_variance <= noise_bound,
        });
    }
    let unit = components
        .iter()
        .all(|c| (c.variance - 1.0).abs() <= UNIT_VARIANCE_TOL);
    let equal_coefficients = (unit && l > 1).then(|| {
        components.iter().enumerate().all(|(i, ci)| {
            components[i + 1..]
                .iter()
                .all(|cj| (ci.a - cj.a).abs() <= 5.0 * (ci.se.powi(2) + cj.se.powi(2)).sqrt())
        })
    });
    let pass = components.iter().all(|c| c.bound_holds && c.noise_holds)
        && equal_coefficients.unwrap_or(true);
    Ok(BussgangReport {
        m,
        components,
        equal_coefficients,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma4Report {
    pub m: u32,
    pub a: f64,
    /// Frequency average of `Re tr(Ŝ_[X] - (2â-1)Ŝ_X - Ŝ_N)`.
    pub mean_residual: f64,
    /// Standard error of `mean_residual` across path groups.
    pub se: f64,
    /// Largest per-node Frobenius norm of the residual matrix.
    pub max_residual: f64,
    /// `Σ_i ∫ Ŝ_{N_i}` per component, the largest one.
    pub noise_power: f64,
    pub noise_bound: f64,
    pub pass: bool,
}

/// Compare the spectrum of the quantized process with
/// `(2a-1) S_X + S_N`, all three estimated by Welch on the same paths.
/// Intended for unit-variance inputs, where the Bussgang gains coincide.
pub fn lemma4_spectrum_check(
    batch: &SamplePathBatch,
    m: u32,
    welch: WelchSettings,
) -> Result<Lemma4Report> {
    let report = bussgang_coefficient(batch, m)?;
    let a = report.components.iter().map(|c| c.a).sum::<f64>() / report.components.len() as f64;
    let q = quantize(batch, m)?;
    let sx = welch_psd(batch, welch)?;
    let sq = welch_psd(&q.reconstruction(), welch)?;
    let sn = welch_psd(&quantization_error(batch, &q), welch)?;
    let g = 2.0 * a - 1.0;
    let l = batch.dim;
    let residual = |xq: &crate::GridSpectrum,
                    xx: &crate::GridSpectrum,
                    nn: &crate::GridSpectrum| {
        let mut mean = 0.0;
        let mut max: f64 = 0.0;
        for j in 0..xq.len() {
            let r =
                &xq.values[j] - &xx.values[j] * num_complex::Complex64::new(g, 0.0) - &nn.values[j];
            mean += (0..l).map(|i| r[(i, i)].re).sum::<f64>() * xq.weight;
            max = max.max(r.norm());
        }
        (mean, max)
    };
    let (mean_residual, max_residual) = residual(&sq.spectrum, &sx.spectrum, &sn.spectrum);
    let group_means: Vec<f64> = (0..sx.groups.len())
        .map(|k| residual(&sq.groups[k], &sx.groups[k], &sn.groups[k]).0)
        .collect();
    let ng = group_means.len() as f64;
    let gm = group_means.iter().sum::<f64>() / ng;
    let se = (group_means.iter().map(|v| (v - gm).powi(2)).sum::<f64>() / (ng - 1.0) / ng).sqrt();
    let integral = sn.spectrum.integral();
    let noise_power = (0..l).map(|i| integral[(i, i)].re).fold(0.0, f64::max);
    let noise_bound = 1.0 / f64::from(m).powi(2);
    // Rounding floor so that an exactly-zero residual with zero spread passes.
    let floor = 1e-12 * (1.0 + sx.spectrum.integral().norm());
    let pass = mean_residual.abs() <= 5.0 * se + floor && noise_power <= noise_bound;
    Ok(Lemma4Report {
        m,
        a,
        mean_residual,
        se,
        max_residual,
        noise_power,
        noise_bound,
        pass,
    })
}
