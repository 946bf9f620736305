//! Autocovariances from spectra, exact Gaussian sample paths, and Welch
//! cross-spectral estimates for closing the loop.
//!
//! Sample batches are stored path-major, then time-major, then component:
//! sample `(r, t, i)` lives at `(r·k + t)·L + i`.

use crate::error::{Error, Result};
use crate::numeric::cholesky;
use crate::rng::stream_rng;
use crate::spectral::{
    eval_spectrum, psd_factor, FrequencyGrid, GridSpectrum, SpectralMatrix, SpectralModel,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

const IMAG_RESIDUE_TOL: f64 = 1e-10;
/// Largest `k·L` accepted by the dense Cholesky sampler.
pub const DENSE_LIMIT: usize = 4096;

/// Lags `C(0..=τ_max)` of a real L-variate process, `C(τ) = E[X_{t+τ} X_tᵀ]`
/// (centred).
#[derive(Clone, Debug)]
pub struct AutocovarianceSequence {
    pub dim: usize,
    pub lags: Vec<DMatrix<f64>>,
    pub mean: Vec<f64>,
    /// Fingerprint of the model this sequence was synthesized from.
    pub source: String,
}

impl AutocovarianceSequence {
    pub fn tau_max(&self) -> usize {
        self.lags.len() - 1
    }

    /// `C(τ)` for any signed lag within range, using `C(-τ) = C(τ)ᵀ`.
    pub fn at(&self, tau: isize) -> DMatrix<f64> {
        let a = tau.unsigned_abs();
        if tau >= 0 {
            self.lags[a].clone()
        } else {
            self.lags[a].transpose()
        }
    }

    /// Covariance of `(X_1, …, X_k)` stacked time-major, `kL × kL`.
    pub fn block_toeplitz(&self, k: usize) -> Result<DMatrix<f64>> {
        if k == 0 || k > self.tau_max() + 1 {
            return Err(Error::Domain(format!(
                "block length k = {k} needs 1 ≤ k ≤ τ_max + 1 = {}",
                self.tau_max() + 1
            )));
        }
        let l = self.dim;
        let mut out = DMatrix::zeros(k * l, k * l);
        for s in 0..k {
            for t in 0..k {
                let c = self.at(s as isize - t as isize);
                out.view_mut((s * l, t * l), (l, l)).copy_from(&c);
            }
        }
        Ok(out)
    }

    /// Mean vector of `(X_1, …, X_k)`.
    pub fn block_mean(&self, k: usize) -> Vec<f64> {
        (0..k).flat_map(|_| self.mean.iter().copied()).collect()
    }
}

/// `C(τ) = Σ_j S(θ_j) e^{-i2πτθ_j}/N + Σ_lines Re(P e^{-i2πτθ₀})` for
/// `τ = 0..=τ_max`, by one FFT per matrix entry.
pub fn autocovariance_from_spectrum(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    tau_max: usize,
) -> Result<AutocovarianceSequence> {
    let spectrum = eval_spectrum(model, grid)?;
    let l = model.dim();
    let n = grid.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut lags: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(l, l); tau_max + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..l {
        for j in 0..l {
            for (b, s) in buf.iter_mut().zip(&spectrum.values) {
                *b = s[(i, j)];
            }
            fft.process(&mut buf);
            for (tau, lag) in lags.iter_mut().enumerate() {
                // θ_j = θ_0 + j/N, so e^{-i2πτθ_j} = e^{-i2πτθ_0} e^{-i2πτj/N}.
                let phase = Complex64::from_polar(1.0, -2.0 * PI * (tau as f64) * grid.node(0));
                lag[(i, j)] = phase * buf[tau % n] * grid.weight();
            }
        }
    }
    for line in model.lines() {
        for (tau, lag) in lags.iter_mut().enumerate() {
            let e = Complex64::from_polar(1.0, -2.0 * PI * tau as f64 * line.theta);
            for (dst, p) in lag.iter_mut().zip(line.power.iter()) {
                *dst += Complex64::new((p * e).re, 0.0);
            }
        }
    }
    let scale = 1.0 + lags[0].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut real = Vec::with_capacity(tau_max + 1);
    for (tau, lag) in lags.iter().enumerate() {
        let residue = lag.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if residue > IMAG_RESIDUE_TOL * scale {
            return Err(Error::ImaginaryAutocovariance { lag: tau, residue });
        }
        real.push(lag.map(|z| z.re));
    }
    Ok(AutocovarianceSequence {
        dim: l,
        lags: real,
        mean: model.mean().to_vec(),
        source: model.fingerprint(),
    })
}

/// `R` paths of `k` steps of an L-variate process.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePathBatch {
    pub dim: usize,
    pub k: usize,
    pub paths: usize,
    pub data: Vec<f64>,
    pub seed: u64,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub seed: u64,
    pub model: String,
    #[serde(rename = "L")]
    pub dim: usize,
    pub k: usize,
    #[serde(rename = "R")]
    pub paths: usize,
    pub layout: String,
    pub format: String,
}

const LAYOUT: &str = "path-major/time-major/component";

impl SamplePathBatch {
    pub fn path(&self, r: usize) -> &[f64] {
        let w = self.k * self.dim;
        &self.data[r * w..(r + 1) * w]
    }

    #[inline]
    pub fn get(&self, r: usize, t: usize, i: usize) -> f64 {
        self.data[(r * self.k + t) * self.dim + i]
    }

    /// Same layout, new values.
    pub fn with_data(&self, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self {
            data,
            ..self.clone()
        }
    }

    pub fn metadata(&self, format: &str) -> BatchMetadata {
        BatchMetadata {
            seed: self.seed,
            model: self.source.clone(),
            dim: self.dim,
            k: self.k,
            paths: self.paths,
            layout: LAYOUT.into(),
            format: format.into(),
        }
    }

    /// Per-component sample mean over all paths and times.
    pub fn component_means(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dim];
        for chunk in self.data.chunks_exact(self.dim) {
            for (a, v) in s.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        let n = (self.k * self.paths) as f64;
        s.iter().map(|v| v / n).collect()
    }

    /// Sample `E[X_{t+τ,i} X_{t,j}]` (centred at the batch mean) with a
    /// path-clustered standard error for every entry.
    pub fn lag_covariance(&self, tau: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if tau >= self.k {
            return Err(Error::InsufficientData(format!(
                "lag {tau} needs paths longer than k = {}",
                self.k
            )));
        }
        let l = self.dim;
        let mu = self.component_means();
        let per_path: Vec<DMatrix<f64>> = (0..self.paths)
            .into_par_iter()
            .map(|r| {
                let mut acc = DMatrix::zeros(l, l);
                for t in 0..self.k - tau {
                    for i in 0..l {
                        for j in 0..l {
                            acc[(i, j)] +=
                                (self.get(r, t + tau, i) - mu[i]) * (self.get(r, t, j) - mu[j]);
                        }
                    }
                }
                acc / (self.k - tau) as f64
            })
            .collect();
        Ok(mean_and_se(&per_path))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        for r in 0..self.paths {
            w.write_record(self.path(r).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        write_sidecar(path, &self.metadata("csv"))
    }

    /// Little-endian `f64`s in storage order, plus `<path>.json` metadata.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        write_sidecar(path, &self.metadata("f64le"))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let meta: BatchMetadata =
            serde_json::from_reader(std::fs::File::open(sidecar_path(path))?)?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let expect = meta.dim * meta.k * meta.paths * 8;
        if bytes.len() != expect {
            return Err(Error::InsufficientData(format!(
                "binary batch has {} bytes, metadata implies {expect}",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            dim: meta.dim,
            k: meta.k,
            paths: meta.paths,
            data,
            seed: meta.seed,
            source: meta.model,
        })
    }
}

pub(crate) fn mean_and_se(items: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = items.len() as f64;
    let (r, c) = items[0].shape();
    let mean = items.iter().fold(DMatrix::zeros(r, c), |a, m| a + m) / n;
    let var = items
        .iter()
        .fold(DMatrix::zeros(r, c), |a, m| a + (m - &mean).map(|v| v * v))
        / (n - 1.0).max(1.0);
    (mean, var.map(|v| (v / n).sqrt()))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

fn write_sidecar(path: &Path, meta: &BatchMetadata) -> Result<()> {
    let f = std::fs::File::create(sidecar_path(path))?;
    serde_json::to_writer_pretty(f, meta)?;
    Ok(())
}

/// Exact finite-dimensional law by dense block-Toeplitz Cholesky:
/// each path is `μ + chol(Σ_kL)·z`. Path `r` draws `z` from stream `r`.
pub fn sample_paths(
    acov: &AutocovarianceSequence,
    k: usize,
    paths: usize,
    seed: u64,
) -> Result<SamplePathBatch> {
    let l = acov.dim;
    let n = k * l;
    if n > DENSE_LIMIT {
        return Err(Error::Domain(format!(
            "k·L = {n} exceeds the dense sampler limit {DENSE_LIMIT}; use sample_paths_spectral"
        )));
    }
    let cov = acov.block_toeplitz(k)?;
    let jitter = 1e-12 * cov.trace() / n as f64;
    let factor = match cholesky(&cov, jitter) {
        Ok(f) => f,
        Err(_) => {
            let jittered = &cov + DMatrix::identity(n, n) * jitter;
            cholesky(&jittered, jitter)
                .map_err(|(pivot, value)| Error::NotPositiveDefinite { pivot, value })?
        }
    };
    let mean = acov.block_mean(k);
    let mut data = vec![0.0; n * paths];
    data.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(r, out)| {
            let mut rng = stream_rng(seed, r as u64);
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            factor.mul_into(&z, out);
            for (o, m) in out.iter_mut().zip(&mean) {
                *o += m;
            }
        });
    Ok(SamplePathBatch {
        dim: l,
        k,
        paths,
        data,
        seed,
        source: acov.source.clone(),
    })
}

/// Exact sampler for the grid-discretized process:
/// `X_t = √2 Re Σ_j A_j ξ_j e^{-i2πtθ_j}/√N` with `A_j A_jᴴ = S(θ_j)` and
/// `ξ_j` proper complex standard normal, plus `√2 Re(A ξ e^{-i2πtθ₀})` per
/// line. Its autocovariance is exactly the one
/// [`autocovariance_from_spectrum`] computes on the same grid, and it needs
/// no positive-definite covariance, so it serves long paths and
/// band-limited models.
pub fn sample_paths_spectral(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    k: usize,
    paths: usize,
    seed: u64,
) -> Result<SamplePathBatch> {
    let n = grid.len();
    if k > n {
        return Err(Error::Domain(format!(
            "path length k = {k} exceeds grid size N = {n}"
        )));
    }
    let spectrum = eval_spectrum(model, grid)?;
    let l = model.dim();
    let factors = spectrum
        .values
        .iter()
        .enumerate()
        .map(|(j, s)| {
            psd_factor(s).ok_or(Error::EigenFailure {
                node: j,
                theta: spectrum.nodes[j],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let line_factors = model
        .lines()
        .iter()
        .enumerate()
        .map(|(j, line)| {
            psd_factor(&line.power)
                .map(|a| (line.theta, a))
                .ok_or(Error::EigenFailure {
                    node: j,
                    theta: line.theta,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let theta0 = grid.node(0);
    let scale = SQRT_2 / (n as f64).sqrt();
    let mean = model.mean().to_vec();
    let width = k * l;
    let mut data = vec![0.0; width * paths];
    data.par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(r, out)| {
            let mut rng = stream_rng(seed, r as u64);
            let mut normal = || {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            };
            // y[i][j] = (A_j ξ_j)_i
            let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; l];
            for (j, a) in factors.iter().enumerate() {
                let xi: Vec<Complex64> = (0..l).map(|_| normal()).collect();
                for i in 0..l {
                    y[i][j] = (0..l).map(|c| a[(i, c)] * xi[c]).sum();
                }
            }
            let line_amps: Vec<(f64, Vec<Complex64>)> = line_factors
                .iter()
                .map(|(theta, a)| {
                    let xi: Vec<Complex64> = (0..l).map(|_| normal()).collect();
                    (
                        *theta,
                        (0..l)
                            .map(|i| (0..l).map(|c| a[(i, c)] * xi[c]).sum())
                            .collect(),
                    )
                })
                .collect();
            for (i, row) in y.iter_mut().enumerate() {
                fft.process(row);
                for t in 0..k {
                    let phase = Complex64::from_polar(1.0, -2.0 * PI * t as f64 * theta0);
                    let mut v = scale * (phase * row[t]).re + mean[i];
                    for (theta, amp) in &line_amps {
                        let e = Complex64::from_polar(1.0, -2.0 * PI * t as f64 * theta);
                        v += SQRT_2 * (amp[i] * e).re;
                    }
                    out[t * l + i] = v;
                }
            }
        });
    Ok(SamplePathBatch {
        dim: l,
        k,
        paths,
        data,
        seed,
        source: model.fingerprint(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, s: usize) -> Vec<f64> {
        match self {
            // Periodic Hann, so that 50% overlapped windows sum to a constant.
            Window::Hann => (0..s)
                .map(|t| 0.5 - 0.5 * (2.0 * PI * t as f64 / s as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; s],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchSettings {
    pub segment: usize,
    pub window: Window,
    /// Number of path groups used for standard errors.
    pub groups: usize,
}

impl Default for WelchSettings {
    fn default() -> Self {
        Self {
            segment: 256,
            window: Window::Hann,
            groups: 20,
        }
    }
}

/// Averaged cross-periodogram on nodes `-1/2, …, 1/2 - 1/s` (ascending),
/// together with the same average taken within disjoint groups of paths,
/// which carries the sampling error.
#[derive(Clone, Debug)]
pub struct WelchEstimate {
    pub spectrum: GridSpectrum,
    pub groups: Vec<GridSpectrum>,
    pub segments: usize,
}

impl WelchEstimate {
    /// Standard error of the real part of entry `(i, j)` at node `node`.
    pub fn se(&self, node: usize, i: usize, j: usize) -> f64 {
        let g = self.groups.len() as f64;
        if g < 2.0 {
            return f64::NAN;
        }
        let vals: Vec<f64> = self
            .groups
            .iter()
            .map(|s| s.values[node][(i, j)].re)
            .collect();
        let mean = vals.iter().sum::<f64>() / g;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (g - 1.0);
        (var / g).sqrt()
    }
}

/// Welch estimate of the spectral density matrix of a batch. The batch mean
/// is removed per component; each node is made Hermitian and its negative
/// eigenvalues are clipped to zero.
pub fn welch_psd(batch: &SamplePathBatch, settings: WelchSettings) -> Result<WelchEstimate> {
    let s = settings.segment;
    let l = batch.dim;
    if s < 2 || s > batch.k {
        return Err(Error::InsufficientData(format!(
            "segment length {s} must lie in [2, k = {}]",
            batch.k
        )));
    }
    let hop = (s / 2).max(1);
    let per_path = (batch.k - s) / hop + 1;
    let total = per_path * batch.paths;
    if total < 2 {
        return Err(Error::InsufficientData(format!(
            "only {total} Welch segment(s); need at least 2"
        )));
    }
    let window = settings.window.coefficients(s);
    let wsum: f64 = window.iter().map(|w| w * w).sum();
    let mu = batch.component_means();
    let fft = FftPlanner::new().plan_fft_inverse(s);
    let groups = settings.groups.clamp(1, batch.paths);

    // Sum of X̂ X̂ᴴ per path, in FFT order.
    let path_sums: Vec<Vec<DMatrix<Complex64>>> = (0..batch.paths)
        .into_par_iter()
        .map(|r| {
            let mut acc = vec![DMatrix::<Complex64>::zeros(l, l); s];
            let mut bufs = vec![vec![Complex64::new(0.0, 0.0); s]; l];
            for seg in 0..per_path {
                let start = seg * hop;
                for (i, buf) in bufs.iter_mut().enumerate() {
                    for (t, b) in buf.iter_mut().enumerate() {
                        *b = Complex64::new(window[t] * (batch.get(r, start + t, i) - mu[i]), 0.0);
                    }
                    // Inverse transform: X̂(θ) = Σ_t w_t x_t e^{+i2πθt}.
                    fft.process(buf);
                }
                for (f, a) in acc.iter_mut().enumerate() {
                    for i in 0..l {
                        for j in 0..l {
                            a[(i, j)] += bufs[i][f] * bufs[j][f].conj();
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let order: Vec<usize> = (0..s).map(|q| (q + s / 2) % s).collect();
    let nodes: Vec<f64> = order
        .iter()
        .map(|&f| {
            if f < s / 2 {
                f as f64 / s as f64
            } else {
                f as f64 / s as f64 - 1.0
            }
        })
        .collect();
    let finish = |range: std::ops::Range<usize>| -> Result<GridSpectrum> {
        let count = (range.len() * per_path) as f64 * wsum;
        let values = order
            .iter()
            .map(|&f| {
                let mut m = range
                    .clone()
                    .fold(DMatrix::<Complex64>::zeros(l, l), |a, r| {
                        a + &path_sums[r][f]
                    })
                    / Complex64::new(count, 0.0);
                m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
                clip_psd(&m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridSpectrum {
            nodes: nodes.clone(),
            weight: 1.0 / s as f64,
            values,
        })
    };
    let spectrum = finish(0..batch.paths)?;
    let group_spectra = (0..groups)
        .map(|g| finish(g * batch.paths / groups..(g + 1) * batch.paths / groups))
        .collect::<Result<Vec<_>>>()?;
    Ok(WelchEstimate {
        spectrum,
        groups: group_spectra,
        segments: total,
    })
}

fn clip_psd(m: &SpectralMatrix) -> Result<SpectralMatrix> {
    let n = m.nrows();
    if n == 1 {
        return Ok(SpectralMatrix::from_element(
            1,
            1,
            Complex64::new(m[(0, 0)].re.max(0.0), 0.0),
        ));
    }
    let e = crate::numeric::hermitian_eigen(m)
        .ok_or_else(|| Error::Domain("eigen-solver failed on a spectral estimate".into()))?;
    if e.values.iter().all(|&v| v >= 0.0) {
        return Ok(m.clone());
    }
    let d = SpectralMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        e.values.iter().map(|v| Complex64::new(v.max(0.0), 0.0)),
    ));
    Ok(&e.vectors * d * e.vectors.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::real_matrix;
    use approx::assert_abs_diff_eq;

    fn g() -> FrequencyGrid {
        FrequencyGrid::default()
    }

    #[test]
    fn white_noise_autocovariance() {
        let a =
            autocovariance_from_spectrum(&SpectralModel::white(1, 1.0).unwrap(), &g(), 5).unwrap();
        assert_abs_diff_eq!(a.lags[0][(0, 0)], 1.0, epsilon = 1e-14);
        for tau in 1..=5 {
            assert_abs_diff_eq!(a.lags[tau][(0, 0)], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn band_autocovariance_at_lag_one() {
        // ∫_{-1/4}^{1/4} 2 cos(2πθ) dθ = 2 sin(π/2)/π.
        let m = SpectralModel::univariate_band(-0.25, 0.25, 2.0).unwrap();
        let a = autocovariance_from_spectrum(&m, &g(), 3).unwrap();
        assert_abs_diff_eq!(a.lags[0][(0, 0)], 1.0, epsilon = 1e-12);
        // Midpoint rule on a cosine with endpoints on cell boundaries.
        assert_abs_diff_eq!(a.lags[1][(0, 0)], 2.0 / PI, epsilon = 1e-6);
    }

    #[test]
    fn lag_zero_is_total_power() {
        let m = SpectralModel::new(
            2,
            vec![crate::spectral::Band::new(
                -0.375,
                0.375,
                real_matrix(&[&[2.0, 1.0], &[1.0, 3.0]]),
            )],
            vec![],
            vec![crate::spectral::SpectralLine {
                theta: 0.1,
                power: real_matrix(&[&[0.5, 0.0], &[0.0, 0.0]]),
            }],
            None,
        )
        .unwrap();
        let a = autocovariance_from_spectrum(&m, &g(), 0).unwrap();
        let var = m.component_variances().unwrap();
        assert_abs_diff_eq!(a.lags[0][(0, 0)], var[0], epsilon = 1e-12);
        assert_abs_diff_eq!(a.lags[0][(1, 1)], var[1], epsilon = 1e-12);
        assert_abs_diff_eq!(a.lags[0][(0, 1)], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn unit_variance_k1_samples() {
        let a =
            autocovariance_from_spectrum(&SpectralModel::white(1, 1.0).unwrap(), &g(), 0).unwrap();
        let b = sample_paths(&a, 1, 100_000, 11).unwrap();
        let (c0, se) = b.lag_covariance(0).unwrap();
        assert!((c0[(0, 0)] - 1.0).abs() < 5.0 * se[(0, 0)], "{c0} ± {se}");
    }

    #[test]
    fn fully_correlated_pair_samples_are_copies() {
        let m = SpectralModel::flat(real_matrix(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        let a = autocovariance_from_spectrum(&m, &g(), 3).unwrap();
        let b = sample_paths(&a, 4, 100, 3).unwrap();
        for pair in b.data.chunks_exact(2) {
            assert_eq!(pair[0], pair[1]);
        }
    }

    #[test]
    fn band_model_lag_one_matches() {
        let m = SpectralModel::univariate_band(-0.2, 0.2, 2.5).unwrap();
        let a = autocovariance_from_spectrum(&m, &g(), 7).unwrap();
        let b = sample_paths(&a, 8, 20_000, 5).unwrap();
        let (c1, se) = b.lag_covariance(1).unwrap();
        assert!((c1[(0, 0)] - a.lags[1][(0, 0)]).abs() < 5.0 * se[(0, 0)]);
        let bs = sample_paths_spectral(&m, &g(), 64, 2_000, 5).unwrap();
        let (c1, se) = bs.lag_covariance(1).unwrap();
        assert!((c1[(0, 0)] - a.lags[1][(0, 0)]).abs() < 5.0 * se[(0, 0)]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = SpectralModel::univariate_band(-0.2, 0.2, 2.5).unwrap();
        let a = autocovariance_from_spectrum(&m, &g(), 7).unwrap();
        assert_eq!(
            sample_paths(&a, 8, 50, 9).unwrap(),
            sample_paths(&a, 8, 50, 9).unwrap()
        );
        assert_ne!(
            sample_paths(&a, 8, 50, 9).unwrap(),
            sample_paths(&a, 8, 50, 10).unwrap()
        );
        let s1 = sample_paths_spectral(&m, &g(), 128, 10, 9).unwrap();
        assert_eq!(s1, sample_paths_spectral(&m, &g(), 128, 10, 9).unwrap());
    }

    #[test]
    fn indefinite_covariance_fails_with_pivot() {
        let a = AutocovarianceSequence {
            dim: 1,
            lags: vec![real(1.0), real(0.9), real(-0.9)],
            mean: vec![0.0],
            source: String::new(),
        };
        match sample_paths(&a, 3, 1, 0) {
            Err(Error::NotPositiveDefinite { pivot, value }) => {
                assert_eq!(pivot, 2);
                assert!(value < 0.0);
            }
            other => panic!("expected pivot failure, got {other:?}"),
        }
        // A band-limited model has a numerically singular long-block
        // covariance; the semidefinite factor still samples it.
        let m = SpectralModel::univariate_band(-0.05, 0.05, 10.0).unwrap();
        let a = autocovariance_from_spectrum(&m, &g(), 255).unwrap();
        assert!(sample_paths(&a, 256, 2, 0).is_ok());
    }

    fn real(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn welch_white_noise_is_flat() {
        let m = SpectralModel::white(1, 1.0).unwrap();
        let b = sample_paths_spectral(&m, &g(), 1024, 200, 1).unwrap();
        let w = welch_psd(&b, WelchSettings::default()).unwrap();
        for node in 0..w.spectrum.len() {
            let v = w.spectrum.values[node][(0, 0)].re;
            assert!(
                (v - 1.0).abs() < 5.0 * w.se(node, 0, 0) + 1e-12,
                "node {node}: {v}"
            );
        }
        assert_abs_diff_eq!(w.spectrum.integral()[(0, 0)].re, 1.0, epsilon = 0.02);
    }

    #[test]
    fn welch_band_leakage_is_small() {
        let m = SpectralModel::univariate_band(-0.25, 0.25, 2.0).unwrap();
        let b = sample_paths_spectral(&m, &FrequencyGrid::new(8192).unwrap(), 4096, 50, 2).unwrap();
        let w = welch_psd(&b, WelchSettings::default()).unwrap();
        for (t, v) in w.spectrum.nodes.iter().zip(&w.spectrum.values) {
            if (t.abs() - 0.25).abs() > 4.0 / 256.0 {
                let expect = if t.abs() < 0.25 { 2.0 } else { 0.0 };
                // Hann sidelobes decay fast; four bins from an edge the leakage
                // is far below 1% of the in-band level.
                assert!(
                    (v[(0, 0)].re - expect).abs() < 0.2,
                    "θ = {t}: {}",
                    v[(0, 0)].re
                );
                if expect == 0.0 {
                    assert!(v[(0, 0)].re < 1e-3, "θ = {t}: {}", v[(0, 0)].re);
                }
            }
        }
    }

    #[test]
    fn welch_needs_two_segments() {
        let m = SpectralModel::white(1, 1.0).unwrap();
        let b = sample_paths_spectral(&m, &g(), 256, 1, 1).unwrap();
        assert!(matches!(
            welch_psd(&b, WelchSettings::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn binary_and_csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let m = SpectralModel::white(2, 1.0).unwrap();
        let b = sample_paths_spectral(&m, &g(), 16, 3, 4).unwrap();
        let bin = dir.path().join("batch.bin");
        b.write_binary(&bin).unwrap();
        assert_eq!(SamplePathBatch::read_binary(&bin).unwrap(), b);
        let csvp = dir.path().join("batch.csv");
        b.write_csv(&csvp).unwrap();
        let text = std::fs::read_to_string(&csvp).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 32);
        let meta: BatchMetadata = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("batch.csv.json")).unwrap(),
        )
        .unwrap();
        assert_eq!((meta.k, meta.paths, meta.seed), (16, 3, 4));
    }
}
