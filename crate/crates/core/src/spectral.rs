//! Matrix-valued spectral densities of stationary L-variate Gaussian
//! processes and the rank-integral formula for their information dimension
//! rate.
//!
//! A [`SpectralModel`] is the ground truth for everything else in the crate:
//! piecewise-constant Hermitian bands, optional rank-one rational (ARMA)
//! terms, discrete spectral lines and a mean vector. Frequencies are in
//! cycles/sample on [-1/2, 1/2] and densities are power per unit frequency,
//! so that `C(τ) = ∫ e^{-i2πτθ} S(θ) dθ` with `C(τ) = E[X_{t+τ} X_tᵀ]`.
//!
//! The dimension rate is the frequency average of the numerical rank of
//! `S(θ)`, evaluated on a midpoint [`FrequencyGrid`]. Spectral lines are
//! jumps of the distribution function and do not enter the rank integral.

use crate::error::{Error, Result};
use crate::numeric::{hermitian_eigen, hermitian_eigenvalues};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

pub type SpectralMatrix = DMatrix<Complex64>;

const HERMITIAN_TOL: f64 = 1e-12;
/// Relative tolerance on the smallest eigenvalue of a model matrix.
pub const TOL_PSD: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-10;
/// Relative tolerance of the properness test.
pub const PROPERNESS_TOL: f64 = 1e-12;
const ARMA_VARIANCE_GRID: usize = 1 << 15;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Build a complex matrix from real and imaginary row lists.
pub fn complex_matrix(re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> Result<SpectralMatrix> {
    let n = re.len();
    if re.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidModel("matrix real part is not square".into()));
    }
    if let Some(im) = im {
        if im.len() != n || im.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidModel(
                "matrix imaginary part has wrong shape".into(),
            ));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(re[i][j], im.map_or(0.0, |m| m[i][j]))
    }))
}

/// Real symmetric (or any real) matrix from rows.
pub fn real_matrix(rows: &[&[f64]]) -> SpectralMatrix {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| c(rows[i][j]))
}

fn max_abs(m: &SpectralMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_hermitian_psd(m: &SpectralMatrix, what: &str) -> Result<()> {
    let scale = max_abs(m);
    let dev = max_abs(&(m - m.adjoint()));
    if dev > HERMITIAN_TOL * (1.0 + scale) {
        return Err(Error::InvalidModel(format!(
            "{what} is not Hermitian (deviation {dev:e})"
        )));
    }
    let eig = hermitian_eigenvalues(m)
        .ok_or_else(|| Error::InvalidModel(format!("{what}: eigen-solver failed")))?;
    let min = eig.last().copied().unwrap_or(0.0);
    if min < -TOL_PSD * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidModel(format!(
            "{what} is not positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Constant density on `[lo, hi)` (closed at +1/2).
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub density: SpectralMatrix,
}

impl Band {
    pub fn new(lo: f64, hi: f64, density: SpectralMatrix) -> Self {
        Self { lo, hi, density }
    }

    fn contains(&self, theta: f64) -> bool {
        theta >= self.lo && (theta < self.hi || (self.hi >= 0.5 && theta <= 0.5))
    }
}

/// Rank-one rational term `variance · h(θ) h(θ)ᴴ` with
/// `h_i(θ) = N_i(z) / D(z)`, `z = e^{-i2πθ}`, real coefficients in
/// increasing powers of `z`. This is the spectrum of the vector process
/// obtained by filtering one white noise through `N_i(B)/D(B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmaTerm {
    pub numerators: Vec<Vec<f64>>,
    pub denominator: Vec<f64>,
    #[serde(default = "one")]
    pub variance: f64,
}

fn one() -> f64 {
    1.0
}

fn poly_at(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &b| acc * z + b)
}

impl ArmaTerm {
    fn response(&self, theta: f64) -> Option<Vec<Complex64>> {
        let z = Complex64::from_polar(1.0, -2.0 * PI * theta);
        let den = poly_at(&self.denominator, z);
        if den.norm() < 1e-300 {
            return None;
        }
        Some(
            self.numerators
                .iter()
                .map(|n| poly_at(n, z) / den)
                .collect(),
        )
    }

    fn add_density(&self, theta: f64, acc: &mut SpectralMatrix) -> Option<()> {
        let h = self.response(theta)?;
        let l = h.len();
        for i in 0..l {
            for j in 0..l {
                acc[(i, j)] += h[i] * h[j].conj() * self.variance;
            }
        }
        Some(())
    }
}

/// Discrete spectral line. A line at `θ₀ ∈ (0, 1/2)` stands for the
/// conjugate pair of jumps `P/2` at `θ₀` and `conj(P)/2` at `-θ₀`, so it adds
/// `Re(P e^{-i2πτθ₀})` to `C(τ)` and `P_ii` to the variance of component `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralLine {
    pub theta: f64,
    pub power: SpectralMatrix,
}

/// Ground-truth description of a stationary L-variate Gaussian process.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralModel {
    dim: usize,
    bands: Vec<Band>,
    arma_terms: Vec<ArmaTerm>,
    lines: Vec<SpectralLine>,
    mean: Vec<f64>,
}

impl SpectralModel {
    /// Validate and build a model. Bands must lie in [-1/2, 1/2], must not
    /// overlap, and carry Hermitian PSD matrices.
    pub fn new(
        dim: usize,
        mut bands: Vec<Band>,
        arma_terms: Vec<ArmaTerm>,
        lines: Vec<SpectralLine>,
        mean: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mean = mean.unwrap_or_else(|| vec![0.0; dim]);
        if mean.len() != dim {
            return Err(Error::InvalidModel(format!(
                "mean has length {} but L = {dim}",
                mean.len()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidModel("mean is not finite".into()));
        }
        for (b, band) in bands.iter().enumerate() {
            if !(band.lo >= -0.5 && band.hi <= 0.5 && band.lo < band.hi) {
                return Err(Error::InvalidModel(format!(
                    "band {b} [{}, {}) is not a sub-interval of [-1/2, 1/2]",
                    band.lo, band.hi
                )));
            }
            if band.density.nrows() != dim || band.density.ncols() != dim {
                return Err(Error::InvalidModel(format!(
                    "band {b} matrix is not {dim}x{dim}"
                )));
            }
            check_hermitian_psd(&band.density, &format!("band {b} matrix"))?;
        }
        bands.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for w in bands.windows(2) {
            if w[1].lo < w[0].hi {
                return Err(Error::InvalidModel(format!(
                    "bands [{}, {}) and [{}, {}) overlap",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        for (t, term) in arma_terms.iter().enumerate() {
            if term.numerators.len() != dim {
                return Err(Error::InvalidModel(format!(
                    "arma term {t} has {} numerators but L = {dim}",
                    term.numerators.len()
                )));
            }
            if term.denominator.is_empty() || term.denominator[0] == 0.0 {
                return Err(Error::InvalidModel(format!(
                    "arma term {t} needs a denominator with nonzero constant coefficient"
                )));
            }
            if !(term.variance >= 0.0 && term.variance.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "arma term {t} variance is invalid"
                )));
            }
        }
        for (i, line) in lines.iter().enumerate() {
            if !(0.0..=0.5).contains(&line.theta) {
                return Err(Error::InvalidModel(format!(
                    "line {i} at θ = {} must lie in [0, 1/2]",
                    line.theta
                )));
            }
            if line.power.nrows() != dim || line.power.ncols() != dim {
                return Err(Error::InvalidModel(format!(
                    "line {i} matrix is not {dim}x{dim}"
                )));
            }
            check_hermitian_psd(&line.power, &format!("line {i} power"))?;
            let edge = line.theta == 0.0 || line.theta == 0.5;
            if edge && line.power.iter().any(|z| z.im.abs() > HERMITIAN_TOL) {
                return Err(Error::InvalidModel(format!(
                    "line {i} at θ = {} must have a real power matrix",
                    line.theta
                )));
            }
        }
        Ok(Self {
            dim,
            bands,
            arma_terms,
            lines,
            mean,
        })
    }

    /// Constant density `density` over the whole band [-1/2, 1/2].
    pub fn flat(density: SpectralMatrix) -> Result<Self> {
        let dim = density.nrows();
        Self::new(
            dim,
            vec![Band::new(-0.5, 0.5, density)],
            vec![],
            vec![],
            None,
        )
    }

    /// Independent white components of the given variance.
    pub fn white(dim: usize, variance: f64) -> Result<Self> {
        Self::flat(SpectralMatrix::identity(dim, dim) * c(variance))
    }

    /// Univariate process with constant density `height` on `[lo, hi)`.
    pub fn univariate_band(lo: f64, hi: f64, height: f64) -> Result<Self> {
        Self::new(
            1,
            vec![Band::new(lo, hi, real_matrix(&[&[height]]))],
            vec![],
            vec![],
            None,
        )
    }

    /// Identically zero spectrum (a constant process).
    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(dim, vec![], vec![], vec![], None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn arma_terms(&self) -> &[ArmaTerm] {
        &self.arma_terms
    }

    pub fn lines(&self) -> &[SpectralLine] {
        &self.lines
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn with_mean(mut self, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != self.dim {
            return Err(Error::InvalidModel("mean length does not match L".into()));
        }
        self.mean = mean;
        Ok(self)
    }

    /// Number of band endpoints strictly inside (-1/2, 1/2); bounds the
    /// number of grid cells whose rank can change under refinement.
    pub fn interior_endpoints(&self) -> usize {
        self.bands
            .iter()
            .flat_map(|b| [b.lo, b.hi])
            .filter(|e| e.abs() < 0.5)
            .count()
    }

    /// Density `S(θ)` (lines excluded).
    pub fn density_at(&self, theta: f64) -> Result<SpectralMatrix> {
        let mut s = SpectralMatrix::zeros(self.dim, self.dim);
        for band in &self.bands {
            if band.contains(theta) {
                s += &band.density;
            }
        }
        for (t, term) in self.arma_terms.iter().enumerate() {
            term.add_density(theta, &mut s).ok_or_else(|| {
                Error::InvalidModel(format!(
                    "arma term {t} has a pole on the unit circle at θ = {theta}"
                ))
            })?;
        }
        Ok(s)
    }

    /// Variance `C_ii(0)` of each component: band and line power exactly,
    /// rational terms by a fine periodic midpoint rule.
    pub fn component_variances(&self) -> Result<Vec<f64>> {
        let mut var = vec![0.0; self.dim];
        for band in &self.bands {
            for (i, v) in var.iter_mut().enumerate() {
                *v += band.density[(i, i)].re * (band.hi - band.lo);
            }
        }
        for line in &self.lines {
            for (i, v) in var.iter_mut().enumerate() {
                *v += line.power[(i, i)].re;
            }
        }
        if !self.arma_terms.is_empty() {
            let grid = FrequencyGrid::new(ARMA_VARIANCE_GRID)?;
            for term in &self.arma_terms {
                for theta in grid.nodes() {
                    let h = term.response(theta).ok_or_else(|| {
                        Error::InvalidModel(format!("arma term has a pole at θ = {theta}"))
                    })?;
                    for (i, v) in var.iter_mut().enumerate() {
                        *v += term.variance * h[i].norm_sqr() * grid.weight();
                    }
                }
            }
        }
        Ok(var)
    }

    /// Congruence `diag(a) S diag(a)` on every spectral part; the mean is
    /// scaled accordingly.
    pub fn scaled(&self, a: &[f64]) -> Result<Self> {
        if a.len() != self.dim {
            return Err(Error::InvalidModel(
                "scale vector length does not match L".into(),
            ));
        }
        let congruence = |m: &SpectralMatrix| {
            SpectralMatrix::from_fn(self.dim, self.dim, |i, j| m[(i, j)] * (a[i] * a[j]))
        };
        Ok(Self {
            dim: self.dim,
            bands: self
                .bands
                .iter()
                .map(|b| Band::new(b.lo, b.hi, congruence(&b.density)))
                .collect(),
            arma_terms: self
                .arma_terms
                .iter()
                .map(|t| ArmaTerm {
                    numerators: t
                        .numerators
                        .iter()
                        .zip(a)
                        .map(|(n, s)| n.iter().map(|v| v * s).collect())
                        .collect(),
                    denominator: t.denominator.clone(),
                    variance: t.variance,
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| SpectralLine {
                    theta: l.theta,
                    power: congruence(&l.power),
                })
                .collect(),
            mean: self.mean.iter().zip(a).map(|(m, s)| m * s).collect(),
        })
    }

    /// Model of the sub-process made of components `keep` (in that order).
    /// Also serves as a permutation when `keep` is a permutation of `0..L`.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        if keep.iter().any(|&i| i >= self.dim) {
            return Err(Error::InvalidModel("component index out of range".into()));
        }
        let n = keep.len();
        let sub = |m: &SpectralMatrix| SpectralMatrix::from_fn(n, n, |i, j| m[(keep[i], keep[j])]);
        Ok(Self {
            dim: n,
            bands: self
                .bands
                .iter()
                .map(|b| Band::new(b.lo, b.hi, sub(&b.density)))
                .collect(),
            arma_terms: self
                .arma_terms
                .iter()
                .map(|t| ArmaTerm {
                    numerators: keep.iter().map(|&i| t.numerators[i].clone()).collect(),
                    denominator: t.denominator.clone(),
                    variance: t.variance,
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| SpectralLine {
                    theta: l.theta,
                    power: sub(&l.power),
                })
                .collect(),
            mean: keep.iter().map(|&i| self.mean[i]).collect(),
        })
    }

    /// Joint model of two independent processes (block-diagonal spectrum).
    pub fn block_diagonal(&self, other: &Self) -> Result<Self> {
        let (l1, l2) = (self.dim, other.dim);
        let n = l1 + l2;
        let embed = |m: &SpectralMatrix, off: usize| {
            let mut out = SpectralMatrix::zeros(n, n);
            out.view_mut((off, off), (m.nrows(), m.ncols()))
                .copy_from(m);
            out
        };
        // Re-cut both band lists onto the union of their breakpoints.
        let mut cuts: Vec<f64> = vec![-0.5, 0.5];
        for b in self.bands.iter().chain(&other.bands) {
            cuts.push(b.lo);
            cuts.push(b.hi);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut bands = Vec::new();
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let mut dens = SpectralMatrix::zeros(n, n);
            let mut any = false;
            for b in self.bands.iter().filter(|b| b.contains(mid)) {
                dens += embed(&b.density, 0);
                any = true;
            }
            for b in other.bands.iter().filter(|b| b.contains(mid)) {
                dens += embed(&b.density, l1);
                any = true;
            }
            if any {
                bands.push(Band::new(w[0], w[1], dens));
            }
        }
        let pad = |t: &ArmaTerm, off: usize| {
            let mut numerators = vec![vec![0.0]; n];
            for (i, num) in t.numerators.iter().enumerate() {
                numerators[off + i] = num.clone();
            }
            ArmaTerm {
                numerators,
                denominator: t.denominator.clone(),
                variance: t.variance,
            }
        };
        let arma_terms = self
            .arma_terms
            .iter()
            .map(|t| pad(t, 0))
            .chain(other.arma_terms.iter().map(|t| pad(t, l1)))
            .collect();
        let lines = self
            .lines
            .iter()
            .map(|l| SpectralLine {
                theta: l.theta,
                power: embed(&l.power, 0),
            })
            .chain(other.lines.iter().map(|l| SpectralLine {
                theta: l.theta,
                power: embed(&l.power, l1),
            }))
            .collect();
        let mean = self.mean.iter().chain(&other.mean).copied().collect();
        Self::new(n, bands, arma_terms, lines, Some(mean))
    }

    pub fn to_document(&self) -> ModelDocument {
        let split = |m: &SpectralMatrix| {
            let n = m.nrows();
            let re = (0..n)
                .map(|i| (0..n).map(|j| m[(i, j)].re).collect())
                .collect();
            let im: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| m[(i, j)].im).collect())
                .collect();
            let any_im = im.iter().flatten().any(|v| *v != 0.0);
            (re, any_im.then_some(im))
        };
        ModelDocument {
            dim: self.dim,
            bands: self
                .bands
                .iter()
                .map(|b| {
                    let (re, im) = split(&b.density);
                    BandDoc {
                        lo: b.lo,
                        hi: b.hi,
                        re,
                        im,
                    }
                })
                .collect(),
            arma_terms: self.arma_terms.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| {
                    let (re, im) = split(&l.power);
                    LineDoc {
                        theta: l.theta,
                        re,
                        im,
                    }
                })
                .collect(),
            mean: Some(self.mean.clone()),
            grid: None,
            tau_rank: None,
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let bands = doc
            .bands
            .iter()
            .map(|b| {
                Ok(Band::new(
                    b.lo,
                    b.hi,
                    complex_matrix(&b.re, b.im.as_deref())?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let lines = doc
            .lines
            .iter()
            .map(|l| {
                Ok(SpectralLine {
                    theta: l.theta,
                    power: complex_matrix(&l.re, l.im.as_deref())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            doc.dim,
            bands,
            doc.arma_terms.clone(),
            lines,
            doc.mean.clone(),
        )
    }

    /// Hex SHA-256 of the canonical JSON form; identifies the model in batch
    /// metadata.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_document()).expect("model document serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// JSON process-definition document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    #[serde(rename = "L")]
    pub dim: usize,
    #[serde(default)]
    pub bands: Vec<BandDoc>,
    #[serde(default)]
    pub arma_terms: Vec<ArmaTerm>,
    #[serde(default)]
    pub lines: Vec<LineDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Optional grid-size override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// Optional relative rank tolerance override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_rank: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandDoc {
    pub lo: f64,
    pub hi: f64,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineDoc {
    pub theta: f64,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl ModelDocument {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Midpoint grid `θ_j = -1/2 + (j + 1/2)/N`, weights `1/N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrequencyGrid {
    n: usize,
}

pub const DEFAULT_GRID: usize = 4096;

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self { n: DEFAULT_GRID }
    }
}

impl FrequencyGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "grid size must be even and >= 2, got {n}"
            )));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -0.5 + (j as f64 + 0.5) / self.n as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|j| self.node(j))
    }
}

/// Hermitian matrices on a set of frequency nodes with a common
/// quadrature weight. Produced by model evaluation and by spectral
/// estimation.
#[derive(Clone, Debug)]
pub struct GridSpectrum {
    pub nodes: Vec<f64>,
    pub weight: f64,
    pub values: Vec<SpectralMatrix>,
}

impl GridSpectrum {
    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |m| m.nrows())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ_j S(θ_j) · weight`, i.e. the lag-0 covariance of the continuous part.
    pub fn integral(&self) -> SpectralMatrix {
        let d = self.dim();
        self.values
            .iter()
            .fold(SpectralMatrix::zeros(d, d), |acc, m| acc + m)
            * c(self.weight)
    }
}

/// Evaluate `S(θ_j)` on every grid node and verify `S(-θ) = conj(S(θ))`.
pub fn eval_spectrum(model: &SpectralModel, grid: &FrequencyGrid) -> Result<GridSpectrum> {
    let nodes: Vec<f64> = grid.nodes().collect();
    let values = nodes
        .par_iter()
        .map(|&t| model.density_at(t))
        .collect::<Result<Vec<_>>>()?;
    let n = values.len();
    for j in 0..n / 2 {
        let (a, b) = (&values[j], &values[n - 1 - j]);
        let dev = max_abs(&(a - b.conjugate()));
        if dev > SYMMETRY_TOL * (1.0 + max_abs(a)) {
            return Err(Error::SymmetryViolation {
                node: j,
                theta: nodes[j],
                deviation: dev,
            });
        }
    }
    Ok(GridSpectrum {
        nodes,
        weight: grid.weight(),
        values,
    })
}

/// Numerical-rank rule: an eigenvalue counts iff it exceeds
/// `relative · max(λ_max, floor_abs)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTolerance {
    pub relative: f64,
    pub floor_abs: f64,
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-9,
            floor_abs: 1e-300,
        }
    }
}

impl RankTolerance {
    pub fn threshold(&self, lambda_max: f64) -> f64 {
        self.relative * lambda_max.max(self.floor_abs)
    }

    pub fn rank(&self, eigenvalues_desc: &[f64]) -> usize {
        let top = eigenvalues_desc.first().copied().unwrap_or(0.0);
        let thr = self.threshold(top);
        eigenvalues_desc.iter().filter(|&&v| v > thr).count()
    }
}

/// Per-node eigenvalues and numerical ranks.
#[derive(Clone, Debug)]
pub struct RankProfile {
    pub nodes: Vec<f64>,
    pub weight: f64,
    pub ranks: Vec<usize>,
    pub eigenvalues: Vec<Vec<f64>>,
    pub tolerance: RankTolerance,
}

impl RankProfile {
    pub fn integral(&self) -> f64 {
        self.ranks.iter().map(|&r| r as f64).sum::<f64>() * self.weight
    }

    /// Fraction of frequency mass at each rank `0..=L`.
    pub fn rank_fractions(&self, dim: usize) -> Vec<f64> {
        let mut f = vec![0.0; dim + 1];
        for &r in &self.ranks {
            f[r] += self.weight;
        }
        f
    }
}

pub fn rank_profile(spectrum: &GridSpectrum, tol: RankTolerance) -> Result<RankProfile> {
    let eigenvalues = spectrum
        .values
        .par_iter()
        .enumerate()
        .map(|(j, m)| {
            hermitian_eigenvalues(m).ok_or(Error::EigenFailure {
                node: j,
                theta: spectrum.nodes[j],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ranks = eigenvalues.iter().map(|e| tol.rank(e)).collect();
    Ok(RankProfile {
        nodes: spectrum.nodes.clone(),
        weight: spectrum.weight,
        ranks,
        eigenvalues,
        tolerance: tol,
    })
}

#[derive(Clone, Debug)]
pub struct RankIntegral {
    pub value: f64,
    /// Change from splitting grid cells at band endpoints; already in `value`.
    pub endpoint_correction: f64,
    pub profile: RankProfile,
}

/// Grid cells that contain a band endpoint are re-integrated piecewise,
/// with the rank taken at the midpoint of each piece, so band models
/// integrate exactly whatever their endpoints.
fn endpoint_correction(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    profile: &RankProfile,
) -> Result<f64> {
    let n = grid.len() as f64;
    let mut cuts: Vec<f64> = model
        .bands()
        .iter()
        .flat_map(|b| [b.lo, b.hi])
        .filter(|e| e.abs() < 0.5)
        .filter(|e| {
            let pos = (e + 0.5) * n;
            (pos - pos.round()).abs() > 1e-9
        })
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut correction = 0.0;
    let mut i = 0;
    while i < cuts.len() {
        let cell = ((cuts[i] + 0.5) * n).floor() as usize;
        let lo = -0.5 + cell as f64 / n;
        let hi = -0.5 + (cell + 1) as f64 / n;
        let mut edges = vec![lo];
        while i < cuts.len() && cuts[i] < hi {
            edges.push(cuts[i]);
            i += 1;
        }
        edges.push(hi);
        let mut piecewise = 0.0;
        for w in edges.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let eig =
                hermitian_eigenvalues(&model.density_at(mid)?).ok_or(Error::EigenFailure {
                    node: cell,
                    theta: mid,
                })?;
            piecewise += profile.tolerance.rank(&eig) as f64 * (w[1] - w[0]);
        }
        correction += piecewise - profile.ranks[cell] as f64 * profile.weight;
    }
    Ok(correction)
}

/// `∫ rank S(θ) dθ` by the midpoint rule with cells split at band
/// endpoints; always within `[0, L]`.
pub fn rank_integral(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    tol: RankTolerance,
) -> Result<RankIntegral> {
    if grid.len() < 64 {
        return Err(Error::Domain(format!(
            "rank integral needs at least 64 grid nodes, got {}",
            grid.len()
        )));
    }
    let spectrum = eval_spectrum(model, grid)?;
    let profile = rank_profile(&spectrum, tol)?;
    let endpoint_correction = endpoint_correction(model, grid, &profile)?;
    Ok(RankIntegral {
        value: profile.integral() + endpoint_correction,
        endpoint_correction,
        profile,
    })
}

/// A complex process `Z = R + iI` seen as the bivariate real process (R, I).
#[derive(Clone, Debug)]
pub struct ComplexSpectrum {
    pub bivariate: GridSpectrum,
    /// `S_Z = S_R + S_I + 2 Im(S_RI)` per node.
    pub s_z: Vec<f64>,
}

/// Assemble `[[S_R, S_RI], [conj S_RI, S_I]]` per node and derive `S_Z`.
pub fn complex_to_bivariate(
    grid: &FrequencyGrid,
    s_r: &[f64],
    s_i: &[f64],
    s_ri: &[Complex64],
) -> Result<ComplexSpectrum> {
    let n = grid.len();
    if s_r.len() != n || s_i.len() != n || s_ri.len() != n {
        return Err(Error::Domain(
            "complex spectrum inputs must match the grid length".into(),
        ));
    }
    let mut values = Vec::with_capacity(n);
    let mut s_z = Vec::with_capacity(n);
    for j in 0..n {
        let (r, i, x) = (s_r[j], s_i[j], s_ri[j]);
        let scale = 1.0 + r.abs().max(i.abs());
        let tol = TOL_PSD * scale * scale;
        if r < -tol || i < -tol || r * i - x.norm_sqr() < -tol {
            return Err(Error::NotPsdNode {
                node: j,
                theta: grid.node(j),
                detail: format!(
                    "S_R = {r}, S_I = {i}, |S_RI|² = {} violates S_R·S_I ≥ |S_RI|²",
                    x.norm_sqr()
                ),
            });
        }
        values.push(SpectralMatrix::from_row_slice(
            2,
            2,
            &[c(r), x, x.conj(), c(i)],
        ));
        s_z.push(r + i + 2.0 * x.im);
    }
    Ok(ComplexSpectrum {
        bivariate: GridSpectrum {
            nodes: grid.nodes().collect(),
            weight: grid.weight(),
            values,
        },
        s_z,
    })
}

impl ComplexSpectrum {
    /// View a bivariate (R, I) spectrum as a complex process.
    pub fn from_bivariate(spectrum: GridSpectrum) -> Result<Self> {
        if spectrum.dim() != 2 {
            return Err(Error::Domain(
                "complex analysis needs a bivariate model".into(),
            ));
        }
        let s_z = spectrum
            .values
            .iter()
            .map(|m| m[(0, 0)].re + m[(1, 1)].re + 2.0 * m[(0, 1)].im)
            .collect();
        Ok(Self {
            bivariate: spectrum,
            s_z,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Properness {
    pub proper: bool,
    /// `max_j |S_R - S_I| / (1 + ‖S‖)`.
    pub max_diagonal_gap: f64,
    /// `max_j |Re S_RI| / (1 + ‖S‖)`.
    pub max_real_cross: f64,
    pub tolerance: f64,
    /// Node of the largest violation.
    pub worst_node: usize,
}

/// Proper iff per node `S_R = S_I` and `S_RI` is purely imaginary.
pub fn properness_check(spectrum: &GridSpectrum) -> Result<Properness> {
    if spectrum.dim() != 2 {
        return Err(Error::Domain(
            "properness is defined for bivariate (R, I) models".into(),
        ));
    }
    let mut out = Properness {
        proper: true,
        max_diagonal_gap: 0.0,
        max_real_cross: 0.0,
        tolerance: PROPERNESS_TOL,
        worst_node: 0,
    };
    let mut worst = 0.0;
    for (j, m) in spectrum.values.iter().enumerate() {
        let norm = 1.0 + m.norm();
        let gap = (m[(0, 0)].re - m[(1, 1)].re).abs() / norm;
        let real = m[(0, 1)].re.abs() / norm;
        out.max_diagonal_gap = out.max_diagonal_gap.max(gap);
        out.max_real_cross = out.max_real_cross.max(real);
        if gap.max(real) > worst {
            worst = gap.max(real);
            out.worst_node = j;
        }
    }
    out.proper = out.max_diagonal_gap <= PROPERNESS_TOL && out.max_real_cross <= PROPERNESS_TOL;
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CorollaryBound {
    pub d_exact: f64,
    /// `λ{θ : S_Z(θ) > 0}`.
    pub support_measure: f64,
    /// `2 · support_measure`.
    pub bound: f64,
    pub grid_tolerance: f64,
    /// `d_exact ≤ bound + grid_tolerance`.
    pub ordering_holds: bool,
    /// `|d_exact - bound| ≤ grid_tolerance`.
    pub equal: bool,
}

/// Compare the rank integral of a complex process with twice the measure of
/// the support of its spectral density.
pub fn corollary_bound(
    model: &SpectralModel,
    grid: &FrequencyGrid,
    tol: RankTolerance,
) -> Result<CorollaryBound> {
    let spectrum = eval_spectrum(model, grid)?;
    let profile = rank_profile(&spectrum, tol)?;
    let complex = ComplexSpectrum::from_bivariate(spectrum)?;
    let d_exact = profile.integral() + endpoint_correction(model, grid, &profile)?;
    let support = complex
        .s_z
        .iter()
        .zip(&profile.eigenvalues)
        .filter(|(sz, eig)| **sz > tol.threshold(eig[0]))
        .count() as f64
        * grid.weight();
    let bound = 2.0 * support;
    let grid_tolerance = model.interior_endpoints().max(1) as f64 * grid.weight();
    Ok(CorollaryBound {
        d_exact,
        support_measure: support,
        bound,
        grid_tolerance,
        ordering_holds: d_exact <= bound + grid_tolerance,
        equal: (d_exact - bound).abs() <= grid_tolerance,
    })
}

/// Result of removing zero-variance components and rescaling the rest to
/// unit variance.
#[derive(Clone, Debug)]
pub struct Normalization {
    pub model: SpectralModel,
    /// Indices (into the original model) of removed components.
    pub dropped: Vec<usize>,
    /// Indices of kept components, in order.
    pub kept: Vec<usize>,
    /// Standard deviation of each kept component before scaling.
    pub std_devs: Vec<f64>,
}

/// Relative threshold below which a component variance counts as zero.
pub const ZERO_VARIANCE_TOL: f64 = 1e-14;

pub fn normalize_components(model: &SpectralModel) -> Result<Normalization> {
    let var = model.component_variances()?;
    let top = var.iter().copied().fold(0.0, f64::max);
    let (kept, dropped): (Vec<usize>, Vec<usize>) =
        (0..model.dim()).partition(|&i| var[i] > ZERO_VARIANCE_TOL * top && var[i] > 0.0);
    let std_devs: Vec<f64> = kept.iter().map(|&i| var[i].sqrt()).collect();
    let reduced = model.select(&kept)?;
    let inv: Vec<f64> = std_devs.iter().map(|s| 1.0 / s).collect();
    Ok(Normalization {
        model: reduced.scaled(&inv)?,
        dropped,
        kept,
        std_devs,
    })
}

/// Factor `S = A Aᴴ` with `A = V diag(√λ₊)`; used by spectral synthesis.
pub(crate) fn psd_factor(m: &SpectralMatrix) -> Option<SpectralMatrix> {
    let n = m.nrows();
    if n == 1 {
        return Some(SpectralMatrix::from_element(
            1,
            1,
            c(m[(0, 0)].re.max(0.0).sqrt()),
        ));
    }
    let e = hermitian_eigen(m)?;
    Some(SpectralMatrix::from_fn(n, n, |i, j| {
        e.vectors[(i, j)] * e.values[j].max(0.0).sqrt()
    }))
}
