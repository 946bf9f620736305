//! Empirical information dimension rate: block-entropy slope in `log m`,
//! the dithered Gaussian-surrogate spectral estimate, and the scale and
//! translation invariance checks.
//!
//! Both estimators read the dimension as a slope against `log m` rather
//! than a ratio `H/log m`, which removes the additive constant in
//! `H ≈ d log m + c`.

use crate::entropy::{
    block_counts, entropy_from_counts, exact_cell_entropy_gaussian, EntropyEstimate,
};
use crate::error::{Error, Result};
use crate::numeric::{hermitian_eigenvalues, ls_slope};
use crate::quant::{dither, quantize};
use crate::rng::derive_seed;
use crate::sim::{
    autocovariance_from_spectrum, sample_paths, sample_paths_spectral, welch_psd, SamplePathBatch,
    WelchSettings,
};
use crate::spectral::{
    normalize_components, rank_integral, FrequencyGrid, GridSpectrum, RankTolerance, SpectralModel,
    ZERO_VARIANCE_TOL,
};
use serde::{Deserialize, Serialize};

/// Slack on the `[0, L]` range check of a reported estimate.
pub const RANGE_SLACK: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimensionMethod {
    BlockEntropySlope,
    GaussianSurrogate,
    RateDistortion,
}

/// Per-precision value entering a slope fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderPoint {
    pub m: u32,
    /// `Ĥ_k/k` or `g(m)`, in nats.
    pub value: f64,
    pub se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupied: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub value: f64,
    pub se: f64,
    pub method: DimensionMethod,
    #[serde(rename = "L")]
    pub dim: usize,
    pub m_ladder: Vec<u32>,
    pub k: usize,
    #[serde(rename = "R")]
    pub paths: usize,
    /// Rank integral of the generating model, when known.
    pub reference: Option<f64>,
    pub ladder: Vec<LadderPoint>,
    /// Distortion ladder of a rate-distortion estimate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub d_ladder: Vec<f64>,
    /// Largest minus smallest slope between consecutive ladder points; a
    /// proxy for the gap between upper and lower limits.
    pub spread: f64,
    /// `-0.1 ≤ value ≤ L + 0.1`.
    pub in_range: bool,
}

impl DimensionEstimate {
    fn from_ladder(
        method: DimensionMethod,
        dim: usize,
        offset: f64,
        ladder: Vec<LadderPoint>,
        se: f64,
        k: usize,
        paths: usize,
    ) -> Self {
        let x: Vec<f64> = ladder.iter().map(|p| f64::from(p.m).ln()).collect();
        let y: Vec<f64> = ladder.iter().map(|p| p.value).collect();
        let (slope, _, _) = ls_slope(&x, &y);
        let value = offset + slope;
        let local: Vec<f64> = x
            .windows(2)
            .zip(y.windows(2))
            .map(|(a, b)| (b[1] - b[0]) / (a[1] - a[0]))
            .collect();
        let spread = local.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - local.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            value,
            se,
            method,
            dim,
            m_ladder: ladder.iter().map(|p| p.m).collect(),
            k,
            paths,
            reference: None,
            ladder,
            d_ladder: Vec::new(),
            spread: if spread.is_finite() { spread } else { 0.0 },
            in_range: (-RANGE_SLACK..=dim as f64 + RANGE_SLACK).contains(&value),
        }
    }

    /// Estimate for a model with no non-degenerate component.
    fn degenerate(method: DimensionMethod, m_ladder: &[u32], k: usize, paths: usize) -> Self {
        Self {
            value: 0.0,
            se: 0.0,
            method,
            dim: 0,
            m_ladder: m_ladder.to_vec(),
            k,
            paths,
            reference: Some(0.0),
            ladder: Vec::new(),
            d_ladder: Vec::new(),
            spread: 0.0,
            in_range: true,
        }
    }
}

fn check_ladder(ladder: &[u32]) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::Domain(
            "m ladder needs at least two precisions".into(),
        ));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) || ladder[0] == 0 {
        return Err(Error::Domain(format!(
            "m ladder must be increasing and positive: {ladder:?}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeSettings {
    pub m_ladder: Vec<u32>,
    /// Block length; `None` picks the largest `k ≤ AUTO_MAX_K` that passes
    /// the undersampling guard at the finest `m`.
    pub k: Option<usize>,
    pub paths: usize,
    pub seed: u64,
    pub miller_madow: bool,
}

impl Default for SlopeSettings {
    fn default() -> Self {
        Self {
            m_ladder: vec![8, 16, 32, 64],
            k: None,
            paths: 1_000_000,
            seed: 0,
            miller_madow: true,
        }
    }
}

/// Refuse plug-in entropy once occupied cells exceed this fraction of `R`.
pub const UNDERSAMPLING_FRACTION: usize = 10;

/// Slope of `Ĥ([X_1^k]_m)/k` against `log m`, each path being one block.
///
/// The standard error is the delta-method one: the slope is a linear
/// combination of plug-in entropies over the same blocks, so its influence
/// per block is `Σ_i c_i (-log p̂_{m_i}(block))/k`.
pub fn idr_slope_from_batch(
    batch: &SamplePathBatch,
    m_ladder: &[u32],
    miller_madow: bool,
) -> Result<DimensionEstimate> {
    check_ladder(m_ladder)?;
    let k = batch.k as f64;
    let limit = batch.paths / UNDERSAMPLING_FRACTION;
    let mut ladder = Vec::with_capacity(m_ladder.len());
    let mut logp: Vec<Vec<f64>> = Vec::with_capacity(m_ladder.len());
    for &m in m_ladder {
        let q = quantize(batch, m)?;
        let counts = block_counts(&q);
        if counts.len() > limit {
            return Err(Error::Undersampled {
                occupied: counts.len(),
                limit,
                m,
            });
        }
        let n = batch.paths as f64;
        logp.push(
            (0..batch.paths)
                .map(|r| (counts[q.path(r)] as f64 / n).ln())
                .collect(),
        );
        let h: EntropyEstimate = entropy_from_counts(counts.into_values().collect(), miller_madow)?;
        ladder.push(LadderPoint {
            m,
            value: h.value / k,
            se: h.se / k,
            occupied: Some(h.occupied),
        });
    }
    let x: Vec<f64> = m_ladder.iter().map(|&m| f64::from(m).ln()).collect();
    let (_, _, c) = ls_slope(&x, &vec![0.0; x.len()]);
    let influence: Vec<f64> = (0..batch.paths)
        .map(|r| -c.iter().zip(&logp).map(|(ci, lp)| ci * lp[r]).sum::<f64>() / k)
        .collect();
    let n = influence.len() as f64;
    let mean = influence.iter().sum::<f64>() / n;
    let var = influence.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(DimensionEstimate::from_ladder(
        DimensionMethod::BlockEntropySlope,
        batch.dim,
        0.0,
        ladder,
        (var / n).sqrt(),
        batch.k,
        batch.paths,
    ))
}

/// Model variant with zero-variance components removed.
fn drop_degenerate(model: &SpectralModel) -> Result<SpectralModel> {
    let var = model.component_variances()?;
    let top = var.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..model.dim())
        .filter(|&i| var[i] > ZERO_VARIANCE_TOL * top && var[i] > 0.0)
        .collect();
    model.select(&keep)
}

/// Sample `R` blocks of length `k` with the dense exact sampler.
pub fn sample_blocks(
    model: &SpectralModel,
    k: usize,
    paths: usize,
    seed: u64,
) -> Result<SamplePathBatch> {
    let acov = autocovariance_from_spectrum(model, &FrequencyGrid::default(), k.saturating_sub(1))?;
    sample_paths(&acov, k, paths, derive_seed(seed, "paths"))
}

pub const AUTO_MAX_K: usize = 4;

/// First `k` time steps of every path.
fn truncate(batch: &SamplePathBatch, k: usize) -> SamplePathBatch {
    let width = batch.dim * batch.k;
    let keep = batch.dim * k;
    let data = batch
        .data
        .chunks(width)
        .flat_map(|p| p[..keep].iter().copied())
        .collect();
    SamplePathBatch {
        k,
        data,
        ..batch.clone()
    }
}

/// Largest block length whose occupied-cell count at `m` stays within the
/// guard; prefixes of longer paths are valid shorter blocks.
pub fn guarded_block_length(batch: &SamplePathBatch, m: u32) -> Result<usize> {
    let limit = batch.paths / UNDERSAMPLING_FRACTION;
    for k in (1..=batch.k).rev() {
        let occupied = block_counts(&quantize(&truncate(batch, k), m)?).len();
        if occupied <= limit {
            return Ok(k);
        }
    }
    Err(Error::Undersampled {
        occupied: limit + 1,
        limit,
        m,
    })
}

/// Draw the blocks and settle the block length.
fn guarded_batch(model: &SpectralModel, settings: &SlopeSettings) -> Result<SamplePathBatch> {
    match settings.k {
        Some(k) => sample_blocks(model, k, settings.paths, settings.seed),
        None => {
            let long = sample_blocks(model, AUTO_MAX_K, settings.paths, settings.seed)?;
            let top = *settings.m_ladder.last().expect("ladder checked");
            Ok(truncate(&long, guarded_block_length(&long, top)?))
        }
    }
}

pub fn idr_slope_estimate(
    model: &SpectralModel,
    settings: &SlopeSettings,
) -> Result<DimensionEstimate> {
    check_ladder(&settings.m_ladder)?;
    let reduced = drop_degenerate(model)?;
    let reference =
        rank_integral(model, &FrequencyGrid::default(), RankTolerance::default())?.value;
    if reduced.dim() == 0 {
        return Ok(DimensionEstimate::degenerate(
            DimensionMethod::BlockEntropySlope,
            &settings.m_ladder,
            settings.k.unwrap_or(1),
            settings.paths,
        ));
    }
    let batch = guarded_batch(&reduced, settings)?;
    let mut est = idr_slope_from_batch(&batch, &settings.m_ladder, settings.miller_madow)?;
    est.dim = model.dim();
    est.reference = Some(reference);
    Ok(est)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSettings {
    pub m_ladder: Vec<u32>,
    pub k: usize,
    pub paths: usize,
    pub seed: u64,
    pub welch: WelchSettings,
    /// Frequency grid of the spectral sampler; at least `k`.
    pub synthesis_grid: usize,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        Self {
            m_ladder: vec![16, 64, 256],
            k: 4096,
            paths: 200,
            seed: 0,
            welch: WelchSettings::default(),
            synthesis_grid: 16_384,
        }
    }
}

/// Eigenvalue floor of the dithered spectrum, relative to the dither level.
pub const DITHER_FLOOR_FRACTION: f64 = 1e-2;

/// `½ ∫ log det Ŝ(θ) dθ` with eigenvalues floored at `floor`.
pub fn half_log_det_integral(spectrum: &GridSpectrum, floor: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (j, s) in spectrum.values.iter().enumerate() {
        let eig = hermitian_eigenvalues(s).ok_or(Error::EigenFailure {
            node: j,
            theta: spectrum.nodes[j],
        })?;
        acc += eig.iter().map(|&v| v.max(floor).ln()).sum::<f64>() * spectrum.weight;
    }
    Ok(0.5 * acc)
}

/// `L + slope of g(m)` where `g(m) = ½ ∫ log det Ŝ_W` and `W` is the
/// dithered quantization of the batch. Standard errors come from the Welch
/// path groups.
pub fn surrogate_from_batch(
    batch: &SamplePathBatch,
    m_ladder: &[u32],
    welch: WelchSettings,
    seed: u64,
) -> Result<DimensionEstimate> {
    check_ladder(m_ladder)?;
    let mut ladder = Vec::new();
    let mut group_values: Vec<Vec<f64>> = Vec::new();
    for &m in m_ladder {
        let q = quantize(batch, m)?;
        let w = dither(&q, derive_seed(seed, &format!("dither:m={m}")));
        let est = welch_psd(&w, welch)?;
        let floor = DITHER_FLOOR_FRACTION / (12.0 * f64::from(m).powi(2));
        let g = half_log_det_integral(&est.spectrum, floor)?;
        let groups = est
            .groups
            .iter()
            .map(|s| half_log_det_integral(s, floor))
            .collect::<Result<Vec<_>>>()?;
        let ng = groups.len() as f64;
        let gm = groups.iter().sum::<f64>() / ng;
        let se = (groups.iter().map(|v| (v - gm).powi(2)).sum::<f64>() / (ng - 1.0).max(1.0) / ng)
            .sqrt();
        ladder.push(LadderPoint {
            m,
            value: g,
            se,
            occupied: None,
        });
        group_values.push(groups);
    }
    let x: Vec<f64> = m_ladder.iter().map(|&m| f64::from(m).ln()).collect();
    let ng = group_values[0].len();
    let slopes: Vec<f64> = (0..ng)
        .map(|gi| ls_slope(&x, &group_values.iter().map(|g| g[gi]).collect::<Vec<_>>()).0)
        .collect();
    let sm = slopes.iter().sum::<f64>() / ng as f64;
    let se = (slopes.iter().map(|v| (v - sm).powi(2)).sum::<f64>()
        / (ng as f64 - 1.0).max(1.0)
        / ng as f64)
        .sqrt();
    Ok(DimensionEstimate::from_ladder(
        DimensionMethod::GaussianSurrogate,
        batch.dim,
        batch.dim as f64,
        ladder,
        se,
        batch.k,
        batch.paths,
    ))
}

/// Surrogate estimate on the unit-variance normalization of a model,
/// sampled with the spectral synthesizer.
pub fn surrogate_idr_estimate(
    model: &SpectralModel,
    settings: &SurrogateSettings,
) -> Result<DimensionEstimate> {
    check_ladder(&settings.m_ladder)?;
    let reference =
        rank_integral(model, &FrequencyGrid::default(), RankTolerance::default())?.value;
    let norm = normalize_components(model)?;
    if norm.model.dim() == 0 {
        return Ok(DimensionEstimate::degenerate(
            DimensionMethod::GaussianSurrogate,
            &settings.m_ladder,
            settings.k,
            settings.paths,
        ));
    }
    let grid = FrequencyGrid::new(settings.synthesis_grid.max(settings.k).next_multiple_of(2))?;
    let batch = sample_paths_spectral(
        &norm.model,
        &grid,
        settings.k,
        settings.paths,
        derive_seed(settings.seed, "paths"),
    )?;
    let mut est = surrogate_from_batch(&batch, &settings.m_ladder, settings.welch, settings.seed)?;
    est.dim = model.dim();
    est.reference = Some(reference);
    Ok(est)
}

/// Transformation applied to every sample path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    /// Per-component positive gains `a_i` (one value broadcasts).
    Scale(Vec<f64>),
    /// Offsets `c`: one value, one per component, or one per block entry
    /// (`k·L`, time-major).
    Translate(Vec<f64>),
}

impl Transform {
    fn expand(values: &[f64], dim: usize, k: usize) -> Result<Vec<f64>> {
        match values.len() {
            1 => Ok(vec![values[0]; dim * k]),
            n if n == dim => Ok((0..k).flat_map(|_| values.iter().copied()).collect()),
            n if n == dim * k => Ok(values.to_vec()),
            n => Err(Error::Domain(format!(
                "transform has {n} values; expected 1, L = {dim} or k·L = {}",
                dim * k
            ))),
        }
    }

    pub fn apply(&self, batch: &SamplePathBatch) -> Result<SamplePathBatch> {
        let w = batch.dim * batch.k;
        let (vals, scale) = match self {
            Transform::Scale(a) => {
                if a.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Domain("scale factors must be positive".into()));
                }
                (Self::expand(a, batch.dim, batch.k)?, true)
            }
            Transform::Translate(c) => (Self::expand(c, batch.dim, batch.k)?, false),
        };
        let data = batch
            .data
            .iter()
            .enumerate()
            .map(|(idx, &x)| {
                if scale {
                    x * vals[idx % w]
                } else {
                    x + vals[idx % w]
                }
            })
            .collect();
        Ok(batch.with_data(data))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TranslationEntropyCheck {
    pub m: u32,
    pub offset: Vec<f64>,
    pub entropy_base: f64,
    pub entropy_shifted: f64,
    pub delta: f64,
    /// `k·L·log 4`.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub transform: Transform,
    pub base: DimensionEstimate,
    pub transformed: DimensionEstimate,
    pub delta: f64,
    pub tolerance: f64,
    /// Exact entropy shift checks at `k·L ≤ 3`: the requested offset and a
    /// non-lattice one.
    pub exact: Vec<TranslationEntropyCheck>,
    pub pass: bool,
}

pub const INVARIANCE_TOLERANCE: f64 = 0.05;
/// Added to the requested offset so the exact check also covers a shift that
/// is not a multiple of `1/m`.
pub const NON_LATTICE_SHIFT: f64 = 0.37;

/// Slope estimates on a base batch and its transform, sharing the same
/// underlying draws.
pub fn invariance_suite(
    model: &SpectralModel,
    transform: &Transform,
    settings: &SlopeSettings,
) -> Result<InvarianceReport> {
    check_ladder(&settings.m_ladder)?;
    let reduced = drop_degenerate(model)?;
    if reduced.dim() == 0 {
        return Err(Error::Domain(
            "invariance suite needs a component with positive variance".into(),
        ));
    }
    // One block length for both batches, guarded on each.
    let (batch, moved) = match settings.k {
        Some(k) => {
            let b = sample_blocks(&reduced, k, settings.paths, settings.seed)?;
            let t = transform.apply(&b)?;
            (b, t)
        }
        None => {
            let long = sample_blocks(&reduced, AUTO_MAX_K, settings.paths, settings.seed)?;
            let long_moved = transform.apply(&long)?;
            let top = *settings.m_ladder.last().expect("ladder checked");
            let k = guarded_block_length(&long, top)?.min(guarded_block_length(&long_moved, top)?);
            (truncate(&long, k), truncate(&long_moved, k))
        }
    };
    let k = batch.k;
    let base = idr_slope_from_batch(&batch, &settings.m_ladder, settings.miller_madow)?;
    let transformed = idr_slope_from_batch(&moved, &settings.m_ladder, settings.miller_madow)?;
    let delta = (transformed.value - base.value).abs();

    let mut exact = Vec::new();
    let kl = reduced.dim() * k;
    if let (Transform::Translate(c), true) = (transform, kl <= crate::entropy::ORACLE_MAX_DIM) {
        let acov = autocovariance_from_spectrum(&reduced, &FrequencyGrid::default(), k - 1)?;
        let mean = acov.block_mean(k);
        let cov = acov.block_toeplitz(k)?;
        let offset = Transform::expand(c, reduced.dim(), k)?;
        let m = settings.m_ladder[0];
        let h0 = exact_cell_entropy_gaussian(&mean, &cov, m)?.value;
        let bound = kl as f64 * 4f64.ln();
        for extra in [0.0, NON_LATTICE_SHIFT] {
            let off: Vec<f64> = offset.iter().map(|v| v + extra).collect();
            let shifted: Vec<f64> = mean.iter().zip(&off).map(|(a, b)| a + b).collect();
            let h1 = exact_cell_entropy_gaussian(&shifted, &cov, m)?.value;
            let d = (h1 - h0).abs();
            exact.push(TranslationEntropyCheck {
                m,
                offset: off,
                entropy_base: h0,
                entropy_shifted: h1,
                delta: d,
                bound,
                pass: d <= bound,
            });
        }
    }
    let pass = delta <= INVARIANCE_TOLERANCE && exact.iter().all(|c| c.pass);
    Ok(InvarianceReport {
        transform: transform.clone(),
        base,
        transformed,
        delta,
        tolerance: INVARIANCE_TOLERANCE,
        exact,
        pass,
    })
}
