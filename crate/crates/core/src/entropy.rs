//! Entropy of quantized Gaussian vectors: plug-in estimates from samples and
//! a quadrature oracle over lattice cells for small blocks (`k·L ≤ 3`).
//!
//! The oracle integrates the Gaussian sequentially: axis `i` is distributed
//! as `N(μ_i + bᵢᵀ(x_{<i} - μ_{<i}), v_i)` given the earlier axes. Axes with
//! zero conditional variance are affine functions of the earlier ones and
//! are followed exactly; the interval of the preceding axis is split where
//! their cell index changes. Free axes are integrated with Gauss–Legendre
//! panels, and the last one analytically.

use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, normal_cdf, normal_pdf, symmetric_eigenvalues};
use crate::quant::QuantizedPathBatch;
use crate::sim::autocovariance_from_spectrum;
use crate::spectral::{FrequencyGrid, SpectralModel};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{E, PI};
use std::hash::Hash;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMethod {
    PlugIn,
    MillerMadow,
    QuadratureOracle,
}

/// Entropy in nats. For sample estimates `se` is a standard error; for the
/// oracle it bounds the error from unaccounted probability mass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub method: EntropyMethod,
    pub samples: usize,
    pub occupied: usize,
    pub se: f64,
}

/// Entropy from cell counts. Counts are sorted first so the floating-point
/// sum does not depend on hash order.
pub fn entropy_from_counts(mut counts: Vec<u64>, miller_madow: bool) -> Result<EntropyEstimate> {
    counts.retain(|&c| c > 0);
    if counts.is_empty() {
        return Err(Error::InsufficientData("entropy of an empty sample".into()));
    }
    counts.sort_unstable();
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let ln_n = nf.ln();
    let (mut h, mut h2) = (0.0, 0.0);
    for &c in &counts {
        let p = c as f64 / nf;
        let l = (c as f64).ln() - ln_n;
        h -= p * l;
        h2 += p * l * l;
    }
    let h = h.max(0.0);
    let se = ((h2 - h * h).max(0.0) / nf).sqrt();
    let occupied = counts.len();
    let (value, method) = if miller_madow {
        (
            h + (occupied as f64 - 1.0) / (2.0 * nf),
            EntropyMethod::MillerMadow,
        )
    } else {
        (h, EntropyMethod::PlugIn)
    };
    Ok(EntropyEstimate {
        value,
        method,
        samples: n as usize,
        occupied,
        se,
    })
}

/// Plug-in entropy of a multiset of symbols.
pub fn plugin_entropy<T: Hash + Eq>(symbols: &[T], miller_madow: bool) -> Result<EntropyEstimate> {
    let mut map: HashMap<&T, u64> = HashMap::new();
    for s in symbols {
        *map.entry(s).or_default() += 1;
    }
    entropy_from_counts(map.into_values().collect(), miller_madow)
}

/// Counts of whole-path code blocks (each path is one `k·L` symbol).
pub fn block_counts(q: &QuantizedPathBatch) -> HashMap<Box<[i64]>, u64> {
    (0..q.paths)
        .into_par_iter()
        .fold(HashMap::new, |mut map: HashMap<Box<[i64]>, u64>, r| {
            *map.entry(q.path(r).into()).or_default() += 1;
            map
        })
        .reduce(HashMap::new, |mut a, b| {
            for (key, c) in b {
                *a.entry(key).or_default() += c;
            }
            a
        })
}

/// Plug-in entropy of whole-path blocks.
pub fn block_entropy(q: &QuantizedPathBatch, miller_madow: bool) -> Result<EntropyEstimate> {
    entropy_from_counts(block_counts(q).into_values().collect(), miller_madow)
}

/// Half-width of the integration window in conditional standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 8.0;
/// Gauss–Legendre nodes per panel.
pub const GL_NODES: usize = 32;
/// Largest unaccounted mass accepted by the oracle.
pub const MAX_MISSING_MASS: f64 = 1e-12;
const MAX_PANELS: usize = 256;

/// Probabilities of the lattice cells `{x : ⌊m x⌋ = c}` of a Gaussian vector.
#[derive(Clone, Debug)]
pub struct CellTable {
    pub m: u32,
    /// Cells in lexicographic order with their probabilities.
    pub cells: Vec<(Vec<i64>, f64)>,
    /// Total probability captured.
    pub captured: f64,
}

impl CellTable {
    pub fn entropy(&self) -> f64 {
        self.cells
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(_, p)| -p * p.ln())
            .sum()
    }

    pub fn missing_mass(&self) -> f64 {
        (1.0 - self.captured).abs()
    }
}

struct Level {
    coef: Vec<f64>,
    sd: f64,
}

struct Conditioning<'a> {
    mean: &'a [f64],
    levels: Vec<Level>,
    m: f64,
    gl: (Vec<f64>, Vec<f64>),
}

/// Moore–Penrose inverse of a symmetric PSD matrix.
fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let e = SymmetricEigen::new(a.clone());
    let top = e.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(n, n);
    for (k, &l) in e.eigenvalues.iter().enumerate() {
        if l > 1e-12 * top {
            let v = e.eigenvectors.column(k);
            out += v * v.transpose() / l;
        }
    }
    out
}

impl<'a> Conditioning<'a> {
    fn new(mean: &'a [f64], cov: &DMatrix<f64>, m: u32) -> Self {
        let n = mean.len();
        let scale = (0..n).map(|i| cov[(i, i)]).fold(0.0, f64::max);
        let levels = (0..n)
            .map(|i| {
                let head = cov.view((0, 0), (i, i)).into_owned();
                let cross = cov.view((0, i), (i, 1)).into_owned();
                let coef = &pinv(&head) * &cross;
                let var = cov[(i, i)] - (cross.transpose() * &coef)[(0, 0)];
                let sd = if var > 1e-13 * scale { var.sqrt() } else { 0.0 };
                Level {
                    coef: coef.iter().copied().collect(),
                    sd,
                }
            })
            .collect();
        Self {
            mean,
            levels,
            m: f64::from(m),
            gl: gauss_legendre(GL_NODES),
        }
    }

    fn cond_mean(&self, i: usize, x: &[f64]) -> f64 {
        self.mean[i]
            + self.levels[i]
                .coef
                .iter()
                .enumerate()
                .map(|(j, b)| b * (x[j] - self.mean[j]))
                .sum::<f64>()
    }

    fn cell(&self, v: f64) -> i64 {
        (self.m * v).floor() as i64
    }

    /// Fill deterministic axes `from..` (until the next free axis) given
    /// `x[..from]`; returns the index of the next free axis.
    fn follow(&self, from: usize, x: &mut [f64]) -> usize {
        let mut i = from;
        while i < self.levels.len() && self.levels[i].sd == 0.0 {
            x[i] = self.cond_mean(i, x);
            i += 1;
        }
        i
    }

    /// Probability of every cell, by recursion from the first axis.
    fn table(&self) -> BTreeMap<Vec<i64>, f64> {
        let n = self.levels.len();
        let mut x = vec![0.0; n];
        let first = self.follow(0, &mut x);
        let prefix: Vec<i64> = x[..first].iter().map(|&v| self.cell(v)).collect();
        if first == n {
            return BTreeMap::from([(prefix, 1.0)]);
        }
        let mu = self.cond_mean(first, &x);
        let sd = self.levels[first].sd;
        let (lo, hi) = self.cell_range(mu, sd);
        // Parallel over the cells of the first free axis; their keys are
        // disjoint, and the merge below runs in a fixed order.
        let parts: Vec<BTreeMap<Vec<i64>, f64>> = (lo..=hi)
            .into_par_iter()
            .map(|j| {
                let mut acc = Accumulator::default();
                let mut x = x.clone();
                let mut cells = prefix.clone();
                self.free_axis_cell(first, j, mu, sd, 1.0, &mut x, &mut cells, &mut acc);
                acc.into_map()
            })
            .collect();
        let mut out = BTreeMap::new();
        for part in parts {
            out.extend(part);
        }
        out
    }

    fn cell_range(&self, mu: f64, sd: f64) -> (i64, i64) {
        (
            self.cell(mu - TRUNCATION_SIGMAS * sd),
            self.cell(mu + TRUNCATION_SIGMAS * sd),
        )
    }

    /// Integrate free axis `i` over its cell `j` (density `N(mu, sd²)`), with
    /// `weight` the mass carried in from earlier axes.
    #[allow(clippy::too_many_arguments)]
    fn free_axis_cell(
        &self,
        i: usize,
        j: i64,
        mu: f64,
        sd: f64,
        weight: f64,
        x: &mut Vec<f64>,
        cells: &mut Vec<i64>,
        acc: &mut Accumulator,
    ) {
        let n = self.levels.len();
        let (a, b) = (j as f64 / self.m, (j + 1) as f64 / self.m);
        // Deterministic axes after i are affine in x_i; split [a, b) where
        // any of their cell indices changes.
        let mut cuts = vec![a, b];
        let next_free = {
            x[i] = a;
            let nf = self.follow(i + 1, x);
            let ya: Vec<f64> = x[i + 1..nf].to_vec();
            x[i] = b;
            self.follow(i + 1, x);
            for (d, &y0) in ya.iter().enumerate() {
                let y1 = x[i + 1 + d];
                let (c0, c1) = (self.m * y0, self.m * y1);
                if c0 == c1 {
                    continue;
                }
                let (lo, hi) = if c0 < c1 { (c0, c1) } else { (c1, c0) };
                let mut k = lo.floor() + 1.0;
                while k < hi {
                    cuts.push(a + (b - a) * (k - c0) / (c1 - c0));
                    k += 1.0;
                }
            }
            nf
        };
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let depth = cells.len();
        for w in cuts.windows(2) {
            let (s, e) = (w[0], w[1]);
            if e <= s {
                continue;
            }
            x[i] = 0.5 * (s + e);
            self.follow(i + 1, x);
            cells.push(j);
            cells.extend(x[i + 1..next_free].iter().map(|&v| self.cell(v)));
            if next_free == n {
                let p = weight * normal_interval_scaled(s, e, mu, sd);
                acc.add_loose(cells, p);
            } else {
                self.integrate_panels(i, s, e, mu, sd, weight, next_free, x, cells, acc);
            }
            cells.truncate(depth);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn integrate_panels(
        &self,
        i: usize,
        s: f64,
        e: f64,
        mu: f64,
        sd: f64,
        weight: f64,
        f: usize,
        x: &mut Vec<f64>,
        cells: &mut Vec<i64>,
        acc: &mut Accumulator,
    ) {
        let n = self.levels.len();
        let sd_f = self.levels[f].sd;
        // How fast the next conditional mean moves with x_i sets the panel width.
        x[i] = s;
        self.follow(i + 1, x);
        let mf0 = self.cond_mean(f, x);
        x[i] = e;
        self.follow(i + 1, x);
        let mf1 = self.cond_mean(f, x);
        let panels = (((mf1 - mf0).abs() / sd_f).ceil() as usize).clamp(1, MAX_PANELS);
        let h = (e - s) / panels as f64;
        let (gx, gw) = &self.gl;
        for p in 0..panels {
            let (ps, pe) = (s + p as f64 * h, s + (p + 1) as f64 * h);
            let (mid, half) = (0.5 * (ps + pe), 0.5 * (pe - ps));
            for (t, wt) in gx.iter().zip(gw) {
                let xi = mid + half * t;
                let w = weight * wt * half * normal_pdf((xi - mu) / sd) / sd;
                if w == 0.0 {
                    continue;
                }
                x[i] = xi;
                self.follow(i + 1, x);
                let mu_f = self.cond_mean(f, x);
                if f + 1 == n {
                    self.last_axis(mu_f, sd_f, w, cells, acc);
                } else {
                    let (lo, hi) = self.cell_range(mu_f, sd_f);
                    for jf in lo..=hi {
                        self.free_axis_cell(f, jf, mu_f, sd_f, w, x, cells, acc);
                    }
                }
            }
        }
    }

    /// Last axis free: all of its cells at once from shared edge CDFs.
    fn last_axis(&self, mu: f64, sd: f64, weight: f64, prefix: &[i64], acc: &mut Accumulator) {
        let (lo, hi) = self.cell_range(mu, sd);
        let row = acc.row(prefix, lo, hi);
        let z = |c: i64| (c as f64 / self.m - mu) / sd;
        let mut za = z(lo);
        let (mut lower_a, mut upper_a) = (normal_cdf(za), normal_cdf(-za));
        for j in lo..=hi {
            let zb = z(j + 1);
            let (lower_b, upper_b) = (normal_cdf(zb), normal_cdf(-zb));
            let p = if zb <= 0.0 {
                lower_b - lower_a
            } else if za >= 0.0 {
                upper_a - upper_b
            } else {
                1.0 - lower_a - upper_b
            };
            row.add(j, weight * p);
            za = zb;
            lower_a = lower_b;
            upper_a = upper_b;
        }
    }
}

fn normal_interval_scaled(a: f64, b: f64, mu: f64, sd: f64) -> f64 {
    crate::numeric::normal_interval((a - mu) / sd, (b - mu) / sd)
}

#[derive(Default)]
struct Row {
    lo: i64,
    vals: Vec<f64>,
}

impl Row {
    fn add(&mut self, j: i64, p: f64) {
        self.vals[(j - self.lo) as usize] += p;
    }
}

/// Cell probabilities keyed by prefix, with the last axis stored densely.
#[derive(Default)]
struct Accumulator {
    rows: HashMap<Vec<i64>, Row>,
    loose: HashMap<Vec<i64>, f64>,
}

impl Accumulator {
    fn row(&mut self, prefix: &[i64], lo: i64, hi: i64) -> &mut Row {
        let row = self.rows.entry(prefix.to_vec()).or_insert_with(|| Row {
            lo,
            vals: Vec::new(),
        });
        if row.vals.is_empty() {
            row.lo = lo;
            row.vals = vec![0.0; (hi - lo + 1) as usize];
        }
        let row_hi = row.lo + row.vals.len() as i64 - 1;
        if lo < row.lo {
            let mut grown = vec![0.0; (row.lo - lo) as usize];
            grown.extend_from_slice(&row.vals);
            row.vals = grown;
            row.lo = lo;
        }
        if hi > row_hi {
            row.vals
                .resize(row.vals.len() + (hi - row_hi) as usize, 0.0);
        }
        row
    }

    fn add_loose(&mut self, cells: &[i64], p: f64) {
        *self.loose.entry(cells.to_vec()).or_default() += p;
    }

    fn into_map(self) -> BTreeMap<Vec<i64>, f64> {
        let mut out: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (prefix, row) in self.rows {
            for (d, p) in row.vals.into_iter().enumerate() {
                if p > 0.0 {
                    let mut key = prefix.clone();
                    key.push(row.lo + d as i64);
                    *out.entry(key).or_default() += p;
                }
            }
        }
        for (key, p) in self.loose {
            *out.entry(key).or_default() += p;
        }
        out
    }
}

/// Largest dimension accepted by the cell oracle.
pub const ORACLE_MAX_DIM: usize = 3;

/// Cell probabilities of `N(mean, cov)` quantized at precision `m`.
pub fn cell_probabilities(mean: &[f64], cov: &DMatrix<f64>, m: u32) -> Result<CellTable> {
    let n = mean.len();
    if n == 0 || n > ORACLE_MAX_DIM {
        return Err(Error::Domain(format!(
            "cell oracle needs 1 ≤ dimension ≤ {ORACLE_MAX_DIM}, got {n}"
        )));
    }
    if m == 0 {
        return Err(Error::Domain(
            "quantizer precision m must be at least 1".into(),
        ));
    }
    let cond = Conditioning::new(mean, cov, m);
    let map = cond.table();
    let cells: Vec<(Vec<i64>, f64)> = map.into_iter().collect();
    let captured = cells.iter().map(|(_, p)| p).sum();
    let table = CellTable { m, cells, captured };
    if table.missing_mass() >= MAX_MISSING_MASS {
        return Err(Error::Quadrature {
            residual: 1.0 - table.captured,
        });
    }
    Ok(table)
}

/// Gaussian law of `(X_1, …, X_k)` for a model: block mean and block-Toeplitz
/// covariance.
pub fn block_law(model: &SpectralModel, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let acov = autocovariance_from_spectrum(model, &FrequencyGrid::default(), k.saturating_sub(1))?;
    Ok((acov.block_mean(k), acov.block_toeplitz(k)?))
}

fn oracle_estimate(table: &CellTable) -> EntropyEstimate {
    let missing = table.missing_mass();
    EntropyEstimate {
        value: table.entropy(),
        method: EntropyMethod::QuadratureOracle,
        samples: 0,
        occupied: table.cells.len(),
        se: missing * (1.0 + (table.cells.len() as f64).ln())
            + f64::EPSILON * table.cells.len() as f64,
    }
}

/// `H([X_1^k]_m)` by cell quadrature, for `k·L ≤ 3`. Degenerate directions
/// (including zero-variance components) are followed exactly.
pub fn exact_cell_entropy(model: &SpectralModel, k: usize, m: u32) -> Result<EntropyEstimate> {
    let (mean, cov) = block_law(model, k)?;
    exact_cell_entropy_gaussian(&mean, &cov, m)
}

pub fn exact_cell_entropy_gaussian(
    mean: &[f64],
    cov: &DMatrix<f64>,
    m: u32,
) -> Result<EntropyEstimate> {
    Ok(oracle_estimate(&cell_probabilities(mean, cov, m)?))
}

/// `½ log(2π(1 + 1/12)) + 75/2 + 24/π`, the per-dimension bound on the
/// divergence between a dithered quantized Gaussian and its Gaussian fit.
pub fn kl_constant() -> f64 {
    0.5 * (2.0 * PI * (1.0 + 1.0 / 12.0)).ln() + 75.0 / 2.0 + 24.0 / PI
}

#[derive(Clone, Debug, Serialize)]
pub struct KlReport {
    pub ell: usize,
    pub m: u32,
    /// `D(f_W ‖ g_W)` in nats.
    pub kl: f64,
    pub constant: f64,
    /// `ℓ·constant`.
    pub bound: f64,
    pub missing_mass: f64,
    pub pass: bool,
}

/// Divergence between `W = [X]_m + U` and the Gaussian with the same mean and
/// covariance, for the `ℓ = k·L ≤ 2` dimensional block of a model.
///
/// `W` has the piecewise-constant density `m^ℓ P(cell)`, so
/// `h(W) = H([X]_m) - ℓ log m`; with matched moments the cross term is
/// `½ log((2πe)^ℓ det Σ_W)`, and `Σ_W = Cov([X]_m) + I/(12m²)`.
pub fn kl_bound_check(model: &SpectralModel, k: usize, m: u32) -> Result<KlReport> {
    let (mean, cov) = block_law(model, k)?;
    kl_bound_check_gaussian(&mean, &cov, m)
}

pub fn kl_bound_check_gaussian(mean: &[f64], cov: &DMatrix<f64>, m: u32) -> Result<KlReport> {
    let ell = mean.len();
    if ell == 0 || ell > 2 {
        return Err(Error::Domain(format!(
            "KL check supports ℓ ∈ {{1, 2}}, got {ell}"
        )));
    }
    let table = cell_probabilities(mean, cov, m)?;
    let mf = f64::from(m);
    let total = table.captured;
    let mut mu = vec![0.0; ell];
    for (c, p) in &table.cells {
        for (a, &ci) in mu.iter_mut().zip(c) {
            *a += p * ci as f64 / mf;
        }
    }
    for a in &mut mu {
        *a /= total;
    }
    let mut cov_w = DMatrix::identity(ell, ell) / (12.0 * mf * mf);
    for (c, p) in &table.cells {
        for i in 0..ell {
            for j in 0..ell {
                cov_w[(i, j)] +=
                    p / total * (c[i] as f64 / mf - mu[i]) * (c[j] as f64 / mf - mu[j]);
            }
        }
    }
    let det: f64 = symmetric_eigenvalues(&cov_w)
        .ok_or_else(|| Error::Domain("eigen-solver failed on Cov(W)".into()))?
        .iter()
        .product();
    let h_w = table.entropy() - ell as f64 * mf.ln();
    let kl = 0.5 * ((2.0 * PI * E).powi(ell as i32) * det).ln() - h_w;
    let constant = kl_constant();
    let bound = ell as f64 * constant;
    Ok(KlReport {
        ell,
        m,
        kl,
        constant,
        bound,
        missing_mass: table.missing_mass(),
        pass: kl <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::real_matrix;
    use approx::assert_abs_diff_eq;

    fn eye(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n)
    }

    #[test]
    fn uniform_and_constant_symbols() {
        let h = plugin_entropy(&[1, 2, 3, 4, 1, 2, 3, 4], false).unwrap();
        assert_abs_diff_eq!(h.value, 4f64.ln(), epsilon = 1e-15);
        assert_eq!(h.occupied, 4);
        let z = plugin_entropy(&[7; 10], false).unwrap();
        assert_eq!(z.value, 0.0);
        let mm = plugin_entropy(&[1, 2, 3, 4], true).unwrap();
        assert_abs_diff_eq!(mm.value, 4f64.ln() + 3.0 / 8.0, epsilon = 1e-15);
        assert!(plugin_entropy::<u8>(&[], false).is_err());
    }

    #[test]
    fn standard_normal_unit_cells_match_direct_sum() {
        // Independent check: sum over unit cells of Φ differences.
        let direct: f64 = (-12..12)
            .map(|j| crate::numeric::normal_interval(j as f64, j as f64 + 1.0))
            .filter(|p| *p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        let t = exact_cell_entropy_gaussian(&[0.0], &eye(1), 1).unwrap();
        assert_abs_diff_eq!(t.value, direct, epsilon = 1e-13);
        // Frozen from an independent scipy evaluation of the same sum.
        assert_abs_diff_eq!(t.value, 1.458_958_828_416_442, epsilon = 1e-12);
    }

    #[test]
    fn independent_pair_is_additive() {
        let h1 = exact_cell_entropy_gaussian(&[0.0], &eye(1), 2)
            .unwrap()
            .value;
        let h2 = exact_cell_entropy_gaussian(&[0.3], &(eye(1) * 4.0), 2)
            .unwrap()
            .value;
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let joint = exact_cell_entropy_gaussian(&[0.0, 0.3], &cov, 2).unwrap();
        assert_abs_diff_eq!(joint.value, h1 + h2, epsilon = 1e-12);
    }

    #[test]
    fn copied_pair_has_marginal_entropy() {
        let h1 = exact_cell_entropy_gaussian(&[0.0], &eye(1), 4)
            .unwrap()
            .value;
        let ones = DMatrix::from_element(2, 2, 1.0);
        let joint = exact_cell_entropy_gaussian(&[0.0, 0.0], &ones, 4).unwrap();
        assert_abs_diff_eq!(joint.value, h1, epsilon = 1e-13);
        // X_2 = 3 X_1: the cell of X_2 changes inside cells of X_1.
        let scaled = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 9.0]);
        let t = cell_probabilities(&[0.0, 0.0], &scaled, 2).unwrap();
        assert!(t.missing_mass() < 1e-13);
        let h3 = exact_cell_entropy_gaussian(&[0.0], &eye(1), 6)
            .unwrap()
            .value;
        // [X]_2 together with [3X]_2 is the same partition as [X]_6.
        assert_abs_diff_eq!(t.entropy(), h3, epsilon = 1e-12);
    }

    #[test]
    fn zero_process_has_zero_entropy() {
        let t = exact_cell_entropy(&SpectralModel::zero(1).unwrap(), 2, 8).unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn correlated_triple_sums_to_one() {
        let m = SpectralModel::univariate_band(-0.25, 0.25, 2.0).unwrap();
        let (mean, cov) = block_law(&m, 3).unwrap();
        let t = cell_probabilities(&mean, &cov, 2).unwrap();
        assert!(t.missing_mass() < 1e-12, "{}", t.missing_mass());
    }

    #[test]
    fn kl_constant_value() {
        let k = kl_constant();
        // 0.5·ln(2π·13/12) + 37.5 + 7.639437…
        assert!((46.0..46.2).contains(&k), "{k}");
        // Divergences for N(0, 1), frozen from an independent scipy evaluation.
        for (m, expect) in [
            (1, 0.037_055_049_404_238),
            (2, 0.010_101_358_867_529),
            (4, 0.002_583_985_100_844),
            (8, 0.000_649_772_671_129),
        ] {
            let rep = kl_bound_check_gaussian(&[0.0], &eye(1), m).unwrap();
            assert!(rep.pass, "{rep:?}");
            assert_abs_diff_eq!(rep.kl, expect, epsilon = 1e-11);
        }
    }

    #[test]
    fn kl_shrinks_with_m() {
        let kls: Vec<f64> = [1, 2, 4, 8]
            .iter()
            .map(|&m| kl_bound_check_gaussian(&[0.0], &eye(1), m).unwrap().kl)
            .collect();
        for w in kls.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{kls:?}");
        }
        let two = kl_bound_check_gaussian(
            &[0.0, 0.0],
            &real_matrix(&[&[1.0, 0.5], &[0.5, 1.0]]).map(|z| z.re),
            2,
        )
        .unwrap();
        assert!(two.pass && two.ell == 2);
    }
}
