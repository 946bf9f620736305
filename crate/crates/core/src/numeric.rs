//! Small numerical kernels shared across modules: Hermitian eigenvalues,
//! dense Cholesky with pivot reporting, Gauss–Legendre rules, normal
//! interval probabilities and least-squares slopes.

use libm::erfc;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Returns `None` if the iteration does not converge.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: DMatrix<Complex64>,
}

const EIGEN_MAX_ITER: usize = 10_000;

pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> Option<HermitianEigen> {
    let n = m.nrows();
    if n == 1 {
        return Some(HermitianEigen {
            values: vec![m[(0, 0)].re],
            vectors: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
        });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Some(HermitianEigen { values, vectors })
}

/// Eigenvalues only, descending.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Option<Vec<f64>> {
    let n = m.nrows();
    match n {
        0 => Some(Vec::new()),
        1 => Some(vec![m[(0, 0)].re]),
        2 => {
            // closed form: (a+d)/2 ± sqrt(((a-d)/2)^2 + |b|^2)
            let a = m[(0, 0)].re;
            let d = m[(1, 1)].re;
            let b = 0.5 * (m[(0, 1)] + m[(1, 0)].conj());
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
            Some(vec![mid + rad, mid - rad])
        }
        _ => hermitian_eigen(m).map(|e| e.values),
    }
}

/// Real symmetric eigenvalues, descending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER)?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    Some(v)
}

/// Lower Cholesky factor stored row-major in a dense `n*n` buffer.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    pub n: usize,
    pub lower: Vec<f64>,
}

impl CholeskyFactor {
    /// `out = L * z`.
    pub fn mul_into(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i + 1];
            out[i] = row.iter().zip(&z[..=i]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Semidefinite Cholesky. A pivot within `zero_tol` of zero zeroes its
/// column, so rank-deficient covariances keep an exact low-rank factor. On
/// failure returns the first pivot below `-zero_tol` and its value.
pub fn cholesky(
    a: &DMatrix<f64>,
    zero_tol: f64,
) -> std::result::Result<CholeskyFactor, (usize, f64)> {
    let n = a.nrows();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (i * n, j * n);
            let dot: f64 = l[ri..ri + j]
                .iter()
                .zip(&l[rj..rj + j])
                .map(|(x, y)| x * y)
                .sum();
            let v = a[(i, j)] - dot;
            if i == j {
                if v.is_nan() || v < -zero_tol {
                    return Err((i, v));
                }
                l[ri + i] = if v > zero_tol { v.sqrt() } else { 0.0 };
            } else if l[rj + j] > 0.0 {
                l[ri + j] = v / l[rj + j];
            }
        }
    }
    Ok(CholeskyFactor { n, lower: l })
}

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Φ(z), accurate in both tails.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// P(a < Z < b) for standard normal Z, without cancellation in the tails.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        normal_cdf(-a) - normal_cdf(-b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_cdf(-b)
    }
}

/// Ordinary least-squares fit `y ≈ slope·x + intercept`. Also returns the
/// weights `c_i` with `slope = Σ c_i y_i`, used for error propagation.
pub fn ls_slope(x: &[f64], y: &[f64]) -> (f64, f64, Vec<f64>) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let c: Vec<f64> = x.iter().map(|v| (v - mx) / sxx).collect();
    let slope: f64 = c.iter().zip(y).map(|(a, b)| a * b).sum();
    (slope, my - slope * mx, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(32);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        // ∫ x^62 over [-1,1] = 2/63
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(62)).sum();
        assert_relative_eq!(v, 2.0 / 63.0, epsilon = 1e-13);
        let (x5, w5) = gauss_legendre(5);
        let v: f64 = x5.iter().zip(&w5).map(|(x, w)| w * x.powi(8)).sum();
        assert_relative_eq!(v, 2.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn normal_interval_tails() {
        assert_relative_eq!(
            normal_interval(-1.0, 1.0),
            0.682_689_492_137_085_9,
            epsilon = 1e-14
        );
        // Q(8) - Q(9)
        let v = normal_interval(8.0, 9.0);
        assert!(v > 6.0e-16 && v < 6.3e-16, "{v}");
        assert_relative_eq!(normal_interval(-9.0, -8.0), v, max_relative = 1e-12);
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (pivot, v) = cholesky(&a, 1e-12).unwrap_err();
        assert_eq!(pivot, 1);
        assert_relative_eq!(v, -3.0);
        let rank_one =
            cholesky(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]), 1e-12).unwrap();
        assert_eq!(rank_one.lower, vec![1.0, 0.0, 1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let f = cholesky(&b, 0.0).unwrap();
        let mut out = [0.0; 2];
        f.mul_into(&[1.0, 1.0], &mut out);
        assert_relative_eq!(out[0], 2.0);
        assert_relative_eq!(out[1], 1.0 + 2f64.sqrt());
    }

    #[test]
    fn two_by_two_closed_form_matches_solver() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.5),
                Complex64::new(0.0, -0.5),
                Complex64::new(1.0, 0.0),
            ],
        );
        let closed = hermitian_eigenvalues(&m).unwrap();
        let full = hermitian_eigen(&m).unwrap().values;
        assert_relative_eq!(closed[0], 1.5, epsilon = 1e-14);
        assert_relative_eq!(closed[1], 0.5, epsilon = 1e-14);
        assert_relative_eq!(full[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(full[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn slope_of_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let (s, b, _) = ls_slope(&x, &y);
        assert_relative_eq!(s, 2.5, epsilon = 1e-14);
        assert_relative_eq!(b, -1.0, epsilon = 1e-13);
    }
}
