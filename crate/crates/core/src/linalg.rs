//! Dense linear algebra helpers over `faer` and a type-I discrete sine
//! transform over `rustfft`.

use crate::{Error, Result};
use faer::{Mat, Side};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// `A = W diag(sigma) Z^T` with `sigma` nonincreasing. Column `j` of `left`
/// is `w_j` (data space), column `j` of `right` is `z_j` (solution space).
#[derive(Debug, Clone)]
pub struct Svd {
    pub sigma: Vec<f64>,
    pub left: Mat<f64>,
    pub right: Mat<f64>,
}

impl Svd {
    /// Number of singular values above `max(rows, cols) * eps * sigma_1`.
    pub fn numerical_rank(&self) -> usize {
        let n = self.left.nrows().max(self.right.nrows()) as f64;
        let tol = n * f64::EPSILON * self.sigma.first().copied().unwrap_or(0.0);
        self.sigma.iter().take_while(|&&s| s > tol).count()
    }
}

/// Full SVD of a square matrix.
pub fn svd(a: &Mat<f64>) -> Result<Svd> {
    let d = a.svd().map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let sigma = d.S().column_vector().iter().copied().collect();
    Ok(Svd { sigma, left: d.U().to_owned(), right: d.V().to_owned() })
}

/// SVD of a symmetric matrix through its eigendecomposition, which is several
/// times cheaper than a general SVD.
pub fn svd_symmetric(a: &Mat<f64>) -> Result<Svd> {
    let n = a.nrows();
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition did not converge: {e:?}")))?;
    let lambda: Vec<f64> = e.S().column_vector().iter().copied().collect();
    let q = e.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lambda[j].abs().total_cmp(&lambda[i].abs()));
    let sigma = order.iter().map(|&i| lambda[i].abs()).collect();
    let right = Mat::from_fn(n, n, |r, c| q[(r, order[c])]);
    let left = Mat::from_fn(n, n, |r, c| {
        let i = order[c];
        if lambda[i] < 0.0 {
            -q[(r, i)]
        } else {
            q[(r, i)]
        }
    });
    Ok(Svd { sigma, left, right })
}

/// Eigenvalues of a symmetric matrix, nonincreasing.
pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    let mut v = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalues did not converge: {e:?}")))?;
    v.sort_by(|x, y| y.total_cmp(x));
    Ok(v)
}

/// `sum_i a_i b_i`.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `W^T v` for the column basis `w`.
pub fn project(w: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..w.ncols()).map(|j| w.col(j).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Type-I discrete sine transform
/// `X_j = sum_{l=1}^{n} x_l sin(pi j l / (n + 1))`, `j = 1..n`.
#[derive(Clone)]
pub struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dst1 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Dst1({})", self.n)
    }
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "DST length mismatch");
        let n = self.n;
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * (n + 1)];
        for (l, &v) in x.iter().enumerate() {
            buf[l + 1] = Complex::new(v, 0.0);
            buf[2 * (n + 1) - (l + 1)] = Complex::new(-v, 0.0);
        }
        self.fft.process(&mut buf);
        (1..=n).map(|j| -0.5 * buf[j].im).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dst_matches_direct_sum() {
        let n = 37;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let fast = Dst1::new(n).apply(&x);
        for j in 1..=n {
            let direct: f64 =
                (1..=n).map(|l| x[l - 1] * (PI * (j * l) as f64 / (n + 1) as f64).sin()).sum();
            assert!((fast[j - 1] - direct).abs() < 1e-11);
        }
    }

    #[test]
    fn symmetric_svd_reconstructs() {
        let n = 20;
        let a = Mat::from_fn(n, n, |i, j| 1.0 / (1.0 + i as f64 + j as f64) - if i == j { 0.3 } else { 0.0 });
        let d = svd_symmetric(&a).unwrap();
        assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
        for j in 0..n {
            let az = &a * d.right.col(j);
            let err: f64 = (0..n).map(|i| (az[i] - d.sigma[j] * d.left[(i, j)]).powi(2)).sum::<f64>().sqrt();
            assert!(err < 1e-12);
        }
        let g = svd(&a).unwrap();
        for (x, y) in g.sigma.iter().zip(&d.sigma) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
