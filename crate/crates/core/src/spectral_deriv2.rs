//! Closed-form spectral solver for the `deriv2` kernel on the uniform
//! interior grid `xi_l = l / (m + 1)`.
//!
//! The Gram matrix `T_m[i, j] = int_0^1 kappa(xi_i, y) kappa(xi_j, y) dy` has
//! eigenvectors `u_j[l] = sqrt(2/(m+1)) sin(j pi l / (m+1))` and eigenvalues
//! `sigma_{jm}^2`, both known in closed form, so projections are a DST.
//! The corresponding singular functions `v_{jm}` of the semi-discrete operator
//! are orthonormal in L2, which yields an exact error formula for
//! sine-series solutions.

use crate::kernels::{Kernel, TrueSolution};
use crate::linalg::Dst1;
use crate::quadrature::Rule;
use crate::sampling::{GridScheme, GridSpec, NoisySample};
use crate::{Error, Result};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `sigma_{jm} = sqrt(1 - (2/3) s^2) / (4 (m+1)^{3/2} s^2)` with
/// `s = sin(j pi / (2(m+1)))`.
pub fn sigma_jm(j: usize, m: usize) -> f64 {
    let mp1 = (m + 1) as f64;
    let s2 = (j as f64 * PI / (2.0 * mp1)).sin().powi(2);
    (1.0 - 2.0 / 3.0 * s2).sqrt() / (4.0 * mp1.powf(1.5) * s2)
}

/// Singular values `(pi j)^{-2}` of the continuous operator.
pub fn sigma_continuous(j: usize) -> f64 {
    (PI * j as f64).powi(-2)
}

/// `int_0^1 kappa(a, y) kappa(b, y) dy` for the `deriv2` kernel.
pub fn gram_entry(a: f64, b: f64) -> f64 {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let left = (1.0 - a) * (1.0 - b) * a.powi(3) / 3.0;
    let middle = a * (1.0 - b) * ((b * b - a * a) / 2.0 - (b.powi(3) - a.powi(3)) / 3.0);
    let right = a * b * (1.0 - b).powi(3) / 3.0;
    left + middle + right
}

/// Closed-form Gram matrix `T_m` on the uniform interior grid.
pub fn design_matrix_t(m: usize) -> Result<Mat<f64>> {
    if m < 1 {
        return Err(Error::InvalidGrid("m must be at least 1".into()));
    }
    let x = |i: usize| (i + 1) as f64 / (m + 1) as f64;
    Ok(Mat::from_fn(m, m, |i, j| gram_entry(x(i), x(j))))
}

/// Spectral data of `T_m`.
#[derive(Debug, Clone)]
pub struct Deriv2Spectral {
    pub m: usize,
    /// `sigma_{jm}`, `j = 1..m`, nonincreasing.
    pub sigma: Vec<f64>,
    dst: Dst1,
}

impl Deriv2Spectral {
    pub fn new(m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidGrid("m must be at least 1".into()));
        }
        Ok(Self { m, sigma: (1..=m).map(|j| sigma_jm(j, m)).collect(), dst: Dst1::new(m) })
    }

    /// Eigenvalues `sigma_{jm}^2` of `T_m`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    /// Eigenvector `u_j` (1-based `j`).
    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        let c = (2.0 / (self.m + 1) as f64).sqrt();
        (1..=self.m).map(|l| c * (PI * (j * l) as f64 / (self.m + 1) as f64).sin()).collect()
    }

    /// Coordinates `(v, u_j)`, `j = 1..m`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let c = (2.0 / (self.m + 1) as f64).sqrt();
        self.dst.apply(v).into_iter().map(|x| c * x).collect()
    }

    /// `sum_j q_j u_j`.
    pub fn synthesize(&self, q: &[f64]) -> Vec<f64> {
        self.project(q)
    }

    /// `grid_points` of the level.
    pub fn grid(&self) -> GridSpec {
        GridSpec { m: self.m, scheme: GridScheme::UniformInterior }
    }
}

/// Truncated spectral estimate `f_k(x) = sum_l alpha_l kappa(xi_l, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deriv2Estimate {
    pub k: usize,
    /// Level `m_o` of the data grid.
    pub m: usize,
    /// Averaging factor of the data.
    pub o: usize,
    pub alpha: Vec<f64>,
    /// `(data, u_j) / sigma_{jm}`, `j = 1..k`: the coefficients of the
    /// estimate in the orthonormal basis `v_{jm}`.
    pub coeffs: Vec<f64>,
}

impl Deriv2Estimate {
    pub fn eval(&self, x: f64) -> f64 {
        let mp1 = (self.m + 1) as f64;
        self.alpha
            .iter()
            .enumerate()
            .map(|(l, a)| {
                let xi = (l + 1) as f64 / mp1;
                a * (xi * (1.0 - x)).min(x * (1.0 - xi))
            })
            .sum()
    }

    /// Squared L2 norm, `sum coeffs^2`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

fn check_sample(spec: &Deriv2Spectral, sample: &NoisySample) -> Result<()> {
    if sample.grid.scheme != GridScheme::UniformInterior {
        return Err(Error::InvalidGrid("deriv2 spectral path needs the uniform interior grid".into()));
    }
    if sample.grid.m != spec.m {
        return Err(Error::InvalidGrid(format!("sample has {} points, solver level is {}", sample.grid.m, spec.m)));
    }
    if let Some(model) = &sample.model {
        if model.kernel.name != "deriv2" {
            return Err(Error::KernelMismatch(format!("expected deriv2, sample uses {}", model.kernel.name)));
        }
    }
    Ok(())
}

/// Spectral cut-off estimate with `k` terms from (possibly averaged) data.
pub fn estimate(spec: &Deriv2Spectral, sample: &NoisySample, k: usize) -> Result<Deriv2Estimate> {
    check_sample(spec, sample)?;
    if k > spec.m {
        return Err(Error::InvalidTruncation { k, max: spec.m });
    }
    let p = spec.project(&sample.noisy);
    let mut q = vec![0.0; spec.m];
    let mut coeffs = Vec::with_capacity(k);
    for j in 0..k {
        q[j] = p[j] / (spec.sigma[j] * spec.sigma[j]);
        coeffs.push(p[j] / spec.sigma[j]);
    }
    Ok(Deriv2Estimate { k, m: spec.m, o: sample.o, alpha: spec.synthesize(&q), coeffs })
}

/// `||f_k - f||_{L2}` for every `k = 0..=m`, exact up to rounding.
///
/// Uses the orthonormality of `v_{jm}`: with `beta_j = (data, u_j)/sigma_{jm}`
/// and `gamma_j = (f, v_{jm}) = (g_m, u_j)/sigma_{jm}`,
/// `||f_k - f||^2 = ||f||^2 + sum_{j<=k} (beta_j^2 - 2 beta_j gamma_j)`.
/// `sample.exact` must hold `g = K f` at the grid points.
pub fn error_profile(spec: &Deriv2Spectral, sample: &NoisySample, f_norm_sq: f64) -> Result<Vec<f64>> {
    check_sample(spec, sample)?;
    let p = spec.project(&sample.noisy);
    let pe = spec.project(&sample.exact);
    Ok(error_profile_from_coordinates(&spec.sigma, &p, &pe, f_norm_sq))
}

/// [`error_profile`] from the data coordinates `p` and exact-data
/// coordinates `pe` in the basis `u_j`.
pub fn error_profile_from_coordinates(sigma: &[f64], p: &[f64], pe: &[f64], f_norm_sq: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(sigma.len() + 1);
    let mut acc = f_norm_sq;
    out.push(acc.max(0.0).sqrt());
    for j in 0..sigma.len() {
        let b = p[j] / sigma[j];
        let g = pe[j] / sigma[j];
        acc += b * b - 2.0 * b * g;
        out.push(acc.max(0.0).sqrt());
    }
    out
}

/// Sine series `sqrt(2) sum_j c_j sin(j pi x)` evaluated at many points with
/// the three-term recurrence for `sin(j theta)`.
pub fn sine_series(coeffs: &[f64], points: &[f64]) -> Vec<f64> {
    points
        .iter()
        .map(|&x| {
            let theta = PI * x;
            let two_cos = 2.0 * theta.cos();
            let (mut prev, mut cur) = (0.0f64, theta.sin());
            let mut acc = 0.0;
            for c in coeffs {
                acc += c * cur;
                let next = two_cos * cur - prev;
                prev = cur;
                cur = next;
            }
            acc * 2f64.sqrt()
        })
        .collect()
}

/// `||f_k - f||_{L2}` by composite two-point Gauss-Legendre quadrature with
/// `2^15` panels.
pub fn l2_error(est: &Deriv2Estimate, f: &TrueSolution) -> f64 {
    let pts = Rule::new(2).composite_points(0.0, 1.0, 1 << 15);
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let fv = match f.sine_coefficients() {
        Some(c) => sine_series(&c, &xs),
        None => xs.iter().map(|&x| f.eval(x)).collect(),
    };
    let fhat = piecewise_linear_estimate(est, &xs);
    pts.iter().zip(fv.iter().zip(&fhat)).map(|((_, w), (a, b))| w * (a - b).powi(2)).sum::<f64>().sqrt()
}

/// `f_k` at sorted points; `f_k` is linear between the nodes and zero at the
/// ends of the interval.
fn piecewise_linear_estimate(est: &Deriv2Estimate, xs: &[f64]) -> Vec<f64> {
    let m = est.m;
    let nodes: Vec<f64> = (0..=m + 1).map(|l| l as f64 / (m + 1) as f64).collect();
    let mut vals = vec![0.0; m + 2];
    for (l, v) in vals.iter_mut().enumerate().take(m + 1).skip(1) {
        *v = est.eval(nodes[l]);
    }
    xs.iter()
        .map(|&x| {
            let pos = (x * (m + 1) as f64).floor() as usize;
            let i = pos.min(m);
            let t = (x - nodes[i]) * (m + 1) as f64;
            vals[i] * (1.0 - t) + vals[i + 1] * t
        })
        .collect()
}

/// `||g'||_{L2}` for `g = K f` with `f` a sine series, `K` the `deriv2` operator.
pub fn gprime_norm(f: &TrueSolution) -> Option<f64> {
    let c = f.sine_coefficients()?;
    let s: f64 = c.iter().enumerate().map(|(j, cj)| (cj * sigma_continuous(j + 1) * PI * (j + 1) as f64).powi(2)).sum();
    Some(s.sqrt())
}

/// Bound terms of the mean squared error for the unaveraged estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Rate {
    /// `k^5 delta^2 / m`.
    pub variance_term: f64,
    /// `k^{-4s} rho^2`.
    pub approx_term: f64,
    /// `rho^2 / m^2`, using `||f'|| <= rho`.
    pub disc_term: f64,
    /// Minimizer of the first two terms, `(m rho^2 / delta^2)^{1/(5+4s)}`.
    pub k_star: f64,
    /// Lower constant `16 / (pi^{4s+4} (3 pi^4 + 1/2))` of the averaging equivalence.
    pub c_lower: f64,
    /// Upper constant `15 pi^{4s+8} / 16`.
    pub c_upper: f64,
    /// Largest averaging factor allowed by the equivalence,
    /// `max(sqrt((m+1) delta^2 / rho^2), 1)`.
    pub o_max: f64,
}

pub fn theorem2_rate(delta: f64, m: usize, s: f64, rho: f64, k: f64) -> Theorem2Rate {
    let mf = m as f64;
    Theorem2Rate {
        variance_term: k.powi(5) * delta * delta / mf,
        approx_term: k.powf(-4.0 * s) * rho * rho,
        disc_term: rho * rho / (mf * mf),
        k_star: (mf * rho * rho / (delta * delta)).powf(1.0 / (5.0 + 4.0 * s)),
        c_lower: 16.0 / (PI.powf(4.0 * s + 4.0) * (3.0 * PI.powi(4) + 0.5)),
        c_upper: 15.0 * PI.powf(4.0 * s + 8.0) / 16.0,
        o_max: ((mf + 1.0) * delta * delta / (rho * rho)).sqrt().max(1.0),
    }
}

/// Sanity check that a kernel can use this path.
pub fn supports(kernel: &Kernel) -> bool {
    kernel.name == "deriv2"
}
