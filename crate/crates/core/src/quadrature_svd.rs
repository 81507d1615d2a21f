//! Midpoint-collocation discretization of general kernels, its SVD, the
//! approximate singular functions built from it, and the accompanying error
//! bounds.
//!
//! `A_m[i, j] = kappa(x_i, x_j) / m` on the midpoint grid, with SVD
//! `A z_j = sigma_j w_j`: `w_j` lives in data space, `z_j` in solution space.

use crate::kernels::{CollocationRule, Kernel, TrueSolution};
use crate::linalg::{self, Svd};
use crate::sampling::{ForwardModel, GridScheme, GridSpec, NoisySample};
use crate::{quadrature, rng, Error, Result};
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct CollocationSystem {
    pub kernel: Kernel,
    pub grid: GridSpec,
    pub a: Mat<f64>,
    pub svd: Svd,
    pub rank_tol: f64,
    pub rank: usize,
}

/// Collocation matrix of `kernel` on the `m`-point midpoint grid.
pub fn collocation_matrix(kernel: &Kernel, m: usize) -> Mat<f64> {
    let grid = GridSpec { m, scheme: GridScheme::Midpoint };
    let pts = grid.points();
    let rows: Vec<f64> = pts.iter().map(|&x| kernel.row_point(x, m)).collect();
    Mat::from_fn(m, m, |i, j| kernel.eval(rows[i], pts[j]) / m as f64)
}

/// Assemble `A_m` and compute its full SVD.
pub fn build_collocation(kernel: &Kernel, m: usize) -> Result<CollocationSystem> {
    if m < 1 {
        return Err(Error::InvalidGrid("m must be at least 1".into()));
    }
    let a = collocation_matrix(kernel, m);
    let svd = if kernel.symmetric && kernel.rule == CollocationRule::Midpoint {
        linalg::svd_symmetric(&a)?
    } else {
        linalg::svd(&a)?
    };
    if svd.sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite singular values for {} at m = {m}", kernel.name)));
    }
    let rank_tol = m as f64 * f64::EPSILON * svd.sigma[0];
    let rank = svd.sigma.iter().take_while(|&&s| s > rank_tol).count();
    Ok(CollocationSystem {
        kernel: kernel.clone(),
        grid: GridSpec { m, scheme: GridScheme::Midpoint },
        a,
        svd,
        rank_tol,
        rank,
    })
}

impl CollocationSystem {
    pub fn m(&self) -> usize {
        self.grid.m
    }

    pub fn sigma(&self) -> &[f64] {
        &self.svd.sigma
    }

    /// `w_j` (0-based `j`).
    pub fn left(&self, j: usize) -> Vec<f64> {
        self.svd.left.col(j).iter().copied().collect()
    }

    /// `z_j` (0-based `j`).
    pub fn right(&self, j: usize) -> Vec<f64> {
        self.svd.right.col(j).iter().copied().collect()
    }

    /// Data coordinates `(b, w_j)` for all `j`.
    pub fn project(&self, b: &[f64]) -> Vec<f64> {
        linalg::project(&self.svd.left, b)
    }

    /// Row locations of the collocation rule.
    pub fn row_points(&self) -> Vec<f64> {
        let m = self.m();
        self.grid.points().iter().map(|&x| self.kernel.row_point(x, m)).collect()
    }
}

fn gram(kernel: &Kernel, m: usize, over_first: bool) -> Mat<f64> {
    let grid = GridSpec { m, scheme: GridScheme::Midpoint };
    let nodes: Vec<f64> = if over_first {
        grid.points()
    } else {
        grid.points().iter().map(|&x| kernel.row_point(x, m)).collect()
    };
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (nodes[i], nodes[j]);
            let integrand = |t: f64| {
                if over_first {
                    kernel.eval(t, a) * kernel.eval(t, b)
                } else {
                    kernel.eval(a, t) * kernel.eval(b, t)
                }
            };
            let breaks = if kernel.diagonal_kink { vec![a, b] } else { Vec::new() };
            quadrature::adaptive(integrand, 0.0, 1.0, &breaks, 1e-12 * m as f64) / m as f64
        })
        .collect();
    let mut s = Mat::zeros(m, m);
    for (&(i, j), v) in pairs.iter().zip(vals) {
        s[(i, j)] = v;
        s[(j, i)] = v;
    }
    s
}

/// `S_m[i, j] = (1/m) int_0^1 kappa(x, x_i) kappa(x, x_j) dx` by adaptive
/// quadrature, accurate to about `1e-12` per entry.
pub fn design_matrix_s(kernel: &Kernel, m: usize) -> Mat<f64> {
    gram(kernel, m, true)
}

/// `G_m[l, l'] = (1/m) int_0^1 kappa(r_l, y) kappa(r_l', y) dy` over the
/// collocation rows `r_l`: the Gram matrix of the functions `kappa(r_l, .)`.
pub fn row_gram(kernel: &Kernel, m: usize) -> Mat<f64> {
    gram(kernel, m, false)
}

/// `v_j(x) = (sigma_j sqrt(m))^{-1} sum_l w_j[l] kappa(r_l, x)`.
#[derive(Debug, Clone)]
pub struct SingularFunction {
    kernel: Kernel,
    rows: Vec<f64>,
    weights: Vec<f64>,
}

impl SingularFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.rows.iter().zip(&self.weights).map(|(&r, w)| w * self.kernel.eval(r, x)).sum()
    }

    /// `||v_j||_{L2}` by quadrature.
    pub fn norm(&self) -> f64 {
        let breaks = if self.kernel.diagonal_kink { self.rows.clone() } else { Vec::new() };
        quadrature::adaptive(|x| self.eval(x).powi(2), 0.0, 1.0, &breaks, 1e-12).sqrt()
    }
}

/// Approximate singular function `v_j` of the continuous operator
/// (0-based `j`).
pub fn singular_function(sys: &CollocationSystem, j: usize) -> Result<SingularFunction> {
    if j >= sys.rank {
        return Err(Error::InvalidTruncation { k: j + 1, max: sys.rank });
    }
    let c = 1.0 / (sys.svd.sigma[j] * (sys.m() as f64).sqrt());
    Ok(SingularFunction { kernel: sys.kernel.clone(), rows: sys.row_points(), weights: sys.left(j).iter().map(|w| w * c).collect() })
}

/// Gram matrix `((v_i, v_j))_{i,j < n}` of the approximate singular
/// functions, from the row Gram matrix `g = row_gram(kernel, m)`.
pub fn singular_function_gram(sys: &CollocationSystem, g: &Mat<f64>, n: usize) -> Mat<f64> {
    let n = n.min(sys.rank);
    let w = sys.svd.left.subcols(0, n);
    let gw = g * w;
    let p = w.transpose() * &gw;
    Mat::from_fn(n, n, |i, j| p[(i, j)] / (sys.svd.sigma[i] * sys.svd.sigma[j]))
}

/// Truncated SVD estimate on the data grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEstimate {
    pub k: usize,
    /// `sum_{j<=k} ((b, w_j) / sigma_j) z_j`.
    pub values: Vec<f64>,
    /// `alpha_l = sum_{j<=k} (b, w_j) / (m sigma_j^2) w_j[l]`, the weights of
    /// `kappa(r_l, .)` in the function-space estimate.
    pub coeffs: Vec<f64>,
    pub m_o: usize,
    pub o: usize,
}

fn check_grid(sys: &CollocationSystem, sample: &NoisySample) -> Result<()> {
    if sample.grid != sys.grid {
        return Err(Error::InvalidGrid(format!(
            "sample grid {:?} (m = {}) does not match system grid (m = {})",
            sample.grid.scheme,
            sample.grid.m,
            sys.m()
        )));
    }
    Ok(())
}

pub fn grid_estimate(sys: &CollocationSystem, sample: &NoisySample, k: usize) -> Result<GridEstimate> {
    check_grid(sys, sample)?;
    if k > sys.rank {
        return Err(Error::InvalidTruncation { k, max: sys.rank });
    }
    let m = sys.m();
    let p = sys.project(&sample.noisy);
    let mut values = vec![0.0; m];
    let mut coeffs = vec![0.0; m];
    for j in 0..k {
        let s = sys.svd.sigma[j];
        let cv = p[j] / s;
        let ca = p[j] / (m as f64 * s * s);
        for i in 0..m {
            values[i] += cv * sys.svd.right[(i, j)];
            coeffs[i] += ca * sys.svd.left[(i, j)];
        }
    }
    Ok(GridEstimate { k, values, coeffs, m_o: m, o: sample.o })
}

impl GridEstimate {
    /// Function-space estimate `sum_l alpha_l kappa(r_l, x)`.
    pub fn eval(&self, sys: &CollocationSystem, x: f64) -> f64 {
        sys.row_points().iter().zip(&self.coeffs).map(|(&r, a)| a * sys.kernel.eval(r, x)).sum()
    }
}

/// `sqrt(sum_{j>k} (b, w_j)^2)`.
pub fn residual_tail(sys: &CollocationSystem, sample: &NoisySample, k: usize) -> Result<f64> {
    check_grid(sys, sample)?;
    let p = sys.project(&sample.noisy);
    Ok(p.iter().skip(k).map(|v| v * v).sum::<f64>().sqrt())
}

/// Spectral quantities entering the error bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundContext {
    pub m: usize,
    pub c_k: f64,
    /// Reference singular values `sigma_j` of the continuous operator.
    pub sigma_cont: Vec<f64>,
    /// Spectral gaps `c_j`; one entry shorter than `sigma_cont`.
    pub c_gap: Vec<f64>,
    /// `psi_-(j)`, `psi_+(j)` (1-based) for each `j`.
    pub psi_minus: Vec<usize>,
    pub psi_plus: Vec<usize>,
    /// `M_i`.
    pub multiplicity: Vec<usize>,
    /// `J_m`, 0 when no index qualifies.
    pub j_max: usize,
    /// The reference spectrum came from a finer discretization.
    pub surrogate_reference: bool,
}

/// Reference spectrum from a collocation four times finer, for kernels
/// without a known continuous spectrum.
pub fn surrogate_sigma(kernel: &Kernel, m: usize) -> Result<Vec<f64>> {
    Ok(build_collocation(kernel, 4 * m)?.svd.sigma)
}

/// Gaps, multiplicities and the validity index `J_m` for level `m`.
pub fn bound_context(c_k: f64, m: usize, reference_sigma: &[f64], surrogate: bool) -> BoundContext {
    let n = reference_sigma.len();
    let s = reference_sigma;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-8 * a.abs().max(b.abs());
    let mut psi_minus = vec![0; n];
    let mut psi_plus = vec![0; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && same(s[end + 1], s[start]) {
            end += 1;
        }
        for j in start..=end {
            psi_minus[j] = start + 1;
            psi_plus[j] = end + 1;
        }
        start = end + 1;
    }
    // c_j needs sigma_{psi_+(j)+1}
    let usable = psi_plus.iter().take_while(|&&p| p < n).count();
    let c_gap: Vec<f64> = (0..usable)
        .map(|j| {
            let below = s[psi_plus[j] - 1].powi(2) - s[psi_plus[j]].powi(2);
            let above = if psi_minus[j] == 1 { f64::INFINITY } else { s[psi_minus[j] - 2].powi(2) - s[psi_minus[j] - 1].powi(2) };
            below.min(above)
        })
        .collect();
    let mut multiplicity = Vec::with_capacity(n);
    let mut run = 0;
    for j in 0..n {
        run = run.max(psi_plus[j] - psi_minus[j]);
        multiplicity.push(1 + run);
    }
    let mf = m as f64;
    let mut j_max = 0;
    for i in 0..usable {
        let a = 2.0 * c_k * c_k / (3.0 * c_gap[i] * mf * mf);
        let b = 10.0 * multiplicity[i] as f64 * c_k.powi(3) / (c_gap[i] * s[i] * mf * mf);
        if a.max(b) < 1.0 {
            j_max = i + 1;
        } else {
            break;
        }
    }
    BoundContext { m, c_k, sigma_cont: s.to_vec(), c_gap, psi_minus, psi_plus, multiplicity, j_max, surrogate_reference: surrogate }
}

/// Inputs of [`theorem_bounds`] that describe the data and the solution.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    pub k: usize,
    pub delta: f64,
    /// Number of raw samples.
    pub m: usize,
    /// Averaging factor; the bound is evaluated at level `m / o`.
    pub o: usize,
    pub f_norm: f64,
    /// `||g''||_inf`, used only when `o > 1`.
    pub g_pp_inf: f64,
    /// `(f, v_j)` for the reference singular functions, `j = 1..`.
    pub f_coeffs: &'a [f64],
}

/// Right-hand side of the RMS error bound, term by term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub variance: f64,
    /// Averaging bias terms (zero without averaging).
    pub averaging_bias: f64,
    pub approximation_tail: f64,
    pub multiplicity: f64,
    pub discretization: f64,
    pub total: f64,
}

/// Evaluate the bound for `k <= J` at level `m_o = m / o`.
pub fn theorem_bounds(ctx: &BoundContext, inp: &BoundInputs<'_>) -> Result<BoundTerms> {
    let k = inp.k;
    if k > ctx.j_max {
        return Err(Error::InvalidTruncation { k, max: ctx.j_max });
    }
    if inp.o == 0 || !inp.m.is_multiple_of(inp.o) || inp.m / inp.o != ctx.m {
        return Err(Error::InvalidAveraging { m: inp.m, o: inp.o });
    }
    let s = &ctx.sigma_cont;
    let mo = ctx.m as f64;
    let ck = ctx.c_k;
    let fc = |j: usize| inp.f_coeffs.get(j - 1).copied().unwrap_or(0.0);
    let variance = 2.0 * inp.delta / (inp.m as f64).sqrt() * (1..=k).map(|j| s[j - 1].powi(-2)).sum::<f64>().sqrt();
    let averaging_bias = if inp.o > 1 && k > 0 {
        let a = inp.g_pp_inf / (12.0 * mo * mo * s[k - 1]);
        let b = ck * inp.g_pp_inf / (12.0 * 6f64.sqrt() * mo.powi(3)) * (1..=k).map(|j| s[j - 1].powi(-4)).sum::<f64>().sqrt();
        a + b
    } else {
        0.0
    };
    let (pm, pp) = if k == 0 { (1, 0) } else { (ctx.psi_minus[k - 1], ctx.psi_plus[k - 1]) };
    let head: f64 = (1..=pp).map(|j| fc(j).powi(2)).sum();
    let approximation_tail = (inp.f_norm * inp.f_norm - head).max(0.0).sqrt();
    let mk = if k == 0 { 1.0 } else { ctx.multiplicity[k - 1] as f64 };
    let multiplicity = if k == 0 || pp == k {
        0.0
    } else {
        2.0 * mk * (pm..=pp).map(|j| fc(j).powi(2)).sum::<f64>().sqrt()
    };
    let discretization = if k == 0 {
        0.0
    } else {
        let t1 = (1.0 + (2.0 * mk).sqrt()) * ck.powi(3) * inp.f_norm / (mo * mo)
            * (1..=k).map(|j| (ctx.c_gap[j - 1] * s[j - 1]).powi(-2)).sum::<f64>().sqrt();
        let t2 = 2f64.sqrt() * ck.powi(4) * inp.f_norm / (3f64.sqrt() * mo.powi(3))
            * (1..=k).map(|j| 1.0 / (ctx.c_gap[j - 1] * s[j - 1].powi(2))).sum::<f64>();
        let t3 = mk
            * (1..=pp)
                .map(|i| 20.0 * ctx.multiplicity[i - 1] as f64 * ck.powi(3) * inp.f_norm / (ctx.c_gap[i - 1] * s[i - 1] * mo * mo))
                .fold(0.0, f64::max);
        t1 + t2 + t3
    };
    let total = variance + averaging_bias + approximation_tail + multiplicity + discretization;
    Ok(BoundTerms { variance, averaging_bias, approximation_tail, multiplicity, discretization, total })
}

/// `(f, v_j)` for the approximate singular functions of `sys`, using
/// `(f, v_j) = (w_j, (K f)(r)) / (sigma_j sqrt(m))` with `K f` at the
/// collocation rows by quadrature.
pub fn solution_coefficients(sys: &CollocationSystem, f: &TrueSolution, n: usize) -> Vec<f64> {
    let model = ForwardModel::new(sys.kernel.clone(), f.clone());
    let g: Vec<f64> = sys.row_points().par_iter().map(|&r| model.apply_kernel(r)).collect();
    let p = sys.project(&g);
    let sm = (sys.m() as f64).sqrt();
    (0..n.min(sys.rank)).map(|j| p[j] / (sys.svd.sigma[j] * sm)).collect()
}

/// Leading singular triples from a randomized range finder.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub sigma: Vec<f64>,
    pub left: Mat<f64>,
    pub right: Mat<f64>,
    /// Estimate of `||A - Q Q^T A||_2` for the `n`-dimensional range basis `Q`.
    pub residual_norm: f64,
}

/// Randomized two-step SVD: `n` Gaussian probes with `power_iters` subspace
/// iterations, orthonormalization, and a dense SVD of the `n x m` projection.
/// Returns the leading `k` triples.
pub fn two_step_truncated_svd(a: &Mat<f64>, n: usize, k: usize, seed: u64, power_iters: usize) -> Result<TruncatedSvd> {
    let (rows, cols) = (a.nrows(), a.ncols());
    if k > n || n > rows.min(cols) {
        return Err(Error::InvalidParameter(format!("need k <= n <= min(rows, cols), got k={k}, n={n}")));
    }
    let z = rng::unit_noise(seed, 0, cols * n, rng::NoiseDistribution::Gaussian);
    let omega = Mat::from_fn(cols, n, |i, j| z[i * n + j]);
    let mut q = orthonormalize(&(a * &omega));
    for _ in 0..power_iters {
        let p = orthonormalize(&(a.transpose() * &q));
        q = orthonormalize(&(a * &p));
    }
    let b = q.transpose() * a;
    let d = b.thin_svd().map_err(|e| Error::Numerical(format!("small SVD failed: {e:?}")))?;
    let sigma: Vec<f64> = d.S().column_vector().iter().take(k).copied().collect();
    let left = (&q * d.U()).subcols(0, k).to_owned();
    let right = d.V().subcols(0, k).to_owned();
    let resid = a - &q * &b;
    Ok(TruncatedSvd { sigma, left, right, residual_norm: spectral_norm(&resid, seed) })
}

fn orthonormalize(y: &Mat<f64>) -> Mat<f64> {
    y.qr().compute_thin_Q()
}

/// Power-iteration estimate of the largest singular value.
pub fn spectral_norm(a: &Mat<f64>, seed: u64) -> f64 {
    let z = rng::unit_noise(seed ^ 0x5eed, 1, a.ncols(), rng::NoiseDistribution::Gaussian);
    let mut v = Mat::from_fn(a.ncols(), 1, |i, _| z[i]);
    let mut est = 0.0;
    for _ in 0..60 {
        let nv = v.norm_l2();
        if nv == 0.0 {
            return 0.0;
        }
        v *= faer::Scale(1.0 / nv);
        let av = a * &v;
        est = av.norm_l2();
        v = a.transpose() * &av;
    }
    est
}
