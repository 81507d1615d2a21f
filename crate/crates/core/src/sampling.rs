//! Grids, noisy sampling, and block averaging of oversampled data.

use crate::kernels::{Kernel, TrueSolution};
use crate::rng::{self, NoiseDistribution};
use crate::{quadrature, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScheme {
    /// `x_i = (2i - 1) / (2m)`, `i = 1..m`.
    Midpoint,
    /// `x_l = l / (m + 1)`, `l = 1..m`.
    UniformInterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
    pub scheme: GridScheme,
}

impl GridSpec {
    pub fn point(&self, i: usize) -> f64 {
        match self.scheme {
            GridScheme::Midpoint => (2 * i + 1) as f64 / (2 * self.m) as f64,
            GridScheme::UniformInterior => (i + 1) as f64 / (self.m + 1) as f64,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.point(i)).collect()
    }

    /// Grid of the same scheme with `m / o` points.
    pub fn coarsen(&self, o: usize) -> Result<GridSpec> {
        if o == 0 || !self.m.is_multiple_of(o) {
            return Err(Error::InvalidAveraging { m: self.m, o });
        }
        Ok(GridSpec { m: self.m / o, scheme: self.scheme })
    }
}

pub fn make_grid(m: usize, scheme: GridScheme) -> Result<GridSpec> {
    if m < 1 {
        return Err(Error::InvalidGrid("m must be at least 1".into()));
    }
    Ok(GridSpec { m, scheme })
}

/// Kernel and true solution, with exact data cached per grid.
pub struct ForwardModel {
    pub kernel: Kernel,
    pub solution: TrueSolution,
    cache: Mutex<HashMap<GridSpec, Arc<Vec<f64>>>>,
}

impl std::fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardModel").field("kernel", &self.kernel).field("solution", &self.solution).finish()
    }
}

impl ForwardModel {
    pub fn new(kernel: Kernel, solution: TrueSolution) -> Arc<Self> {
        Arc::new(Self { kernel, solution, cache: Mutex::new(HashMap::new()) })
    }

    /// Exact data `g` on `grid`.
    ///
    /// Grid-vector solutions on midpoint grids give the consistent discrete
    /// data `A_m x_m`. Sine-series solutions of `deriv2` use the exact series
    /// of `g`. Everything else goes through adaptive quadrature.
    pub fn exact_data(&self, grid: &GridSpec) -> Arc<Vec<f64>> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(grid) {
            return v.clone();
        }
        let v = Arc::new(self.compute_exact(grid));
        self.cache.lock().expect("cache lock").insert(*grid, v.clone());
        v
    }

    fn compute_exact(&self, grid: &GridSpec) -> Vec<f64> {
        let pts = grid.points();
        let m = grid.m;
        match (&self.solution, grid.scheme) {
            (TrueSolution::GridVector(p), GridScheme::Midpoint) => {
                let x = p.values(m);
                let k = &self.kernel;
                pts.par_iter()
                    .map(|&xi| {
                        let r = k.row_point(xi, m);
                        pts.iter().zip(&x).map(|(&yj, xj)| k.eval(r, yj) * xj).sum::<f64>() / m as f64
                    })
                    .collect()
            }
            (TrueSolution::SyntheticSpectral { .. }, _) if self.kernel.name == "deriv2" => {
                let c = self.solution.sine_coefficients().expect("spectral solution");
                // sigma_j c_j with sigma_j = (pi j)^{-2}
                let w: Vec<f64> = c.iter().enumerate().map(|(j, cj)| cj / (PI * (j + 1) as f64).powi(2)).collect();
                pts.par_iter()
                    .map(|&x| {
                        let s: f64 = w.iter().enumerate().map(|(j, wj)| wj * ((j + 1) as f64 * PI * x).sin()).sum();
                        s * 2f64.sqrt()
                    })
                    .collect()
            }
            _ => pts.par_iter().map(|&x| self.apply_kernel(x)).collect(),
        }
    }

    /// `(K f)(x)` by adaptive quadrature.
    pub fn apply_kernel(&self, x: f64) -> f64 {
        let mut breaks = self.kernel.breaks_at(x);
        breaks.extend(self.solution.breakpoints());
        quadrature::adaptive(|y| self.kernel.eval(x, y) * self.solution.eval(y), 0.0, 1.0, &breaks, 1e-13)
    }

    /// Noisy sample on `grid` with noise level `delta`, run `run` of `seed`.
    pub fn sample(self: &Arc<Self>, grid: GridSpec, delta: f64, seed: u64, run: u64, dist: NoiseDistribution) -> NoisySample {
        let exact = self.exact_data(&grid);
        let z = rng::unit_noise(seed, run, grid.m, dist);
        NoisySample::from_parts(grid, exact.to_vec(), &z, delta, Some(self.clone()))
    }
}

/// Data on a grid. `o` is the total averaging factor applied so far, so the
/// noise in each entry has standard deviation `delta / sqrt(o)`.
#[derive(Debug, Clone)]
pub struct NoisySample {
    pub grid: GridSpec,
    pub exact: Vec<f64>,
    pub noisy: Vec<f64>,
    /// Noise level of the original pointwise samples.
    pub delta: f64,
    pub o: usize,
    pub model: Option<Arc<ForwardModel>>,
}

impl NoisySample {
    /// `noisy = exact + delta * z`.
    pub fn from_parts(grid: GridSpec, exact: Vec<f64>, z: &[f64], delta: f64, model: Option<Arc<ForwardModel>>) -> Self {
        let noisy = exact.iter().zip(z).map(|(g, zi)| g + delta * zi).collect();
        Self { grid, exact, noisy, delta, o: 1, model }
    }

    /// Number of raw samples this data was averaged from.
    pub fn m_fine(&self) -> usize {
        self.grid.m * self.o
    }

    pub fn noise_std(&self) -> f64 {
        self.delta / (self.o as f64).sqrt()
    }
}

/// Noisy samples of `K f` on `grid`.
pub fn sample_noisy(
    kernel: &Kernel,
    f: &TrueSolution,
    grid: GridSpec,
    delta: f64,
    seed: u64,
    dist: NoiseDistribution,
) -> Result<NoisySample> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
    }
    Ok(ForwardModel::new(kernel.clone(), f.clone()).sample(grid, delta, seed, 0, dist))
}

/// Means of consecutive blocks of length `o`.
pub fn block_means(v: &[f64], o: usize) -> Vec<f64> {
    v.chunks_exact(o).map(|c| c.iter().sum::<f64>() / o as f64).collect()
}

/// Average consecutive blocks of `o` samples onto the grid with `m / o` points.
///
/// The exact field is recomputed on the coarse grid when the forward model
/// is known, and block averaged otherwise.
pub fn average(sample: &NoisySample, o: usize) -> Result<NoisySample> {
    let grid = sample.grid.coarsen(o)?;
    if o == 1 {
        return Ok(sample.clone());
    }
    let exact = match &sample.model {
        Some(model) => model.exact_data(&grid).to_vec(),
        None => block_means(&sample.exact, o),
    };
    Ok(NoisySample {
        grid,
        exact,
        noisy: block_means(&sample.noisy, o),
        delta: sample.delta,
        o: sample.o * o,
        model: sample.model.clone(),
    })
}

/// Admissible averaging factors and the largest of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AveragingPlan {
    pub o: usize,
    pub m_o: usize,
    pub admissible_set: Vec<usize>,
}

/// Divisors `o` of `m` with `o <= max(sqrt((m+1) delta^2 / rho^2), 1)`.
pub fn admissible_averaging(m: usize, delta: f64, rho: f64) -> Result<AveragingPlan> {
    if m < 1 {
        return Err(Error::InvalidGrid("m must be at least 1".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let bound = (((m + 1) as f64) * delta * delta / (rho * rho)).sqrt().max(1.0);
    let admissible_set: Vec<usize> = (1..=m).filter(|o| m.is_multiple_of(*o) && *o as f64 <= bound).collect();
    let o = *admissible_set.last().expect("1 is always admissible");
    Ok(AveragingPlan { o, m_o: m / o, admissible_set })
}

/// Ladder factors `a^i` that divide `m`, ascending, starting with 1.
pub fn ladder_factors(m: usize, a: usize) -> Vec<usize> {
    let mut out = vec![1];
    if a < 2 {
        return out;
    }
    let mut o = a;
    while o <= m && m.is_multiple_of(o) {
        out.push(o);
        o *= a;
    }
    out
}

/// Averaging factor suggested by the bias-variance balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriFactor {
    /// `(m^2 delta^2 / ||g'||^2)^{1/3}`.
    pub raw: f64,
    /// Ladder factor closest to `raw` on a logarithmic scale.
    pub snapped: usize,
}

impl AprioriFactor {
    /// Data level `m / snapped`.
    pub fn level(&self, m: usize) -> usize {
        m / self.snapped
    }
}

/// `(m^2 delta^2 / ||g'||^2)^{1/3}`, snapped to the powers of `a` dividing `m`.
pub fn apriori_factor(m: usize, delta: f64, gprime_norm: f64, a: usize) -> Result<AprioriFactor> {
    if !(gprime_norm > 0.0) {
        return Err(Error::InvalidParameter("||g'|| must be positive".into()));
    }
    let raw = ((m as f64).powi(2) * delta * delta / (gprime_norm * gprime_norm)).cbrt();
    let snapped = snap_log(raw, &ladder_factors(m, a));
    Ok(AprioriFactor { raw, snapped })
}

/// Element of `options` closest to `x` in log scale; ties go to the smaller.
pub fn snap_log(x: f64, options: &[usize]) -> usize {
    let lx = x.max(f64::MIN_POSITIVE).ln();
    let mut best = options[0];
    for &o in options {
        if ((o as f64).ln() - lx).abs() < ((best as f64).ln() - lx).abs() {
            best = o;
        }
    }
    best
}

/// `delta = g_norm / (sqrt(m) * snr)`.
pub fn delta_from_snr(g_norm: f64, m: usize, snr: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(Error::InvalidParameter(format!("snr must be positive, got {snr}")));
    }
    if m < 1 {
        return Err(Error::InvalidGrid("m must be at least 1".into()));
    }
    Ok(g_norm / ((m as f64).sqrt() * snr))
}

/// Write `index,xi,exact,noisy` rows.
pub fn write_csv(sample: &NoisySample, mut out: impl Write) -> Result<()> {
    writeln!(out, "index,xi,exact,noisy")?;
    for i in 0..sample.grid.m {
        writeln!(out, "{},{},{},{}", i, sample.grid.point(i), sample.exact[i], sample.noisy[i])?;
    }
    Ok(())
}

/// Read a sample written by [`write_csv`]. The grid scheme is inferred from
/// the first node.
pub fn read_csv(input: impl BufRead, delta: f64) -> Result<NoisySample> {
    let mut xi = Vec::new();
    let mut exact = Vec::new();
    let mut noisy = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(Error::InvalidParameter(format!("line {}: expected 4 columns", n + 1)));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::InvalidParameter(format!("line {}: {e}", n + 1)));
        xi.push(parse(cols[1])?);
        exact.push(parse(cols[2])?);
        noisy.push(parse(cols[3])?);
    }
    let m = xi.len();
    if m == 0 {
        return Err(Error::InvalidGrid("empty sample".into()));
    }
    let midpoint = GridSpec { m, scheme: GridScheme::Midpoint };
    let scheme = if (midpoint.point(0) - xi[0]).abs() < 1e-12 { GridScheme::Midpoint } else { GridScheme::UniformInterior };
    let grid = GridSpec { m, scheme };
    Ok(NoisySample { grid, exact, noisy, delta, o: 1, model: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::synthetic_solution;
    use proptest::prelude::*;

    #[test]
    fn ladder() {
        assert_eq!(ladder_factors(4096, 4), vec![1, 4, 16, 64, 256, 1024, 4096]);
        assert_eq!(ladder_factors(48, 2), vec![1, 2, 4, 8, 16]);
    }

    #[test]
    fn admissible_set_examples() {
        let p = admissible_averaging(100, 4.0 / 101f64.sqrt(), 1.0).unwrap();
        assert_eq!(p.admissible_set, vec![1, 2, 4]);
        assert_eq!((p.o, p.m_o), (4, 25));
        assert_eq!(admissible_averaging(100, 0.0, 1.0).unwrap().admissible_set, vec![1]);
        assert_eq!(admissible_averaging(64, 1.0, 65f64.sqrt()).unwrap().admissible_set, vec![1]);
        assert!(admissible_averaging(64, 1.0, 0.0).is_err());
    }

    #[test]
    fn grid_examples() {
        assert_eq!(make_grid(3, GridScheme::UniformInterior).unwrap().points(), vec![0.25, 0.5, 0.75]);
        assert_eq!(make_grid(4, GridScheme::Midpoint).unwrap().points(), vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(make_grid(1, GridScheme::Midpoint).unwrap().points(), vec![0.5]);
        assert!(make_grid(0, GridScheme::Midpoint).is_err());
    }

    #[test]
    fn block_mean_example() {
        let grid = make_grid(4, GridScheme::Midpoint).unwrap();
        let s = NoisySample::from_parts(grid, vec![1.0, 3.0, 5.0, 7.0], &[0.0; 4], 0.0, None);
        let a = average(&s, 2).unwrap();
        assert_eq!(a.noisy, vec![2.0, 6.0]);
        assert_eq!(a.grid.points(), vec![0.25, 0.75]);
        // midpoint block means land on the coarse nodes
        let fine = grid.points();
        assert_eq!((fine[0] + fine[1]) / 2.0, a.grid.point(0));
    }

    #[test]
    fn apriori_examples() {
        let f = apriori_factor(64, 0.1, 1.0, 4).unwrap();
        assert!((f.raw - 40.96f64.cbrt()).abs() < 1e-12);
        assert_eq!(apriori_factor(4096, 1e-12, 1.0, 4).unwrap().level(4096), 4096);
        assert!((apriori_factor(4096, 1.0 / 4096.0, 1.0, 4).unwrap().raw - 1.0).abs() < 1e-12);
        assert!(apriori_factor(64, 0.1, 0.0, 4).is_err());
    }

    #[test]
    fn snr_example() {
        let d = delta_from_snr(1.0, 4096, 512.0).unwrap();
        assert!((d - 1.0 / (64.0 * 512.0)).abs() < 1e-18);
        assert!(delta_from_snr(1.0, 4, 0.0).is_err());
    }

    #[test]
    fn zero_noise_and_determinism() {
        let model = ForwardModel::new(Kernel::deriv2(), synthetic_solution(0.5, 1));
        let grid = make_grid(1, GridScheme::UniformInterior).unwrap();
        let s = model.sample(grid, 0.0, 5, 0, NoiseDistribution::Gaussian);
        assert_eq!(s.noisy, s.exact);
        assert!((s.exact[0] - PI.powi(-3) * 2f64.sqrt()).abs() < 1e-15);
        let grid = make_grid(32, GridScheme::UniformInterior).unwrap();
        let a = sample_noisy(&Kernel::deriv2(), &synthetic_solution(0.5, 10), grid, 0.1, 9, NoiseDistribution::Gaussian).unwrap();
        let b = sample_noisy(&Kernel::deriv2(), &synthetic_solution(0.5, 10), grid, 0.1, 9, NoiseDistribution::Gaussian).unwrap();
        assert_eq!(a.noisy, b.noisy);
    }

    #[test]
    fn noise_statistics() {
        let grid = make_grid(20_000, GridScheme::Midpoint).unwrap();
        let model = ForwardModel::new(Kernel::deriv2(), TrueSolution::closure("zero", |_| 0.0));
        for dist in [NoiseDistribution::Gaussian, NoiseDistribution::HeavyTailed] {
            let s = NoisySample::from_parts(grid, vec![0.0; grid.m], &rng::unit_noise(1, 0, grid.m, dist), 0.2, Some(model.clone()));
            let d: Vec<f64> = s.noisy.iter().zip(&s.exact).map(|(a, b)| a - b).collect();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
            assert!(mean.abs() < 0.05 * 0.2, "{dist:?}");
            assert!((var / 0.04 - 1.0).abs() < 0.05 || dist == NoiseDistribution::HeavyTailed, "{dist:?} {var}");
        }
    }

    #[test]
    fn snapping_is_logarithmic() {
        let opts = [1, 4, 16, 64];
        assert_eq!(snap_log(9.0, &opts), 16);
        assert_eq!(snap_log(7.0, &opts), 4);
        assert_eq!(snap_log(0.1, &opts), 1);
    }

    #[test]
    fn averaging_rejects_non_divisor() {
        let model = ForwardModel::new(Kernel::deriv2(), synthetic_solution(0.75, 50));
        let grid = make_grid(12, GridScheme::UniformInterior).unwrap();
        let s = model.sample(grid, 0.1, 1, 0, NoiseDistribution::Gaussian);
        assert!(matches!(average(&s, 5), Err(Error::InvalidAveraging { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let k = Kernel::gravity(0.25).unwrap();
        let model = ForwardModel::new(k.clone(), k.default_solution());
        let s = model.sample(make_grid(16, GridScheme::Midpoint).unwrap(), 0.01, 3, 0, NoiseDistribution::Gaussian);
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let r = read_csv(buf.as_slice(), 0.01).unwrap();
        assert_eq!(r.grid, s.grid);
        assert_eq!(r.noisy, s.noisy);
        assert_eq!(r.exact, s.exact);
    }

    proptest! {
        #[test]
        fn grid_points_ordered_and_inside(m in 1usize..400, mid in any::<bool>()) {
            let scheme = if mid { GridScheme::Midpoint } else { GridScheme::UniformInterior };
            let g = make_grid(m, scheme).unwrap();
            let p = g.points();
            prop_assert_eq!(p.len(), m);
            prop_assert!(p[0] > 0.0 && p[m - 1] < 1.0);
            prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn averaging_reduces_noise_variance(seed in 0u64..1000, e in 1u32..4) {
            let o = 4usize.pow(e);
            let m = 4096;
            let grid = make_grid(m, GridScheme::Midpoint).unwrap();
            let z = rng::unit_noise(seed, 0, m, NoiseDistribution::Gaussian);
            let s = NoisySample::from_parts(grid, vec![0.0; m], &z, 1.0, None);
            let a = average(&s, o).unwrap();
            let var = a.noisy.iter().map(|v| v * v).sum::<f64>() / a.grid.m as f64;
            // sample variance of m/o draws with variance 1/o
            let se = (2.0 / a.grid.m as f64).sqrt() / o as f64;
            prop_assert!((var - 1.0 / o as f64).abs() < 6.0 * se + 1e-12, "var {} o {}", var, o);
        }

        #[test]
        fn averaging_with_unit_factor_is_identity(seed in 0u64..1000, m in 1usize..64) {
            let grid = make_grid(m, GridScheme::Midpoint).unwrap();
            let z = rng::unit_noise(seed, 0, m, NoiseDistribution::Gaussian);
            let s = NoisySample::from_parts(grid, vec![0.5; m], &z, 0.3, None);
            let a = average(&s, 1).unwrap();
            prop_assert_eq!(a.noisy, s.noisy);
            prop_assert_eq!(a.grid, s.grid);
        }
    }
}
