//! Discrepancy principle and the coarse-to-fine choice of averaging level.

use crate::kernels::Kernel;
use crate::quadrature_svd::{build_collocation, CollocationSystem};
use crate::sampling::{average, GridScheme, NoisySample};
use crate::spectral_deriv2::Deriv2Spectral;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Estimate of the systematic data error introduced by averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrSysVariant {
    /// `||g'||^2 / m_o`.
    Gprime,
    /// `||g''||_inf^2 / (9 * 64 * m_o^3)`.
    Gpp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyConfig {
    pub tau: f64,
    pub err_sys_variant: ErrSysVariant,
    pub g_prime_norm: f64,
    pub g_pp_inf: f64,
    /// Noise level of the raw samples.
    pub delta: f64,
}

impl DiscrepancyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 1.0) {
            return Err(Error::InvalidParameter(format!("tau must exceed 1, got {}", self.tau)));
        }
        let norm = match self.err_sys_variant {
            ErrSysVariant::Gprime => self.g_prime_norm,
            ErrSysVariant::Gpp => self.g_pp_inf,
        };
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("the selected err_sys norm must be positive".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidParameter("delta must be nonnegative".into()));
        }
        Ok(())
    }

    /// Squared systematic error at level `m_o`.
    pub fn err_sys_sq(&self, m_o: usize) -> f64 {
        let mo = m_o as f64;
        match self.err_sys_variant {
            ErrSysVariant::Gprime => self.g_prime_norm.powi(2) / mo,
            ErrSysVariant::Gpp => self.g_pp_inf.powi(2) / (9.0 * 64.0 * mo.powi(3)),
        }
    }

    /// `tau sqrt(err_sys^2 + (m_o / o) delta^2)`.
    pub fn threshold(&self, m_o: usize, o: usize) -> f64 {
        self.tau * (self.err_sys_sq(m_o) + m_o as f64 / o as f64 * self.delta.powi(2)).sqrt()
    }
}

/// Solver that expresses data in an orthonormal basis of the data space,
/// ordered by decreasing singular value.
pub trait DataBasis {
    fn level(&self) -> usize;
    /// Largest admissible truncation index.
    fn max_k(&self) -> usize;
    fn coordinates(&self, data: &[f64]) -> Vec<f64>;
    fn scheme(&self) -> GridScheme;
}

impl DataBasis for Deriv2Spectral {
    fn level(&self) -> usize {
        self.m
    }
    fn max_k(&self) -> usize {
        self.m
    }
    fn coordinates(&self, data: &[f64]) -> Vec<f64> {
        self.project(data)
    }
    fn scheme(&self) -> GridScheme {
        GridScheme::UniformInterior
    }
}

impl DataBasis for CollocationSystem {
    fn level(&self) -> usize {
        self.m()
    }
    fn max_k(&self) -> usize {
        self.rank
    }
    fn coordinates(&self, data: &[f64]) -> Vec<f64> {
        self.project(data)
    }
    fn scheme(&self) -> GridScheme {
        GridScheme::Midpoint
    }
}

/// `sqrt(sum_{j>k} p_j^2)` for `k = 0..=len`, summed from the tail.
pub fn residual_tails(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    let mut acc = 0.0;
    for k in (0..p.len()).rev() {
        acc += p[k] * p[k];
        out[k] = acc;
    }
    out.into_iter().map(f64::sqrt).collect()
}

/// Smallest `k` whose residual tail is below `threshold`, capped at `max_k`.
pub fn first_below(tails: &[f64], threshold: f64, max_k: usize) -> usize {
    tails.iter().position(|&t| t <= threshold).unwrap_or(tails.len() - 1).min(max_k)
}

/// Truncation index chosen by the discrepancy principle.
pub fn k_discrepancy(basis: &impl DataBasis, sample: &NoisySample, cfg: &DiscrepancyConfig) -> Result<usize> {
    if sample.grid.m != basis.level() || sample.grid.scheme != basis.scheme() {
        return Err(Error::InvalidGrid("sample does not live on the solver grid".into()));
    }
    let tails = residual_tails(&basis.coordinates(&sample.noisy));
    Ok(first_below(&tails, cfg.threshold(sample.grid.m, sample.o), basis.max_k()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderConfig {
    pub a: usize,
    pub n: u32,
    pub n0: u32,
}

impl LadderConfig {
    pub fn m(&self) -> usize {
        self.a.pow(self.n)
    }

    /// Levels `a^{n0}, ..., a^n`, coarse to fine.
    pub fn levels(&self) -> Vec<usize> {
        (self.n0..=self.n).map(|e| self.a.pow(e)).collect()
    }

    /// Ladder for `m = a^n`, checked against the data size.
    pub fn for_data(m: usize, a: usize, n0: u32) -> Result<Self> {
        if a < 2 {
            return Err(Error::InvalidLadder(format!("base must be at least 2, got {a}")));
        }
        let mut n = 0u32;
        let mut p = 1usize;
        while p < m {
            p = p.checked_mul(a).ok_or_else(|| Error::InvalidLadder("overflow".into()))?;
            n += 1;
        }
        if p != m {
            return Err(Error::InvalidLadder(format!("m = {m} is not a power of {a}")));
        }
        let l = Self { a, n, n0 };
        l.validate(m)?;
        Ok(l)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.a < 2 {
            return Err(Error::InvalidLadder("base must be at least 2".into()));
        }
        if self.m() != m {
            return Err(Error::InvalidLadder(format!("a^n = {} differs from m = {m}", self.m())));
        }
        if self.n0 >= self.n {
            return Err(Error::InvalidLadder(format!("n0 = {} must be below n = {}", self.n0, self.n)));
        }
        if self.a.pow(self.n0) < 2 {
            return Err(Error::InvalidLadder("coarsest level must have at least 2 points".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptiveResult {
    pub chosen_level: usize,
    pub chosen_k: usize,
    /// Visited `(m_o, k_dp)` pairs, coarse to fine.
    pub trajectory: Vec<(usize, usize)>,
}

/// Which solver is used at each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    Deriv2,
    Quadrature,
}

/// Walk the levels coarse to fine while `k_dp` does not decrease.
///
/// `k_at(level)` returns `k_dp` at that level. The chosen level is the last
/// one before the first strict decrease, or the finest level.
pub fn coarse_to_fine(levels: &[usize], mut k_at: impl FnMut(usize) -> Result<usize>) -> Result<AdaptiveResult> {
    let mut trajectory = Vec::with_capacity(levels.len());
    for &lvl in levels {
        let k = k_at(lvl)?;
        if let Some(&(prev_lvl, prev_k)) = trajectory.last() {
            if k < prev_k {
                trajectory.push((lvl, k));
                return Ok(AdaptiveResult { chosen_level: prev_lvl, chosen_k: prev_k, trajectory });
            }
        }
        trajectory.push((lvl, k));
    }
    let &(chosen_level, chosen_k) = trajectory.last().ok_or_else(|| Error::InvalidLadder("no levels".into()))?;
    Ok(AdaptiveResult { chosen_level, chosen_k, trajectory })
}

/// Discrepancy principle combined with averaging-level selection.
///
/// `data` holds all `m = a^n` raw samples. Solvers are built per level; for
/// repeated use with fixed levels see [`algorithm1_with`].
pub fn algorithm1(
    data: &NoisySample,
    cfg: &DiscrepancyConfig,
    ladder: &LadderConfig,
    path: SolverPath,
    kernel: &Kernel,
) -> Result<AdaptiveResult> {
    match path {
        SolverPath::Deriv2 => {
            if kernel.name != "deriv2" {
                return Err(Error::KernelMismatch(format!("closed-form path needs deriv2, got {}", kernel.name)));
            }
            algorithm1_with(data, cfg, ladder, Deriv2Spectral::new)
        }
        SolverPath::Quadrature => algorithm1_with(data, cfg, ladder, |m_o| build_collocation(kernel, m_o)),
    }
}

/// [`algorithm1`] with a caller-provided solver for each level.
pub fn algorithm1_with<B: DataBasis>(
    data: &NoisySample,
    cfg: &DiscrepancyConfig,
    ladder: &LadderConfig,
    mut solver: impl FnMut(usize) -> Result<B>,
) -> Result<AdaptiveResult> {
    cfg.validate()?;
    if data.o != 1 {
        return Err(Error::InvalidParameter("algorithm1 expects unaveraged data".into()));
    }
    ladder.validate(data.grid.m)?;
    let m = data.grid.m;
    coarse_to_fine(&ladder.levels(), |m_o| {
        let s = average(data, m / m_o)?;
        k_discrepancy(&solver(m_o)?, &s, cfg)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::synthetic_solution;
    use crate::rng::NoiseDistribution;
    use crate::sampling::{make_grid, ForwardModel};
    use proptest::prelude::*;

    fn cfg(delta: f64, tau: f64) -> DiscrepancyConfig {
        DiscrepancyConfig { tau, err_sys_variant: ErrSysVariant::Gprime, g_prime_norm: 1e-3, g_pp_inf: 1.0, delta }
    }

    #[test]
    fn stopping_rule_examples() {
        let seq = [(16, 2), (64, 5), (256, 3)];
        let r = coarse_to_fine(&[16, 64, 256], |l| Ok(seq.iter().find(|p| p.0 == l).unwrap().1)).unwrap();
        assert_eq!((r.chosen_level, r.chosen_k), (64, 5));
        assert_eq!(r.trajectory, seq.to_vec());
        let r = coarse_to_fine(&[16, 64, 256, 1024], |_| Ok(4)).unwrap();
        assert_eq!((r.chosen_level, r.chosen_k), (1024, 4));
    }

    #[test]
    fn huge_noise_gives_zero_everywhere() {
        let model = ForwardModel::new(Kernel::deriv2(), synthetic_solution(0.75, 200));
        let data = model.sample(make_grid(256, GridScheme::UniformInterior).unwrap(), 0.0, 1, 0, NoiseDistribution::Gaussian);
        let ladder = LadderConfig::for_data(256, 4, 1).unwrap();
        let r = algorithm1(&data, &cfg(1e6, 1.5), &ladder, SolverPath::Deriv2, &Kernel::deriv2()).unwrap();
        assert!(r.trajectory.iter().all(|&(_, k)| k == 0));
        // equal k_dp keeps refining, so the walk ends at full resolution
        assert_eq!((r.chosen_level, r.chosen_k), (256, 0));
        assert_eq!(r.trajectory.len(), 4);
    }

    #[test]
    fn threshold_below_data_norm_needs_a_term() {
        let model = ForwardModel::new(Kernel::deriv2(), synthetic_solution(0.75, 200));
        let s = model.sample(make_grid(64, GridScheme::UniformInterior).unwrap(), 0.0, 1, 0, NoiseDistribution::Gaussian);
        let spec = Deriv2Spectral::new(64).unwrap();
        let norm = crate::linalg::norm(&s.noisy);
        let mut c = cfg(0.0, 1.5);
        c.g_prime_norm = 0.99 * norm * 8.0 / 1.5;
        assert!(k_discrepancy(&spec, &s, &c).unwrap() >= 1);
        c.g_prime_norm = 1.01 * norm * 8.0 / 1.5;
        assert_eq!(k_discrepancy(&spec, &s, &c).unwrap(), 0);
    }

    #[test]
    fn ladder_validation() {
        assert!(LadderConfig::for_data(4096, 4, 2).is_ok());
        assert!(LadderConfig::for_data(1000, 4, 2).is_err());
        assert!(LadderConfig::for_data(64, 4, 3).is_err());
        assert!(LadderConfig::for_data(64, 4, 0).is_err());
        assert_eq!(LadderConfig::for_data(4096, 4, 2).unwrap().levels(), vec![16, 64, 256, 1024, 4096]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn k_nonincreasing_in_tau(seed in 0u64..1000, t1 in 1.01f64..3.0, dt in 0.0f64..3.0) {
            let model = ForwardModel::new(Kernel::deriv2(), synthetic_solution(0.75, 300));
            let s = model.sample(make_grid(128, GridScheme::UniformInterior).unwrap(), 1e-4, seed, 0, NoiseDistribution::Gaussian);
            let spec = Deriv2Spectral::new(128).unwrap();
            let k1 = k_discrepancy(&spec, &s, &cfg(1e-4, t1)).unwrap();
            let k2 = k_discrepancy(&spec, &s, &cfg(1e-4, t1 + dt)).unwrap();
            prop_assert!(k2 <= k1);
        }

        #[test]
        fn trajectory_properties(seq in proptest::collection::vec(0usize..20, 2..7)) {
            let levels: Vec<usize> = (0..seq.len()).map(|i| 4usize.pow(i as u32 + 1)).collect();
            let r = coarse_to_fine(&levels, |l| Ok(seq[levels.iter().position(|&x| x == l).unwrap()])).unwrap();
            prop_assert!(r.trajectory.len() <= levels.len());
            let lv: Vec<usize> = r.trajectory.iter().map(|p| p.0).collect();
            prop_assert!(lv.windows(2).all(|w| w[0] < w[1]));
            let upto = r.trajectory.iter().position(|p| p.0 == r.chosen_level).unwrap();
            prop_assert!(r.trajectory[..=upto].windows(2).all(|w| w[0].1 <= w[1].1));
            // argmax of the visited k_dp, ties toward the finer level
            let best = r.trajectory.iter().max_by_key(|p| p.1).unwrap();
            prop_assert_eq!(best.0, r.chosen_level);
            prop_assert_eq!(best.1, r.chosen_k);
        }
    }
}
