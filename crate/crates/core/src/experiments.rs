//! Monte Carlo harness: per `(SNR, m_o)` cell, the optimal and
//! discrepancy-principle errors and truncation levels averaged over runs,
//! with the a-priori level and the level chosen by the coarse-to-fine walk.

use crate::adaptive::{coarse_to_fine, first_below, residual_tails, DiscrepancyConfig, ErrSysVariant};
use crate::kernels::{GridProfile, Kernel, TrueSolution};
use crate::quadrature_svd::{build_collocation, GridEstimate};
use crate::rng::{self, NoiseDistribution};
use crate::sampling::{apriori_factor, block_means, delta_from_snr, ForwardModel, GridScheme, GridSpec};
use crate::spectral_deriv2::{error_profile_from_coordinates, gprime_norm, Deriv2Spectral};
use crate::{linalg, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Serializable description of the true solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolutionSpec {
    /// Sine coefficients `(pi j)^{-2s}`, `j <= terms`.
    Synthetic { s: f64, terms: usize },
    /// Named grid profile (`gravity` or `heat`).
    Profile { name: String },
}

impl SolutionSpec {
    pub fn to_solution(&self) -> Result<TrueSolution> {
        match self {
            SolutionSpec::Synthetic { s, terms } => {
                if !(*s > 0.0) || *terms < 1 {
                    return Err(Error::InvalidParameter("synthetic solution needs s > 0 and terms >= 1".into()));
                }
                Ok(TrueSolution::SyntheticSpectral { s: *s, terms: *terms })
            }
            SolutionSpec::Profile { name } => match name.as_str() {
                "gravity" => Ok(TrueSolution::GridVector(GridProfile::GravityPiecewiseLinear)),
                "heat" => Ok(TrueSolution::GridVector(GridProfile::HeatPulse)),
                other => Err(Error::UnsupportedProblem(format!("unknown profile '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: String,
    pub solution: SolutionSpec,
    /// Number of raw samples.
    pub m: usize,
    /// Data levels `m_o`, each dividing `m`.
    pub levels: Vec<usize>,
    pub snr_list: Vec<f64>,
    pub runs: usize,
    pub tau: f64,
    pub seed: u64,
    pub distribution: NoiseDistribution,
    pub err_sys: ErrSysVariant,
    /// Ladder base for the a-priori level.
    pub a: usize,
    /// Resolution of the reference grid for the discretization error
    /// (grid-valued solutions only).
    pub d_ref: usize,
}

impl ExperimentConfig {
    /// Defaults for a built-in problem. For `deriv2`, `s` is the smoothness
    /// index of the result tables; the solution has coefficients
    /// `(pi j)^{-4s}`, i.e. `synthetic_solution(2 s, 5000)`.
    pub fn for_problem(problem: &str, s: f64) -> Result<Self> {
        let solution = match problem {
            "deriv2" => SolutionSpec::Synthetic { s: 2.0 * s, terms: 5000 },
            "gravity" | "heat" => SolutionSpec::Profile { name: problem.to_string() },
            other => return Err(Error::UnsupportedProblem(format!("unknown problem '{other}'"))),
        };
        Ok(Self {
            problem: problem.to_string(),
            solution,
            m: 4096,
            levels: vec![4096, 1024, 256, 64, 16],
            snr_list: vec![512.0, 64.0, 8.0, 1.0],
            runs: 50,
            tau: 1.5,
            seed: 1,
            distribution: NoiseDistribution::Gaussian,
            err_sys: ErrSysVariant::Gprime,
            a: 4,
            d_ref: 8192,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.iter().any(|&l| l == 0 || !self.m.is_multiple_of(l)) {
            return Err(Error::InvalidParameter(format!("every level must divide m = {}", self.m)));
        }
        if self.snr_list.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("SNR values must be positive".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be positive".into()));
        }
        if !(self.tau > 1.0) {
            return Err(Error::InvalidParameter("tau must exceed 1".into()));
        }
        if self.d_ref < self.m {
            return Err(Error::InvalidParameter("reference resolution must be at least m".into()));
        }
        Ok(())
    }
}

/// Means over runs for one `(snr, m_o)` pair. Errors are relative to the
/// norm of the true solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub snr: f64,
    pub m_o: usize,
    pub e_opt: f64,
    pub k_opt: f64,
    /// Argmin of the run-averaged error curve.
    pub k_opt_of_mean: usize,
    pub e_dp: f64,
    pub k_dp: f64,
    /// `m_o` is the a-priori level for this SNR.
    pub apriori: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriEntry {
    pub snr: f64,
    pub delta: f64,
    pub o_raw: f64,
    pub level: usize,
}

/// How often the coarse-to-fine walk chose each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSummary {
    pub snr: f64,
    /// `(m_o, count)`, coarse to fine.
    pub chosen_level_counts: Vec<(usize, usize)>,
    pub mean_chosen_k: f64,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub crate_version: String,
    pub git_revision: Option<String>,
    pub seed: u64,
    pub g_prime_norm: f64,
    pub g_pp_inf: f64,
    /// Norm used for the relative errors.
    pub solution_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Sorted by SNR (descending) then `m_o` (descending).
    pub cells: Vec<Cell>,
    pub apriori: Vec<AprioriEntry>,
    pub adaptive: Vec<AdaptiveSummary>,
    pub metadata: ReportMetadata,
}

impl ExperimentReport {
    pub fn cell(&self, snr: f64, m_o: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.snr == snr && c.m_o == m_o)
    }

    pub fn apriori_level(&self, snr: f64) -> Option<usize> {
        self.apriori.iter().find(|a| a.snr == snr).map(|a| a.level)
    }

    /// Cells where the mean of per-run argmins and the argmin of the mean
    /// error curve differ by more than one.
    pub fn k_opt_disagreements(&self) -> Vec<&Cell> {
        self.cells.iter().filter(|c| (c.k_opt - c.k_opt_of_mean as f64).abs() > 1.0).collect()
    }
}

/// Per-run outcome at one level and SNR.
#[derive(Debug, Clone)]
struct RunLevel {
    curve: Vec<f64>,
    e_opt: f64,
    k_opt: usize,
    e_dp: f64,
    k_dp: usize,
}

fn summarize(curve: Vec<f64>, k_dp: usize) -> RunLevel {
    let (k_opt, e_opt) = argmin(&curve);
    RunLevel { e_dp: curve[k_dp], k_dp, e_opt, k_opt, curve }
}

/// Smallest index of the minimum.
fn argmin(v: &[f64]) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best
}

/// Linear spline through `(0, 0)`, `(x_i, values_i)` on the `m_o`-point
/// midpoint grid and `(1, 0)`, sampled on the `d`-point midpoint grid.
pub fn spline_project(values: &[f64], d: usize) -> Vec<f64> {
    let mo = values.len();
    let node = |j: usize| -> (f64, f64) {
        match j {
            0 => (0.0, 0.0),
            j if j == mo + 1 => (1.0, 0.0),
            j => ((2 * j - 1) as f64 / (2 * mo) as f64, values[j - 1]),
        }
    };
    (0..d)
        .map(|i| {
            let y = (2 * i + 1) as f64 / (2 * d) as f64;
            let j = ((y * mo as f64 + 0.5).floor() as usize).min(mo);
            let (x0, v0) = node(j);
            let (x1, v1) = node(j + 1);
            v0 + (v1 - v0) * (y - x0) / (x1 - x0)
        })
        .collect()
}

/// Grid error metrics of an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridErrors {
    /// `||values - x_{m_o}|| / sqrt(m_o)`.
    pub e_k: f64,
    /// `||spline(x_{m_o}) - x_D|| / sqrt(D)`.
    pub e_disc: f64,
    pub e_total: f64,
}

pub fn grid_errors(est: &GridEstimate, x_exact_mo: &[f64], x_exact_d: &[f64]) -> Result<GridErrors> {
    let mo = est.values.len();
    if x_exact_mo.len() != mo {
        return Err(Error::InvalidParameter(format!("x_exact has {} entries, estimate has {mo}", x_exact_mo.len())));
    }
    let d = x_exact_d.len();
    if d < mo {
        return Err(Error::InvalidParameter("reference grid coarser than the estimate".into()));
    }
    let e_k = rms_diff(&est.values, x_exact_mo);
    let e_disc = discretization_error(x_exact_mo, x_exact_d);
    Ok(GridErrors { e_k, e_disc, e_total: (e_k * e_k + e_disc * e_disc).sqrt() })
}

fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn discretization_error(x_mo: &[f64], x_d: &[f64]) -> f64 {
    rms_diff(&spline_project(x_mo, x_d.len()), x_d)
}

/// `(||g'||_{L2}, ||g''||_inf)` from exact data on a fine grid by finite
/// differences.
pub fn data_derivative_norms(exact: &[f64], grid: &GridSpec) -> (f64, f64) {
    let pts = grid.points();
    let mut gp = 0.0;
    let mut gpp = 0.0f64;
    for i in 0..exact.len().saturating_sub(1) {
        let h = pts[i + 1] - pts[i];
        gp += ((exact[i + 1] - exact[i]) / h).powi(2) * h;
        if i + 2 < exact.len() {
            let h2 = pts[i + 2] - pts[i + 1];
            let d2 = 2.0 * ((exact[i + 2] - exact[i + 1]) / h2 - (exact[i + 1] - exact[i]) / h) / (h + h2);
            gpp = gpp.max(d2.abs());
        }
    }
    (gp.sqrt(), gpp)
}

fn cell_error(snr: f64, m_o: usize, e: Error) -> Error {
    Error::Numerical(format!("cell (snr={snr}, m_o={m_o}): {e}"))
}

/// Run the Monte Carlo study.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let kernel = Kernel::by_name(&cfg.problem)?;
    let solution = cfg.solution.to_solution()?;
    let deriv2 = kernel.name == "deriv2";
    let scheme = if deriv2 { GridScheme::UniformInterior } else { GridScheme::Midpoint };
    let model = ForwardModel::new(kernel.clone(), solution.clone());
    let fine = GridSpec { m: cfg.m, scheme };
    let exact_fine = model.exact_data(&fine);
    let g_norm = linalg::norm(&exact_fine);
    let (fd_gp, fd_gpp) = data_derivative_norms(&exact_fine, &fine);
    let (g_prime_norm, g_pp_inf) = if deriv2 {
        // g'' = -f for this kernel
        let f_inf = solution.grid_values(cfg.d_ref).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        (gprime_norm(&solution).unwrap_or(fd_gp), f_inf)
    } else {
        (fd_gp, fd_gpp)
    };

    let deltas: Vec<f64> = cfg.snr_list.iter().map(|&snr| delta_from_snr(g_norm, cfg.m, snr)).collect::<Result<_>>()?;
    let mut apriori = Vec::with_capacity(cfg.snr_list.len());
    for (&snr, &delta) in cfg.snr_list.iter().zip(&deltas) {
        let f = apriori_factor(cfg.m, delta, g_prime_norm, cfg.a)?;
        apriori.push(AprioriEntry { snr, delta, o_raw: f.raw, level: f.level(cfg.m) });
    }

    let solution_norm;
    let x_d;
    if deriv2 {
        solution_norm = solution.l2_norm();
        x_d = Vec::new();
    } else {
        x_d = solution.grid_values(cfg.d_ref);
        solution_norm = linalg::norm(&x_d) / (cfg.d_ref as f64).sqrt();
    }
    let f_norm_sq = solution_norm * solution_norm;

    // results[level][run][snr]
    let mut results: Vec<Vec<Vec<RunLevel>>> = Vec::with_capacity(cfg.levels.len());
    for &m_o in &cfg.levels {
        let o = cfg.m / m_o;
        let dcfg = |delta: f64| DiscrepancyConfig { tau: cfg.tau, err_sys_variant: cfg.err_sys, g_prime_norm, g_pp_inf, delta };
        let per_run: Vec<Vec<RunLevel>> = if deriv2 {
            let spec = Deriv2Spectral::new(m_o).map_err(|e| cell_error(f64::NAN, m_o, e))?;
            let coarse = GridSpec { m: m_o, scheme };
            let pe = spec.project(&model.exact_data(&coarse));
            (0..cfg.runs)
                .into_par_iter()
                .map(|r| {
                    let z = rng::unit_noise(cfg.seed, r as u64, cfg.m, cfg.distribution);
                    deltas
                        .iter()
                        .map(|&delta| {
                            let noisy: Vec<f64> = exact_fine.iter().zip(&z).map(|(g, zi)| g + delta * zi).collect();
                            let p = spec.project(&block_means(&noisy, o));
                            let curve: Vec<f64> = error_profile_from_coordinates(&spec.sigma, &p, &pe, f_norm_sq)
                                .into_iter()
                                .map(|e| e / solution_norm)
                                .collect();
                            let k_dp = first_below(&residual_tails(&p), dcfg(delta).threshold(m_o, o), m_o);
                            summarize(curve, k_dp)
                        })
                        .collect()
                })
                .collect()
        } else {
            let sys = build_collocation(&kernel, m_o).map_err(|e| cell_error(f64::NAN, m_o, e))?;
            let x_mo = solution.grid_values(m_o);
            let x_norm_sq = linalg::dot(&x_mo, &x_mo);
            let zx = linalg::project(&sys.svd.right, &x_mo);
            let e_disc = discretization_error(&x_mo, &x_d);
            let rank = sys.rank;
            let sigma = sys.sigma().to_vec();
            (0..cfg.runs)
                .into_par_iter()
                .map(|r| {
                    let z = rng::unit_noise(cfg.seed, r as u64, cfg.m, cfg.distribution);
                    deltas
                        .iter()
                        .map(|&delta| {
                            let noisy: Vec<f64> = exact_fine.iter().zip(&z).map(|(g, zi)| g + delta * zi).collect();
                            let p = sys.project(&block_means(&noisy, o));
                            let mut acc = x_norm_sq;
                            let mut curve = Vec::with_capacity(rank + 1);
                            let total = |acc: f64| {
                                let ek2 = acc.max(0.0) / m_o as f64;
                                (ek2 + e_disc * e_disc).sqrt() / solution_norm
                            };
                            curve.push(total(acc));
                            for j in 0..rank {
                                let c = p[j] / sigma[j];
                                acc += c * c - 2.0 * c * zx[j];
                                curve.push(total(acc));
                            }
                            let k_dp = first_below(&residual_tails(&p), dcfg(delta).threshold(m_o, o), rank);
                            summarize(curve, k_dp)
                        })
                        .collect()
                })
                .collect()
        };
        results.push(per_run);
    }

    let nr = cfg.runs as f64;
    let mut cells = Vec::new();
    let mut adaptive = Vec::new();
    let mut order: Vec<usize> = (0..cfg.levels.len()).collect();
    order.sort_by(|&a, &b| cfg.levels[b].cmp(&cfg.levels[a]));
    let mut ascending = order.clone();
    ascending.reverse();
    for (si, &snr) in cfg.snr_list.iter().enumerate() {
        let ap = apriori[si].level;
        for &li in &order {
            let m_o = cfg.levels[li];
            let runs = &results[li];
            let len = runs[0][si].curve.len();
            let mut mean_curve = vec![0.0; len];
            let (mut e_opt, mut k_opt, mut e_dp, mut k_dp) = (0.0, 0.0, 0.0, 0.0);
            for run in runs {
                let c = &run[si];
                if !c.e_opt.is_finite() {
                    return Err(cell_error(snr, m_o, Error::Numerical("non-finite error".into())));
                }
                for (acc, v) in mean_curve.iter_mut().zip(&c.curve) {
                    *acc += v / nr;
                }
                e_opt += c.e_opt / nr;
                k_opt += c.k_opt as f64 / nr;
                e_dp += c.e_dp / nr;
                k_dp += c.k_dp as f64 / nr;
            }
            cells.push(Cell { snr, m_o, e_opt, k_opt, k_opt_of_mean: argmin(&mean_curve).0, e_dp, k_dp, apriori: m_o == ap });
        }
        // coarse-to-fine walk over the configured levels for every run
        let asc_levels: Vec<usize> = ascending.iter().map(|&li| cfg.levels[li]).collect();
        let mut counts: Vec<(usize, usize)> = asc_levels.iter().map(|&l| (l, 0)).collect();
        let (mut mean_k, mut mean_err) = (0.0, 0.0);
        for r in 0..cfg.runs {
            let walk = coarse_to_fine(&asc_levels, |lvl| {
                let li = cfg.levels.iter().position(|&l| l == lvl).expect("configured level");
                Ok(results[li][r][si].k_dp)
            })?;
            let li = cfg.levels.iter().position(|&l| l == walk.chosen_level).expect("configured level");
            counts.iter_mut().find(|c| c.0 == walk.chosen_level).expect("level").1 += 1;
            mean_k += walk.chosen_k as f64 / nr;
            mean_err += results[li][r][si].e_dp / nr;
        }
        adaptive.push(AdaptiveSummary { snr, chosen_level_counts: counts, mean_chosen_k: mean_k, mean_error: mean_err });
    }

    Ok(ExperimentReport {
        config: cfg.clone(),
        cells,
        apriori,
        adaptive,
        metadata: ReportMetadata {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            git_revision: None,
            seed: cfg.seed,
            g_prime_norm,
            g_pp_inf,
            solution_norm,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Markdown,
}

impl TableFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            "markdown" | "md" => Some(Self::Markdown),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Markdown => "md",
        }
    }
}

/// Two significant digits, `3.7e-2`.
fn sig2(x: f64) -> String {
    format!("{x:.1e}")
}

fn snr_label(snr: f64) -> String {
    let l = snr.log(8.0);
    if (l - l.round()).abs() < 1e-9 && l.round() >= 2.0 {
        format!("8^{}", l.round() as i32)
    } else {
        format!("{snr}")
    }
}

/// Render the report.
pub fn emit_table(report: &ExperimentReport, format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        TableFormat::Csv => {
            let mut out = String::from("snr,m_o,e_opt,k_opt,k_opt_of_mean,e_dp,k_dp,apriori\n");
            for c in &report.cells {
                writeln!(out, "{},{},{},{},{},{},{},{}", c.snr, c.m_o, c.e_opt, c.k_opt, c.k_opt_of_mean, c.e_dp, c.k_dp, c.apriori)
                    .expect("write to string");
            }
            Ok(out)
        }
        TableFormat::Markdown => Ok(markdown(report)),
    }
}

fn markdown(report: &ExperimentReport) -> String {
    let cfg = &report.config;
    let mut levels = cfg.levels.clone();
    levels.sort_unstable_by(|a, b| b.cmp(a));
    let mut out = String::new();
    let title = match &cfg.solution {
        SolutionSpec::Synthetic { s, .. } if cfg.problem == "deriv2" => format!("{}, s = {}", cfg.problem, s / 2.0),
        _ => cfg.problem.clone(),
    };
    writeln!(out, "## {title}\n").ok();
    writeln!(out, "{} runs, m = {}, tau = {}, seed = {}. Entries are mean relative error (mean k); the a-priori level is in bold.\n", cfg.runs, cfg.m, cfg.tau, cfg.seed).ok();
    for (label, pick) in [("optimal k", 0), ("discrepancy principle", 1)] {
        writeln!(out, "### {label}\n").ok();
        let header: Vec<String> = levels.iter().map(|l| format!("m_o = {l}")).collect();
        writeln!(out, "| SNR | {} |", header.join(" | ")).ok();
        writeln!(out, "|---|{}", "---|".repeat(levels.len())).ok();
        for &snr in &cfg.snr_list {
            let mut row = vec![snr_label(snr)];
            for &l in &levels {
                let c = report.cell(snr, l).expect("cell for every level");
                let (e, k) = if pick == 0 { (c.e_opt, c.k_opt) } else { (c.e_dp, c.k_dp) };
                let txt = format!("{} ({:.1})", sig2(e), k);
                row.push(if c.apriori { format!("**{txt}**") } else { txt });
            }
            writeln!(out, "| {} |", row.join(" | ")).ok();
        }
        writeln!(out).ok();
    }
    writeln!(out, "### level chosen by the coarse-to-fine walk\n").ok();
    writeln!(out, "| SNR | counts (m_o: runs) | mean k | mean relative error |").ok();
    writeln!(out, "|---|---|---|---|").ok();
    for a in &report.adaptive {
        let counts: Vec<String> = a.chosen_level_counts.iter().filter(|c| c.1 > 0).map(|(l, n)| format!("{l}: {n}")).collect();
        writeln!(out, "| {} | {} | {:.1} | {} |", snr_label(a.snr), counts.join(", "), a.mean_chosen_k, sig2(a.mean_error)).ok();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_examples() {
        assert_eq!(spline_project(&[1.0], 2), vec![0.5, 0.5]);
        assert!(spline_project(&[0.0; 8], 64).iter().all(|&v| v == 0.0));
        let x = [0.3, -0.2, 0.9, 0.1];
        let same = spline_project(&x, 4);
        for (a, b) in same.iter().zip(&x) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn spline_refinement_error_is_second_order() {
        let f = |t: f64| (std::f64::consts::PI * t).sin() * t;
        let mo = 64;
        let d = 8192;
        let samples: Vec<f64> = (0..mo).map(|i| f((2 * i + 1) as f64 / (2 * mo) as f64)).collect();
        let direct: Vec<f64> = (0..d).map(|i| f((2 * i + 1) as f64 / (2 * d) as f64)).collect();
        let rms = rms_diff(&spline_project(&samples, d), &direct);
        // f'' is bounded by about 2 pi + pi^2; boundary cells are linear extrapolations to 0
        let scale = (2.0 * std::f64::consts::PI + std::f64::consts::PI.powi(2)) / (mo * mo) as f64;
        assert!(rms < scale && rms > 1e-3 * scale, "rms {rms} scale {scale}");
    }

    #[test]
    fn grid_error_identities() {
        let x = vec![0.5, 1.0, 0.5, 0.25];
        let est = GridEstimate { k: 1, values: x.clone(), coeffs: vec![0.0; 4], m_o: 4, o: 1 };
        let xd = spline_project(&x, 16);
        let e = grid_errors(&est, &x, &xd).unwrap();
        assert_eq!((e.e_k, e.e_disc, e.e_total), (0.0, 0.0, 0.0));
        let xd2: Vec<f64> = xd.iter().map(|v| v + 0.1).collect();
        let e = grid_errors(&est, &x, &xd2).unwrap();
        assert_eq!(e.e_k, 0.0);
        assert!((e.e_total - e.e_disc).abs() < 1e-15);
        assert!(grid_errors(&est, &x[..3], &xd).is_err());
    }

    #[test]
    fn zero_noise_single_run() {
        let mut cfg = ExperimentConfig::for_problem("deriv2", 0.375).unwrap();
        cfg.m = 256;
        cfg.levels = vec![256, 64];
        cfg.snr_list = vec![1e12];
        cfg.runs = 1;
        cfg.d_ref = 512;
        let r = run_experiment(&cfg).unwrap();
        let c = r.cell(1e12, 256).unwrap();
        assert!(c.e_dp >= c.e_opt);
        assert!(c.k_opt > 50.0);
    }

    #[test]
    fn deriv2_report_is_consistent() {
        let mut cfg = ExperimentConfig::for_problem("deriv2", 0.375).unwrap();
        cfg.m = 1024;
        cfg.levels = vec![1024, 256, 64, 16];
        cfg.runs = 6;
        cfg.d_ref = 2048;
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.cells.len(), 16);
        for c in &r.cells {
            assert!(c.e_opt <= c.e_dp + 1e-12);
        }
        for a in &r.adaptive {
            assert_eq!(a.chosen_level_counts.iter().map(|c| c.1).sum::<usize>(), 6);
        }
        let json = emit_table(&r, TableFormat::Json).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let md = emit_table(&r, TableFormat::Markdown).unwrap();
        assert_eq!(md.matches("**").count(), 2 * 2 * 4);
        let csv = emit_table(&r, TableFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 17);
    }

    #[test]
    fn gravity_small_run() {
        let mut cfg = ExperimentConfig::for_problem("gravity", 0.0).unwrap();
        cfg.m = 256;
        cfg.levels = vec![256, 64, 16];
        cfg.snr_list = vec![64.0, 1.0];
        cfg.runs = 4;
        cfg.d_ref = 512;
        let r = run_experiment(&cfg).unwrap();
        for c in &r.cells {
            assert!(c.e_opt.is_finite() && c.e_opt > 0.0 && c.e_opt <= c.e_dp + 1e-12);
        }
    }

    #[test]
    fn derivative_norms_of_sine() {
        let grid = GridSpec { m: 4096, scheme: GridScheme::Midpoint };
        let g: Vec<f64> = grid.points().iter().map(|&x| (2.0 * std::f64::consts::PI * x).sin()).collect();
        let (gp, gpp) = data_derivative_norms(&g, &grid);
        let pi = std::f64::consts::PI;
        // the two boundary half-cells are outside the grid: at most (2 pi)^2 / m in the square
        let gap = 4.0 * pi * pi / 4096.0 / (2.0 * 2.0 * pi / 2f64.sqrt());
        assert!((gp - 2.0 * pi / 2f64.sqrt()).abs() < gap + 1e-4);
        assert!((gpp - 4.0 * pi * pi).abs() < 1e-3);
    }
}
