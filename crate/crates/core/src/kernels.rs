//! Integral kernels and true solutions.
//!
//! A kernel `kappa(x, y)` maps a solution `f(y)` to data
//! `g(x) = int_0^1 kappa(x, y) f(y) dy`.

use crate::quadrature;
use crate::{Error, Result};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type SolutionFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Where the rows of the collocation matrix are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollocationRule {
    /// Rows and columns at the cell midpoints: `A_ij = kappa(x_i, x_j) / m`.
    Midpoint,
    /// Rows at the right cell edges, columns at the midpoints:
    /// `A_ij = kappa(x_i + 1/(2m), x_j) / m`. Keeps the diagonal of causal
    /// (Volterra) kernels away from the zero of the kernel.
    RightEndpoint,
}

#[derive(Clone)]
pub struct Kernel {
    pub name: String,
    eval: KernelFn,
    /// Bound on the second partial derivatives of the kernel on the unit square.
    pub smoothness_bound: f64,
    pub symmetric: bool,
    /// Kernel vanishes for `y > x`.
    pub volterra: bool,
    /// `y -> kappa(x, y)` has a kink at `y = x`.
    pub diagonal_kink: bool,
    pub rule: CollocationRule,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("smoothness_bound", &self.smoothness_bound)
            .field("symmetric", &self.symmetric)
            .field("volterra", &self.volterra)
            .field("rule", &self.rule)
            .finish()
    }
}

impl Kernel {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.eval)(x, y)
    }

    /// Kernel from a closure. The smoothness bound is estimated numerically
    /// when not supplied.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        symmetric: bool,
        smoothness_bound: Option<f64>,
    ) -> Self {
        let eval: KernelFn = Arc::new(f);
        let smoothness_bound = smoothness_bound.unwrap_or_else(|| estimate_smoothness_bound(&*eval));
        Self {
            name: name.into(),
            eval,
            smoothness_bound,
            symmetric,
            volterra: false,
            diagonal_kink: false,
            rule: CollocationRule::Midpoint,
        }
    }

    /// Green's function of `-u'' = f` with homogeneous Dirichlet conditions.
    pub fn deriv2() -> Self {
        Self {
            name: "deriv2".into(),
            eval: Arc::new(|x: f64, y: f64| (x * (1.0 - y)).min(y * (1.0 - x))),
            smoothness_bound: 1.0,
            symmetric: true,
            volterra: false,
            diagonal_kink: true,
            rule: CollocationRule::Midpoint,
        }
    }

    /// Gravity surveying kernel with source depth `d > 0`.
    pub fn gravity(d: f64) -> Result<Self> {
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!("gravity depth must be positive, got {d}")));
        }
        Ok(Self {
            name: "gravity".into(),
            eval: Arc::new(move |x: f64, y: f64| d * (d * d + (x - y).powi(2)).powf(-1.5)),
            smoothness_bound: 3.0 / d.powi(4),
            symmetric: true,
            volterra: false,
            diagonal_kink: false,
            rule: CollocationRule::Midpoint,
        })
    }

    /// Inverse heat conduction kernel with conductivity `kappa > 0`.
    pub fn heat(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("heat conductivity must be positive, got {kappa}")));
        }
        let eval: KernelFn = Arc::new(move |x: f64, y: f64| heat_profile(x - y, kappa));
        let smoothness_bound = estimate_smoothness_bound(&*eval);
        Ok(Self {
            name: "heat".into(),
            eval,
            smoothness_bound,
            symmetric: false,
            volterra: true,
            diagonal_kink: true,
            rule: CollocationRule::RightEndpoint,
        })
    }

    /// Built-in kernels with their default parameters.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "deriv2" => Ok(Self::deriv2()),
            "gravity" => Self::gravity(0.25),
            "heat" => Self::heat(1.0),
            other => Err(Error::UnsupportedProblem(format!("unknown kernel '{other}'"))),
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["deriv2", "gravity", "heat"]
    }

    /// Default true solution paired with each built-in kernel.
    pub fn default_solution(&self) -> TrueSolution {
        match self.name.as_str() {
            "gravity" => TrueSolution::GridVector(GridProfile::GravityPiecewiseLinear),
            "heat" => TrueSolution::GridVector(GridProfile::HeatPulse),
            _ => synthetic_solution(0.75, 5000),
        }
    }

    /// Points where `y -> kappa(x, y)` is not smooth.
    pub fn breaks_at(&self, x: f64) -> Vec<f64> {
        if self.diagonal_kink {
            vec![x]
        } else {
            Vec::new()
        }
    }

    /// Collocation row location for the cell whose midpoint is `x` on an
    /// `m`-cell grid.
    #[inline]
    pub fn row_point(&self, x: f64, m: usize) -> f64 {
        match self.rule {
            CollocationRule::Midpoint => x,
            CollocationRule::RightEndpoint => x + 0.5 / m as f64,
        }
    }
}

/// `h(u) = u^{-3/2} / (2 kappa sqrt(pi)) exp(-1 / (4 kappa^2 u))` for `u > 0`.
/// Below `u = 1e-12` the limit value 0 is returned.
pub fn heat_profile(u: f64, kappa: f64) -> f64 {
    if u < 1e-12 {
        return 0.0;
    }
    u.powf(-1.5) / (2.0 * kappa * PI.sqrt()) * (-1.0 / (4.0 * kappa * kappa * u)).exp()
}

/// Estimate of `sup |d_x^n d_y^n' kappa|` over `n, n' <= 2`, `n + n' <= 2`,
/// from central differences (step `1e-4`) on a 201 x 201 grid.
pub fn estimate_smoothness_bound(f: &(dyn Fn(f64, f64) -> f64 + Send + Sync)) -> f64 {
    let h = 1e-4;
    let n = 200;
    let mut sup = 0.0f64;
    for a in 0..=n {
        let x = a as f64 / n as f64;
        for b in 0..=n {
            let y = b as f64 / n as f64;
            let c = f(x, y);
            let dxx = (f(x + h, y) - 2.0 * c + f(x - h, y)) / (h * h);
            let dyy = (f(x, y + h) - 2.0 * c + f(x, y - h)) / (h * h);
            let dxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
            let dx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
            let dy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
            for v in [c, dx, dy, dxx, dyy, dxy] {
                if v.is_finite() {
                    sup = sup.max(v.abs());
                }
            }
        }
    }
    sup
}

/// Named solution profiles known as vectors on midpoint grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridProfile {
    /// Piecewise linear: rises to 2 on [0, 1/3], falls to 1 at 7/8, then to 0.
    GravityPiecewiseLinear,
    /// Smooth pulse supported on [0, 1/2].
    HeatPulse,
}

impl GridProfile {
    /// Solution vector of length `n`; entry `i` (1-based) samples the
    /// profile at `i / n`, with the breakpoints rounded to grid indices.
    pub fn values(self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        match self {
            GridProfile::GravityPiecewiseLinear => {
                let nt = (nf / 3.0).round();
                let nn = (7.0 * nf / 8.0).round();
                (1..=n)
                    .map(|i| {
                        let i = i as f64;
                        if i <= nt {
                            2.0 / nt * i
                        } else if i <= nn {
                            ((2.0 * nn - nt) - i) / (nn - nt)
                        } else {
                            (nf - i) / (nf - nn)
                        }
                    })
                    .collect()
            }
            GridProfile::HeatPulse => (1..=n)
                .map(|i| if 2 * i <= n { heat_pulse(20.0 * i as f64 / nf) } else { 0.0 })
                .collect(),
        }
    }

    /// Continuous limit of [`GridProfile::values`].
    pub fn eval(self, t: f64) -> f64 {
        match self {
            GridProfile::GravityPiecewiseLinear => {
                if t <= 1.0 / 3.0 {
                    6.0 * t
                } else if t <= 7.0 / 8.0 {
                    (17.0 / 12.0 - t) / (13.0 / 24.0)
                } else {
                    8.0 * (1.0 - t)
                }
            }
            GridProfile::HeatPulse => {
                if t <= 0.5 {
                    heat_pulse(20.0 * t)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn breakpoints(self) -> Vec<f64> {
        match self {
            GridProfile::GravityPiecewiseLinear => vec![1.0 / 3.0, 7.0 / 8.0],
            GridProfile::HeatPulse => vec![0.1, 0.15, 0.5],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridProfile::GravityPiecewiseLinear => "gravity",
            GridProfile::HeatPulse => "heat",
        }
    }
}

fn heat_pulse(ti: f64) -> f64 {
    if ti < 2.0 {
        0.75 * ti * ti / 4.0
    } else if ti < 3.0 {
        0.75 + (ti - 2.0) * (3.0 - ti)
    } else {
        0.75 * (-2.0 * (ti - 3.0)).exp()
    }
}

#[derive(Clone)]
pub enum TrueSolution {
    /// `f = sum_{j<=terms} (pi j)^{-2s} sqrt(2) sin(j pi x)`.
    SyntheticSpectral { s: f64, terms: usize },
    GridVector(GridProfile),
    Closure { name: String, f: SolutionFn, breaks: Vec<f64> },
}

impl fmt::Debug for TrueSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SyntheticSpectral { s, terms } => write!(f, "SyntheticSpectral(s={s}, terms={terms})"),
            Self::GridVector(p) => write!(f, "GridVector({p:?})"),
            Self::Closure { name, .. } => write!(f, "Closure({name})"),
        }
    }
}

/// Synthetic solution with sine coefficients `(pi j)^{-2s}`, `j <= terms`.
pub fn synthetic_solution(s: f64, terms: usize) -> TrueSolution {
    TrueSolution::SyntheticSpectral { s, terms }
}

impl TrueSolution {
    pub fn closure(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Closure { name: name.into(), f: Arc::new(f), breaks: Vec::new() }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::SyntheticSpectral { s, terms } => {
                let mut acc = 0.0;
                for j in 1..=*terms {
                    acc += sine_coefficient(*s, j) * (j as f64 * PI * x).sin();
                }
                acc * 2f64.sqrt()
            }
            Self::GridVector(p) => p.eval(x),
            Self::Closure { f, .. } => f(x),
        }
    }

    /// Values on the `n`-point midpoint grid. Grid profiles return their
    /// exact vectors; other solutions are sampled.
    pub fn grid_values(&self, n: usize) -> Vec<f64> {
        match self {
            Self::GridVector(p) => p.values(n),
            _ => (1..=n).map(|i| self.eval((i as f64 - 0.5) / n as f64)).collect(),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::GridVector(p) => p.breakpoints(),
            Self::Closure { breaks, .. } => breaks.clone(),
            Self::SyntheticSpectral { .. } => Vec::new(),
        }
    }

    /// Sine coefficients for spectral solutions.
    pub fn sine_coefficients(&self) -> Option<Vec<f64>> {
        match self {
            Self::SyntheticSpectral { s, terms } => Some((1..=*terms).map(|j| sine_coefficient(*s, j)).collect()),
            _ => None,
        }
    }

    /// `||f||_{L2(0,1)}`.
    pub fn l2_norm(&self) -> f64 {
        match self.sine_coefficients() {
            Some(c) => c.iter().map(|v| v * v).sum::<f64>().sqrt(),
            None => quadrature::adaptive(|x| self.eval(x).powi(2), 0.0, 1.0, &self.breakpoints(), 1e-13).sqrt(),
        }
    }
}

/// `(pi j)^{-2s}`.
pub fn sine_coefficient(s: f64, j: usize) -> f64 {
    (PI * j as f64).powf(-2.0 * s)
}
