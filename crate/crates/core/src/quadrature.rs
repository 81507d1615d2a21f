//! Reference quadrature used to evaluate continuous integrals (forward data,
//! Gram entries, L2 norms) independently of the discretizations under test.

use gauss_quad::GaussLegendre;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

const ADAPTIVE_ORDER: usize = 10;
const MAX_DEPTH: u32 = 40;

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(order: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).expect("nonzero");
        let gl = GaussLegendre::new(order);
        let (nodes, weights) = gl.iter().map(|(x, w)| (*x, *w)).unzip();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integral of `f` over [a, b] with a single panel.
    pub fn apply(&self, f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let s: f64 = self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).sum();
        half * s
    }

    /// Nodes and weights of the composite rule on [a, b] with `panels` panels.
    pub fn composite_points(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.order());
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((lo + 0.5 * h * (1.0 + x), 0.5 * h * w));
            }
        }
        out
    }
}

fn adaptive_rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| Rule::new(ADAPTIVE_ORDER))
}

/// Composite Gauss-Legendre quadrature with equal panels.
pub fn composite(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let rule = Rule::new(order);
    let h = (b - a) / panels as f64;
    (0..panels).map(|p| rule.apply(&f, a + p as f64 * h, a + (p + 1) as f64 * h)).sum()
}

/// Adaptive bisection quadrature over [a, b] to absolute tolerance `tol`.
///
/// `breaks` lists points where the integrand may have a kink or jump; the
/// interval is split there first. Points outside (a, b) are ignored.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let rule = adaptive_rule();
    let width = b - a;
    pts.windows(2)
        .map(|w| {
            let local_tol = tol * (w[1] - w[0]) / width;
            let whole = rule.apply(&f, w[0], w[1]);
            refine(rule, &f, w[0], w[1], whole, local_tol, 0)
        })
        .sum()
}

fn refine(rule: &Rule, f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = rule.apply(f, a, mid);
    let right = rule.apply(f, mid, b);
    let both = left + right;
    if (both - whole).abs() <= tol || depth >= MAX_DEPTH {
        return both;
    }
    refine(rule, f, a, mid, left, 0.5 * tol, depth + 1) + refine(rule, f, mid, b, right, 0.5 * tol, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exactness() {
        let r = Rule::new(5);
        let v = r.apply(&|x: f64| x.powi(9), 0.0, 1.0);
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let v = adaptive(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[], 1e-12);
        assert!((v - (0.045 + 0.245)).abs() < 1e-11);
        let w = adaptive(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 1e-12);
        assert!((w - 0.29).abs() < 1e-14);
    }

    #[test]
    fn composite_sine() {
        let v = composite(|x| (PI * x).sin(), 0.0, 1.0, 64, 2);
        assert!((v - 2.0 / PI).abs() < 1e-9);
    }
}
