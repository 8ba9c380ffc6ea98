//! Globally adaptive Gauss–Legendre quadrature.
//!
//! Each panel is integrated with a 10-point rule on the whole panel and on
//! its two halves; the difference is the panel's error estimate. The panel
//! with the largest estimate is bisected until the summed estimate drops
//! below the absolute tolerance.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::ModelParams;

const ORDER: usize = 10;
const MAX_PANELS: usize = 20_000;

fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule().iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn evaluate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let m = 0.5 * (a + b);
    let coarse = panel(f, a, b);
    let fine = panel(f, a, m) + panel(f, m, b);
    Panel {
        a,
        b,
        value: fine,
        error: (fine - coarse).abs(),
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// `breaks` are interior points where the integrand is known to vary
/// rapidly; the initial partition is split there.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, breaks: &[f64]) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("quadrature tolerance must be positive, got {tol}")));
    }
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let mut panels: Vec<Panel> = cuts.windows(2).map(|w| evaluate(&f, w[0], w[1])).collect();
    loop {
        let total_err: f64 = panels.iter().map(|p| p.error).sum();
        if total_err <= tol {
            // sum small contributions first
            let mut values: Vec<f64> = panels.iter().map(|p| p.value).collect();
            values.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());
            return Ok(values.iter().sum());
        }
        if panels.len() >= MAX_PANELS || !total_err.is_finite() {
            return Err(Error::QuadratureNonConvergence {
                tol,
                estimate: total_err,
                evaluations: panels.len(),
            });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap())
            .unwrap();
        let p = panels.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            return Err(Error::QuadratureNonConvergence {
                tol,
                estimate: total_err,
                evaluations: panels.len(),
            });
        }
        panels.push(evaluate(&f, p.a, m));
        panels.push(evaluate(&f, m, p.b));
    }
}

/// Interior split points for momentum integrals over `[0, π]`.
///
/// Near the critical coupling the dispersion nearly vanishes at `φ = π`
/// over a window of width ~|λ − 1|; splitting there isolates the feature.
pub fn breakpoints(params: &ModelParams) -> Vec<f64> {
    let d = (params.lambda() - 1.0).abs();
    if d < 0.2 {
        let eps = d.max(1e-6);
        vec![PI - 10.0 * eps, PI - eps]
    } else {
        Vec::new()
    }
}
