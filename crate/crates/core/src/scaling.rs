//! Finite differences of the genuine negativity, pseudo-critical points and
//! finite-size scaling fits.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmn::genuine_negativity_with;
use crate::model::{ChainSize, ModelParams};
use crate::rdm::{build_rdm, Arrangement};
use crate::sdp::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`
    #[default]
    Central,
    /// `(−25f(x) + 48f(x+h) − 36f(x+2h) + 16f(x+3h) − 3f(x+4h)) / 12h`
    Forward,
    /// `(25f(x) − 48f(x−h) + 36f(x−2h) − 16f(x−3h) + 3f(x−4h)) / 12h`
    Backward,
}

impl Stencil {
    /// `(offset in units of h, weight)`; the derivative is `Σ w f(x + k h) / 12h`.
    pub fn points(self) -> &'static [(f64, f64)] {
        match self {
            Self::Central => &[(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)],
            Self::Forward => &[(0.0, -25.0), (1.0, 48.0), (2.0, -36.0), (3.0, 16.0), (4.0, -3.0)],
            Self::Backward => &[(0.0, 25.0), (-1.0, -48.0), (-2.0, 36.0), (-3.0, -16.0), (-4.0, 3.0)],
        }
    }

    /// Combine function values taken at [`Stencil::points`].
    pub fn combine(self, values: &[f64], h: f64) -> f64 {
        self.points().iter().zip(values).map(|((_, w), f)| w * f).sum::<f64>() / (12.0 * h)
    }

    /// Lagrange interpolation of `f(x)` from the values at [`Stencil::points`];
    /// exact for cubics.
    pub fn interpolate(self, values: &[f64]) -> f64 {
        let nodes = self.points();
        nodes
            .iter()
            .zip(values)
            .map(|((k, _), f)| {
                let basis: f64 = nodes.iter().filter(|(j, _)| j != k).map(|(j, _)| j / (j - k)).product();
                basis * f
            })
            .sum()
    }
}

impl std::str::FromStr for Stencil {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central" => Ok(Self::Central),
            "forward" => Ok(Self::Forward),
            "backward" => Ok(Self::Backward),
            _ => Err(Error::InvalidParameter(format!("unknown stencil {s:?}"))),
        }
    }
}

pub fn derivative<F>(f: F, x: f64, h: f64, stencil: Stencil) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    Ok(value_and_derivative(f, x, h, stencil)?.1)
}

/// `(f(x), f'(x))` from the stencil samples alone.
pub fn value_and_derivative<F>(mut f: F, x: f64, h: f64, stencil: Stencil) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("step h must be positive, got {h}")));
    }
    let values = stencil
        .points()
        .iter()
        .map(|(k, _)| f(x + k * h))
        .collect::<Result<Vec<_>>>()?;
    Ok((stencil.interpolate(&values), stencil.combine(&values, h)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub tag: String,
    /// `N(λ)` interpolated from the stencil samples, for derivative curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negativity: Option<Vec<f64>>,
}

impl Curve {
    pub fn new(lambdas: Vec<f64>, values: Vec<f64>, tag: impl Into<String>) -> Result<Self> {
        if lambdas.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} grid points and {} values",
                lambdas.len(),
                values.len()
            )));
        }
        if lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
        }
        Ok(Self {
            lambdas,
            values,
            tag: tag.into(),
            negativity: None,
        })
    }
}

/// `count` evenly spaced points from `a` to `b` inclusive.
pub fn linear_grid(a: f64, b: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(b >= a) {
        return Err(Error::InvalidParameter(format!("invalid grid {a}:{b}:{step}")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| a + k as f64 * step).collect())
}

/// `count` logarithmically spaced points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, count: usize) -> Result<Vec<f64>> {
    if !(a > 0.0 && b > a) || count < 2 {
        return Err(Error::InvalidParameter(format!("invalid log grid {a}..{b} with {count} points")));
    }
    let ratio = (b / a).ln() / (count - 1) as f64;
    Ok((0..count).map(|k| a * (ratio * k as f64).exp()).collect())
}

/// Grid minimum refined by a least-squares parabola through the five nearest points.
pub fn locate_pseudo_critical(curve: &Curve) -> Result<(f64, f64)> {
    let n = curve.values.len();
    if n < 5 {
        return Err(Error::InvalidParameter("need at least five points".into()));
    }
    let k = (0..n).min_by(|&a, &b| curve.values[a].total_cmp(&curve.values[b])).unwrap();
    if k == 0 || k == n - 1 {
        return Err(Error::GridBoundary(format!(
            "minimum of {} at the grid edge λ = {}",
            curve.tag, curve.lambdas[k]
        )));
    }
    let lo = k.saturating_sub(2).min(n - 5);
    let xs = &curve.lambdas[lo..lo + 5];
    let ys = &curve.values[lo..lo + 5];
    let x0 = curve.lambdas[k];
    let scale = (xs[4] - xs[0]) / 2.0;
    let design = DMatrix::from_fn(5, 3, |r, c| ((xs[r] - x0) / scale).powi(c as i32));
    let coef = least_squares(&design, &DVector::from_column_slice(ys))?;
    let (c, b, a) = (coef[0], coef[1], coef[2]);
    if a <= 0.0 {
        return Err(Error::DegenerateFit("no convex parabola through the minimum".into()));
    }
    let u = -b / (2.0 * a);
    if u.abs() > 1.0 {
        return Err(Error::DegenerateFit("parabola vertex outside the fitted points".into()));
    }
    Ok((x0 + u * scale, c - b * b / (4.0 * a)))
}

fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::DegenerateFit("design matrix is rank deficient".into()));
    }
    svd.solve(y, 0.0).map_err(|e| Error::DegenerateFit(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// Covariance of `(slope, intercept)` from the residual variance.
    pub covariance: [[f64; 2]; 2],
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Ordinary least squares of `y = slope·u + intercept`.
fn fit_line(us: &[f64], ys: &[f64], xs: &[f64]) -> Result<ScalingFit> {
    let n = us.len();
    if n != ys.len() {
        return Err(Error::DimensionMismatch(format!("{n} abscissae and {} values", ys.len())));
    }
    if n < 2 || us.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("need finite data and at least two points".into()));
    }
    let design = DMatrix::from_fn(n, 2, |r, c| if c == 0 { us[r] } else { 1.0 });
    let coef = least_squares(&design, &DVector::from_column_slice(ys))?;
    let res: Vec<f64> = (0..n).map(|r| ys[r] - coef[0] * us[r] - coef[1]).collect();
    let ss: f64 = res.iter().map(|r| r * r).sum();
    let dof = n.saturating_sub(2).max(1) as f64;
    let inv = (design.transpose() * &design)
        .try_inverse()
        .ok_or_else(|| Error::DegenerateFit("singular normal matrix".into()))?
        * (ss / dof);
    Ok(ScalingFit {
        slope: coef[0],
        intercept: coef[1],
        residual_rms: (ss / n as f64).sqrt(),
        covariance: [[inv[(0, 0)], inv[(0, 1)]], [inv[(1, 0)], inv[(1, 1)]]],
        xs: xs.to_vec(),
        ys: ys.to_vec(),
    })
}

pub const MIN_LOG_FIT_POINTS: usize = 4;

/// Least squares of `y = slope·ln x + intercept`.
pub fn fit_log_divergence(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    if xs.len() < MIN_LOG_FIT_POINTS {
        return Err(Error::DegenerateFit(format!(
            "need at least {MIN_LOG_FIT_POINTS} points, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter("abscissae must be positive".into()));
    }
    let us: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    fit_line(&us, ys, xs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftFit {
    pub kappa: f64,
    /// `A` in `|λ_c(L) − λ_c| = A L^{−κ}`.
    pub prefactor: f64,
    pub fit: ScalingFit,
}

/// Log-log fit of `|λ_c(L) − λ_c|` against `L`.
pub fn fit_shift_exponent(sizes: &[usize], lambda_c_l: &[f64], lambda_c: f64) -> Result<ShiftFit> {
    if sizes.len() != lambda_c_l.len() {
        return Err(Error::DimensionMismatch(format!("{} sizes and {} positions", sizes.len(), lambda_c_l.len())));
    }
    let shifts: Vec<f64> = lambda_c_l.iter().map(|l| (l - lambda_c).abs()).collect();
    if shifts.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidParameter("a pseudo-critical point coincides with λ_c".into()));
    }
    let xs: Vec<f64> = sizes.iter().map(|&l| l as f64).collect();
    let us: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = shifts.iter().map(|s| s.ln()).collect();
    let fit = fit_line(&us, &ys, &xs)?;
    Ok(ShiftFit {
        kappa: -fit.slope,
        prefactor: fit.intercept.exp(),
        fit,
    })
}

/// `ν = −slope_∞ / slope_L` from the two logarithmic fits.
pub fn nu_from_slopes(infinite_slope: f64, finite_slope: f64) -> f64 {
    -infinite_slope / finite_slope
}

/// Settings for evaluating `N_ρ(λ)` and its derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativityEval {
    pub gamma: f64,
    /// Quadrature tolerance of the correlators.
    pub corr_tol: f64,
    /// SDP tolerance.
    pub sdp_tol: f64,
    pub h: f64,
    pub stencil: Stencil,
}

impl Default for NegativityEval {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            corr_tol: 1e-13,
            sdp_tol: 1e-10,
            h: 1e-4,
            stencil: Stencil::Central,
        }
    }
}

impl NegativityEval {
    pub fn negativity(&self, size: ChainSize, arr: &Arrangement, lambda: f64) -> Result<f64> {
        let params = ModelParams::new(lambda, self.gamma, size)?;
        let rho = build_rdm(&params, arr, self.corr_tol)?;
        let settings = Settings {
            tol: self.sdp_tol,
            ..Settings::default()
        };
        Ok(genuine_negativity_with(&rho, &settings)?.value)
    }

    pub fn derivative(&self, size: ChainSize, arr: &Arrangement, lambda: f64) -> Result<f64> {
        derivative(|x| self.negativity(size, arr, x), lambda, self.h, self.stencil)
    }

    /// Derivative over a grid, evaluated in parallel, in grid order.
    pub fn derivative_curve(&self, size: ChainSize, arr: &Arrangement, grid: &[f64], tag: &str) -> Result<Curve> {
        let pairs = grid
            .par_iter()
            .map(|&l| value_and_derivative(|x| self.negativity(size, arr, x), l, self.h, self.stencil))
            .collect::<Result<Vec<_>>>()?;
        let (n, values): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut curve = Curve::new(grid.to_vec(), values, tag)?;
        curve.negativity = Some(n);
        Ok(curve)
    }

    /// Whether the SDP noise `sdp_tol / h` stays below `1e-4`.
    pub fn noise_floor_ok(&self) -> bool {
        self.sdp_tol / self.h <= 1e-4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub arrangement: Arrangement,
    pub eval: NegativityEval,
    /// Chain lengths whose minimum values enter the `ln L` fit.
    pub sizes: Vec<usize>,
    /// Chain lengths whose minimum positions enter the shift-exponent fit.
    pub position_sizes: Vec<usize>,
    /// Coarse grid `(start, end, step)` for the minimum search.
    pub coarse: (f64, f64, f64),
    pub fine_step: f64,
    /// Half-width of the refined grid, in coarse steps.
    pub fine_halfwidth: usize,
    /// Window of `|λ − λ_c|` for the thermodynamic fit and its point count.
    pub infinite_window: (f64, f64),
    pub infinite_points: usize,
    pub lambda_c: f64,
}

impl PipelineConfig {
    pub fn new(arrangement: Arrangement) -> Self {
        Self {
            arrangement,
            eval: NegativityEval::default(),
            sizes: vec![11, 15, 21, 27, 33, 41, 61, 81, 101],
            position_sizes: vec![11, 15, 21, 27, 33],
            coarse: (0.9, 1.1, 5e-3),
            fine_step: 5e-4,
            fine_halfwidth: 2,
            infinite_window: (5e-4, 2e-2),
            infinite_points: 10,
            lambda_c: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidParameter("the list of chain lengths is empty".into()));
        }
        for &l in self.sizes.iter().chain(&self.position_sizes) {
            if l % 2 == 0 || !self.arrangement.fits(ChainSize::Finite(l)) {
                return Err(Error::InvalidParameter(format!(
                    "chain length {l} must be odd and hold arrangement {}",
                    self.arrangement
                )));
            }
        }
        if self.position_sizes.iter().any(|l| !self.sizes.contains(l)) {
            return Err(Error::InvalidParameter("position sizes must be a subset of sizes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoCritical {
    pub size: usize,
    pub lambda_c: f64,
    pub min_value: f64,
    pub coarse: Curve,
    pub fine: Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub config: PipelineConfig,
    /// `∂_λ N` in the thermodynamic limit at `λ_c + δ` over the fit window.
    pub infinite: Curve,
    pub infinite_fit: ScalingFit,
    pub minima: Vec<PseudoCritical>,
    /// Absent with fewer than [`MIN_LOG_FIT_POINTS`] sizes.
    pub value_fit: Option<ScalingFit>,
    /// Absent with fewer than two position sizes.
    pub shift: Option<ShiftFit>,
    pub nu: Option<f64>,
    pub warnings: Vec<String>,
}

/// Coarse grid minimum, then a refined grid around it.
pub fn pseudo_critical(eval: &NegativityEval, size: usize, cfg: &PipelineConfig) -> Result<PseudoCritical> {
    let chain = ChainSize::Finite(size);
    let (a, b, step) = cfg.coarse;
    let coarse = eval.derivative_curve(chain, &cfg.arrangement, &linear_grid(a, b, step)?, &format!("L={size} coarse"))?;
    let k = (0..coarse.values.len())
        .min_by(|&p, &q| coarse.values[p].total_cmp(&coarse.values[q]))
        .unwrap();
    if k == 0 || k == coarse.values.len() - 1 {
        return Err(Error::GridBoundary(format!(
            "L={size}: minimum at the coarse grid edge λ = {}",
            coarse.lambdas[k]
        )));
    }
    let centre = coarse.lambdas[k];
    let half = step * cfg.fine_halfwidth as f64;
    let fine_grid = linear_grid(centre - half, centre + half, cfg.fine_step)?;
    let fine = eval.derivative_curve(chain, &cfg.arrangement, &fine_grid, &format!("L={size} fine"))?;
    let (lambda_c, min_value) = locate_pseudo_critical(&fine)?;
    Ok(PseudoCritical {
        size,
        lambda_c,
        min_value,
        coarse,
        fine,
    })
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    let eval = cfg.eval;
    let mut warnings = Vec::new();
    if !eval.noise_floor_ok() {
        warnings.push(format!(
            "derivative noise sdp_tol/h = {:.1e} exceeds 1e-4; increase h or tighten the SDP tolerance",
            eval.sdp_tol / eval.h
        ));
    }

    let deltas = log_grid(cfg.infinite_window.0, cfg.infinite_window.1, cfg.infinite_points)?;
    let lambdas: Vec<f64> = deltas.iter().map(|d| cfg.lambda_c + d).collect();
    let infinite = eval.derivative_curve(ChainSize::Thermodynamic, &cfg.arrangement, &lambdas, "L=inf")?;
    let infinite_fit = fit_log_divergence(&deltas, &infinite.values)?;

    let minima = cfg
        .sizes
        .iter()
        .map(|&l| pseudo_critical(&eval, l, cfg))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<f64> = minima.iter().map(|m| m.size as f64).collect();
    let values: Vec<f64> = minima.iter().map(|m| m.min_value).collect();
    let value_fit = if sizes.len() >= MIN_LOG_FIT_POINTS {
        Some(fit_log_divergence(&sizes, &values)?)
    } else {
        warnings.push(format!("minimum-value fit skipped: {} sizes, need {MIN_LOG_FIT_POINTS}", sizes.len()));
        None
    };

    let (pos_l, pos_c): (Vec<usize>, Vec<f64>) = minima
        .iter()
        .filter(|m| cfg.position_sizes.contains(&m.size))
        .map(|m| (m.size, m.lambda_c))
        .unzip();
    let shift = if pos_l.len() >= 2 {
        Some(fit_shift_exponent(&pos_l, &pos_c, cfg.lambda_c)?)
    } else {
        warnings.push("shift-exponent fit skipped: fewer than two position sizes".into());
        None
    };
    let nu = value_fit.as_ref().map(|f| nu_from_slopes(infinite_fit.slope, f.slope));
    Ok(PipelineResult {
        config: cfg.clone(),
        infinite,
        infinite_fit,
        minima,
        value_fit,
        shift,
        nu,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_on_sine() {
        let f = |x: f64| Ok(x.sin());
        for s in [Stencil::Central, Stencil::Forward, Stencil::Backward] {
            let d = derivative(f, 0.3, 1e-3, s).unwrap();
            assert!((d - 0.3f64.cos()).abs() < 1e-11, "{s:?}: {}", d - 0.3f64.cos());
        }
        assert!(derivative(f, 0.3, 0.0, Stencil::Central).is_err());
    }

    #[test]
    fn interpolation_exact_for_cubics() {
        let f = |x: f64| Ok(2.0 * x.powi(3) - x + 0.5);
        for s in [Stencil::Central, Stencil::Forward, Stencil::Backward] {
            let (v, d) = value_and_derivative(f, 0.4, 0.1, s).unwrap();
            assert!((v - f(0.4).unwrap()).abs() < 1e-13, "{s:?}");
            assert!((d - (6.0 * 0.16 - 1.0)).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn central_error_ratio() {
        let f = |x: f64| Ok(x.exp() * x.sin());
        let exact = 0.7f64.exp() * (0.7f64.sin() + 0.7f64.cos());
        let e1 = (derivative(f, 0.7, 0.1, Stencil::Central).unwrap() - exact).abs();
        let e2 = (derivative(f, 0.7, 0.05, Stencil::Central).unwrap() - exact).abs();
        assert!(e1 / e2 > 12.0, "{}", e1 / e2);
    }

    #[test]
    fn parabola_vertex() {
        let grid = linear_grid(0.9, 1.1, 5e-3).unwrap();
        let values = grid.iter().map(|l| 3.0 * (l - 1.0137f64).powi(2) - 0.4).collect();
        let c = Curve::new(grid, values, "t").unwrap();
        let (x, y) = locate_pseudo_critical(&c).unwrap();
        assert!((x - 1.0137).abs() < 1e-8 && (y + 0.4).abs() < 1e-8);
    }

    #[test]
    fn boundary_minimum_is_an_error() {
        let grid = linear_grid(0.0, 1.0, 0.1).unwrap();
        let values = grid.iter().map(|l| *l).collect();
        let c = Curve::new(grid, values, "t").unwrap();
        assert!(matches!(locate_pseudo_critical(&c), Err(Error::GridBoundary(_))));
    }

    #[test]
    fn log_and_shift_fits() {
        let xs = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 0.17 * x.ln() + 0.26).collect();
        let fit = fit_log_divergence(&xs, &ys).unwrap();
        assert!((fit.slope - 0.17).abs() < 1e-12 && (fit.intercept - 0.26).abs() < 1e-12);
        assert!(fit_log_divergence(&xs[..3], &ys[..3]).is_err());
        let ls = [11usize, 15, 21, 27, 33];
        let pos: Vec<f64> = ls.iter().map(|&l| 1.0 + 3.0 * (l as f64).powf(-2.19)).collect();
        let s = fit_shift_exponent(&ls, &pos, 1.0).unwrap();
        assert!((s.kappa - 2.19).abs() < 1e-10 && (s.prefactor - 3.0).abs() < 1e-9);
        assert!(fit_shift_exponent(&[11, 15], &[1.0, 1.1], 1.0).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(linear_grid(0.9, 1.1, 5e-3).unwrap().len(), 41);
        let g = log_grid(5e-4, 2e-2, 10).unwrap();
        assert!((g[9] - 2e-2).abs() < 1e-15 && g.len() == 10);
    }

    #[test]
    fn empty_size_list_rejected() {
        let mut cfg = PipelineConfig::new(Arrangement::new(vec![1, 1]).unwrap());
        cfg.sizes.clear();
        assert!(run_pipeline(&cfg).is_err());
    }
}
