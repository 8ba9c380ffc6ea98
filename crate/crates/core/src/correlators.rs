//! Two-point contraction `G_r = ⟨A_l B_{l+r}⟩` of the Majorana operators
//! `A_l = c_l + c_l†`, `B_l = c_l − c_l†` in the ground state.
//!
//! `⟨A_l A_k⟩ = δ_lk` and `⟨B_l B_k⟩ = −δ_lk` are constants, so `G` is the
//! only input the Wick determinants need.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dispersion, ModelParams};
use crate::quadrature;

/// Default absolute quadrature tolerance for thermodynamic-limit correlators.
pub const DEFAULT_TOL: f64 = 1e-10;

fn integrand(params: &ModelParams, r: i64, phi: f64) -> f64 {
    let mode = dispersion(params, phi);
    if mode.lambda_p == 0.0 {
        return 0.0;
    }
    let rf = r as f64;
    let (s, c) = phi.sin_cos();
    ((rf * phi).cos() * (1.0 + params.lambda() * c) - params.gamma() * params.lambda() * s * (rf * phi).sin())
        / mode.lambda_p
}

/// Exact momentum sum for a finite odd ring.
pub fn correlator_finite(params: &ModelParams, r: i64) -> Result<f64> {
    let momenta = params.momenta()?;
    let l = momenta.len() as f64;
    Ok(momenta.iter().map(|&phi| integrand(params, r, phi)).sum::<f64>() / l)
}

/// `(1/π) ∫_0^π [cos(rφ)(1+λ cos φ) − γλ sin φ sin(rφ)] / Λ_φ dφ` to
/// absolute tolerance `tol`.
pub fn correlator_thermo(params: &ModelParams, r: i64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let breaks = quadrature::breakpoints(params);
    let v = quadrature::integrate(|phi| integrand(params, r, phi), 0.0, PI, tol * PI, &breaks)?;
    Ok(v / PI)
}

/// `G_r` for whichever chain size `params` carries.
pub fn correlator(params: &ModelParams, r: i64, tol: f64) -> Result<f64> {
    if params.size().is_thermodynamic() {
        correlator_thermo(params, r, tol)
    } else {
        correlator_finite(params, r)
    }
}

/// Immutable table of `G_r` over a contiguous offset range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorTable {
    params: ModelParams,
    rmin: i64,
    rmax: i64,
    values: BTreeMap<i64, f64>,
}

impl CorrelatorTable {
    pub fn build(params: &ModelParams, rmin: i64, rmax: i64, tol: f64) -> Result<Self> {
        if rmin > rmax {
            return Err(Error::InvalidParameter(format!("empty offset range {rmin}..={rmax}")));
        }
        let values = (rmin..=rmax)
            .map(|r| correlator(params, r, tol).map(|g| (r, g)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self {
            params: *params,
            rmin,
            rmax,
            values,
        })
    }

    /// Table from explicit values; used by tests and synthetic inputs.
    pub fn from_values(params: &ModelParams, rmin: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty correlator table".into()));
        }
        let rmax = rmin + values.len() as i64 - 1;
        Ok(Self {
            params: *params,
            rmin,
            rmax,
            values: (rmin..=rmax).zip(values).collect(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn range(&self) -> (i64, i64) {
        (self.rmin, self.rmax)
    }

    pub fn get(&self, r: i64) -> Result<f64> {
        self.values.get(&r).copied().ok_or(Error::MissingOffset(r))
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values.iter().map(|(&r, &g)| (r, g))
    }
}

/// Offsets a determinant over sites spanning `span` can request.
pub fn offsets_for_span(span: i64) -> (i64, i64) {
    (-(span + 1), span + 1)
}

/// Build a table covering every offset needed for sites with total span `span`.
pub fn table_for_span(params: &ModelParams, span: i64, tol: f64) -> Result<CorrelatorTable> {
    let (lo, hi) = offsets_for_span(span);
    CorrelatorTable::build(params, lo, hi, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChainSize;

    fn critical(r: i64) -> f64 {
        2.0 * (-1f64).powi(r as i32) / (PI * (2 * r + 1) as f64)
    }

    #[test]
    fn field_only_is_delta() {
        let p = ModelParams::ising(0.0, ChainSize::Finite(11)).unwrap();
        assert_eq!(correlator_finite(&p, 0).unwrap(), 1.0);
        for r in [-5, -3, 1, 3, 7] {
            assert!(correlator_finite(&p, r).unwrap().abs() < 1e-14);
        }
        let p = ModelParams::ising(0.0, ChainSize::Thermodynamic).unwrap();
        assert!((correlator_thermo(&p, 0, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        assert!(correlator_thermo(&p, 4, 1e-12).unwrap().abs() < 1e-12);
    }

    #[test]
    fn critical_closed_form() {
        let p = ModelParams::ising(1.0, ChainSize::Thermodynamic).unwrap();
        for r in -4..=4 {
            let g = correlator_thermo(&p, r, 1e-12).unwrap();
            assert!((g - critical(r)).abs() < 1e-11, "r={r}: {g} vs {}", critical(r));
        }
        assert!((correlator_thermo(&p, 2, 1e-12).unwrap() - 2.0 / (5.0 * PI)).abs() < 1e-11);
        let p = ModelParams::ising(1.0, ChainSize::Finite(1001)).unwrap();
        assert!((correlator_finite(&p, 0).unwrap() - 2.0 / PI).abs() < 2e-3);
    }

    #[test]
    fn strong_coupling_limit() {
        let p = ModelParams::ising(1e4, ChainSize::Thermodynamic).unwrap();
        assert!((correlator_thermo(&p, -1, 1e-12).unwrap() - 1.0).abs() < 1e-3);
        assert!(correlator_thermo(&p, 0, 1e-12).unwrap().abs() < 1e-3);
    }

    #[test]
    fn finite_chains_converge() {
        // close to criticality so the finite-size error is visible
        for &lambda in &[0.97, 1.03] {
            let thermo = correlator_thermo(&ModelParams::ising(lambda, ChainSize::Thermodynamic).unwrap(), 2, 1e-13).unwrap();
            let errs: Vec<f64> = [21usize, 61, 201]
                .iter()
                .map(|&l| (correlator_finite(&ModelParams::ising(lambda, ChainSize::Finite(l)).unwrap(), 2).unwrap() - thermo).abs())
                .collect();
            assert!(errs[1] <= errs[0] && errs[2] <= errs[1], "{errs:?}");
        }
    }

    #[test]
    fn table_matches_single_offsets() {
        let p = ModelParams::ising(0.5, ChainSize::Finite(2001)).unwrap();
        let t = CorrelatorTable::build(&p, -5, 5, 1e-12).unwrap();
        let pt = ModelParams::ising(0.5, ChainSize::Thermodynamic).unwrap();
        let tt = CorrelatorTable::build(&pt, -5, 5, 1e-12).unwrap();
        for r in -5..=5 {
            assert_eq!(t.get(r).unwrap(), correlator_finite(&p, r).unwrap());
            assert!((t.get(r).unwrap() - tt.get(r).unwrap()).abs() < 1e-3);
        }
        assert_eq!(t.get(6), Err(Error::MissingOffset(6)));
        assert!(CorrelatorTable::build(&p, 2, 1, 1e-12).is_err());
    }

    #[test]
    fn smooth_in_lambda_off_criticality() {
        // central differences at two step sizes agree to the stencil order
        let g = |lambda: f64| correlator_thermo(&ModelParams::ising(lambda, ChainSize::Thermodynamic).unwrap(), 1, 1e-14).unwrap();
        let d = |h: f64| (g(0.6 + h) - g(0.6 - h)) / (2.0 * h);
        let (d1, d2) = (d(1e-2), d(5e-3));
        assert!((d1 - d2).abs() < 1e-4, "{d1} {d2}");
    }
}
