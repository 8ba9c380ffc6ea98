//! Parameters of the transverse-field XY chain and the single-mode data of
//! its free-fermion diagonalization.
//!
//! The spin Hamiltonian on a ring of `L` sites is
//!
//! ```text
//! H = -Σ_i [ λ/4 ((1+γ) X_i X_{i+1} + (1-γ) Y_i Y_{i+1}) + Z_i / 2 ]
//! ```
//!
//! After the Jordan–Wigner and Bogoliubov transformations it becomes
//! `Σ_k Λ_k η_k†η_k − ½ Σ_k Λ_k` with `Λ_k = sqrt(α_k² + β_k²)`,
//! `α_k = λ cos φ_k + 1` and `β_k = λ γ sin φ_k`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chain length: a finite odd ring or the thermodynamic limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainSize {
    Finite(usize),
    Thermodynamic,
}

impl ChainSize {
    pub fn finite(self) -> Option<usize> {
        match self {
            ChainSize::Finite(l) => Some(l),
            ChainSize::Thermodynamic => None,
        }
    }

    pub fn is_thermodynamic(self) -> bool {
        matches!(self, ChainSize::Thermodynamic)
    }
}

impl fmt::Display for ChainSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainSize::Finite(l) => write!(f, "{l}"),
            ChainSize::Thermodynamic => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for ChainSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") {
            return Ok(ChainSize::Thermodynamic);
        }
        let l: usize = t
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("chain length `{s}` is neither an integer nor `inf`")))?;
        validate_length(l)?;
        Ok(ChainSize::Finite(l))
    }
}

fn validate_length(l: usize) -> Result<()> {
    if l < 3 || l % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "finite chain length must be odd and at least 3, got {l}"
        )));
    }
    Ok(())
}

/// Coupling `λ`, anisotropy `γ` and chain size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    lambda: f64,
    gamma: f64,
    size: ChainSize,
}

impl ModelParams {
    pub fn new(lambda: f64, gamma: f64, size: ChainSize) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        if let ChainSize::Finite(l) = size {
            validate_length(l)?;
        }
        Ok(Self { lambda, gamma, size })
    }

    /// Transverse Ising chain (`γ = 1`).
    pub fn ising(lambda: f64, size: ChainSize) -> Result<Self> {
        Self::new(lambda, 1.0, size)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn size(&self) -> ChainSize {
        self.size
    }

    /// Same chain with a different coupling.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.gamma, self.size)
    }

    /// Momentum grid `φ_p = 2πp/L`, `p = -(L-1)/2 ..= (L-1)/2`.
    pub fn momenta(&self) -> Result<Vec<f64>> {
        let l = self.size.finite().ok_or(Error::ThermodynamicSize)?;
        let half = (l as i64 - 1) / 2;
        Ok((-half..=half).map(|p| 2.0 * PI * p as f64 / l as f64).collect())
    }
}

/// Single-mode coefficients at momentum `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeData {
    pub phi: f64,
    pub alpha_p: f64,
    pub beta_p: f64,
    pub lambda_p: f64,
    pub tilde_alpha: f64,
    pub tilde_beta: f64,
}

/// Dispersion and Bogoliubov coefficients of one momentum mode.
///
/// When `β = 0` and `Λ = α > 0` the mode is already diagonal and the
/// Bogoliubov coefficients are the indeterminate `0/0`; both are set to zero.
pub fn dispersion(params: &ModelParams, phi: f64) -> ModeData {
    let alpha_p = params.lambda * phi.cos() + 1.0;
    let beta_p = params.lambda * params.gamma * phi.sin();
    let lambda_p = alpha_p.hypot(beta_p);
    // Λ − α without cancellation when α > 0
    let gap = if alpha_p > 0.0 {
        beta_p * beta_p / (lambda_p + alpha_p)
    } else {
        lambda_p - alpha_p
    };
    let denom = 2.0 * lambda_p * gap;
    let (tilde_alpha, tilde_beta) = if denom > 0.0 && beta_p != 0.0 || alpha_p < 0.0 {
        let s = denom.sqrt();
        (gap / s, beta_p / s)
    } else {
        (0.0, 0.0)
    };
    ModeData {
        phi,
        alpha_p,
        beta_p,
        lambda_p,
        tilde_alpha,
        tilde_beta,
    }
}

/// Exact ground energy `−½ Σ_p Λ(φ_p)` of a finite odd chain.
pub fn ground_energy(params: &ModelParams) -> Result<f64> {
    let momenta = params.momenta()?;
    Ok(-0.5 * momenta.iter().map(|&phi| dispersion(params, phi).lambda_p).sum::<f64>())
}

/// Ground energy per site in the thermodynamic limit, `−(1/4π) ∫_{−π}^{π} Λ dφ`.
pub fn ground_energy_density(params: &ModelParams, tol: f64) -> Result<f64> {
    let f = |phi: f64| dispersion(params, phi).lambda_p;
    // Λ is even in φ, so integrate over [0, π] and double.
    let integral = crate::quadrature::integrate(f, 0.0, PI, tol * 0.5, &crate::quadrature::breakpoints(params))?;
    Ok(-integral / (2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispersion_examples() {
        let p = ModelParams::new(0.0, 0.3, ChainSize::Thermodynamic).unwrap();
        assert!((dispersion(&p, PI / 3.0).lambda_p - 1.0).abs() < 1e-15);

        let p = ModelParams::ising(1.0, ChainSize::Thermodynamic).unwrap();
        assert!(dispersion(&p, PI).lambda_p.abs() < 1e-15);

        let p = ModelParams::ising(2.0, ChainSize::Thermodynamic).unwrap();
        let m = dispersion(&p, 0.0);
        assert_eq!((m.alpha_p, m.beta_p, m.lambda_p), (3.0, 0.0, 3.0));
        assert_eq!((m.tilde_alpha, m.tilde_beta), (0.0, 0.0));
    }

    #[test]
    fn bogoliubov_coefficients_normalized() {
        let p = ModelParams::new(0.7, 0.6, ChainSize::Thermodynamic).unwrap();
        for k in 1..40 {
            let phi = -PI + k as f64 * 0.157;
            let m = dispersion(&p, phi);
            if m.beta_p.abs() > 1e-12 {
                assert!((m.tilde_alpha.powi(2) + m.tilde_beta.powi(2) - 1.0).abs() < 1e-12);
            }
            assert!((m.lambda_p - dispersion(&p, -phi).lambda_p).abs() < 1e-14);
        }
    }

    #[test]
    fn field_only_energy() {
        for l in [3usize, 5, 11, 21] {
            let p = ModelParams::ising(0.0, ChainSize::Finite(l)).unwrap();
            assert_eq!(ground_energy(&p).unwrap(), -(l as f64) / 2.0);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModelParams::ising(-0.1, ChainSize::Thermodynamic).is_err());
        assert!(ModelParams::new(1.0, 1.5, ChainSize::Thermodynamic).is_err());
        assert!(ModelParams::ising(1.0, ChainSize::Finite(10)).is_err());
        assert!(ModelParams::ising(1.0, ChainSize::Finite(1)).is_err());
        let p = ModelParams::ising(1.0, ChainSize::Thermodynamic).unwrap();
        assert_eq!(ground_energy(&p), Err(Error::ThermodynamicSize));
    }

    #[test]
    fn gap_closes_only_at_criticality() {
        let min_gap = |lambda: f64| {
            let p = ModelParams::ising(lambda, ChainSize::Thermodynamic).unwrap();
            (0..=2000)
                .map(|k| dispersion(&p, -PI + 2.0 * PI * k as f64 / 2000.0).lambda_p)
                .fold(f64::INFINITY, f64::min)
        };
        assert!(min_gap(0.5) > 0.49);
        assert!(min_gap(1.5) > 0.49);
        assert!(min_gap(0.99) < 0.011);
        assert!(min_gap(1.0) < 1e-12);
    }

    #[test]
    fn critical_energy_density() {
        let p = ModelParams::ising(1.0, ChainSize::Thermodynamic).unwrap();
        let e = ground_energy_density(&p, 1e-12).unwrap();
        assert!((e + 2.0 / PI).abs() < 1e-10, "{e}");
        // finite chains approach the same density
        let per_site = |l: usize| ground_energy(&ModelParams::ising(1.0, ChainSize::Finite(l)).unwrap()).unwrap() / l as f64;
        assert!((per_site(1001) + 2.0 / PI).abs() < (per_site(101) + 2.0 / PI).abs());
        assert!((per_site(1001) + 2.0 / PI).abs() < 1e-5);
    }

    #[test]
    fn parse_sizes() {
        assert_eq!("inf".parse::<ChainSize>().unwrap(), ChainSize::Thermodynamic);
        assert_eq!("11".parse::<ChainSize>().unwrap(), ChainSize::Finite(11));
        assert!("12".parse::<ChainSize>().is_err());
        assert!("x".parse::<ChainSize>().is_err());
    }
}
