//! Four-qubit concurrence `C₄(ψ) = |⟨ψ*|σ_y^{⊗4}|ψ⟩|` and its convex-roof
//! closed form for mixed states.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{sym_apply, sym_eigen};
use crate::rdm::{validate_state, DensityMatrix};

const DIM: usize = 16;

/// `(σ_y^{⊗4})_{r, r⊕15}`; all other entries vanish.
fn flip_sign(r: usize) -> f64 {
    // σ_y = iJ with J = [[0, −1], [1, 0]], and i⁴ = 1
    if (DIM - 1 - r).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `σ_y^{⊗4}` as a real matrix.
pub fn spin_flip() -> DMatrix<f64> {
    let mut y = DMatrix::zeros(DIM, DIM);
    for r in 0..DIM {
        y[(r, r ^ (DIM - 1))] = flip_sign(r);
    }
    y
}

fn check_pure(norm2: f64, len: usize) -> Result<()> {
    if len != DIM {
        return Err(Error::DimensionMismatch(format!("a four-qubit state has 16 amplitudes, got {len}")));
    }
    if (norm2 - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("state is not normalized (squared norm {norm2})")));
    }
    Ok(())
}

/// `C₄` of a normalized complex state.
pub fn c4_pure_complex(psi: &[Complex64]) -> Result<f64> {
    check_pure(psi.iter().map(|x| x.norm_sqr()).sum(), psi.len())?;
    let bracket: Complex64 = (0..DIM).map(|r| psi[r] * psi[r ^ (DIM - 1)] * flip_sign(r)).sum();
    Ok(bracket.norm())
}

/// `C₄` of a normalized real state.
pub fn c4_pure(psi: &[f64]) -> Result<f64> {
    check_pure(psi.iter().map(|x| x * x).sum(), psi.len())?;
    let bracket: f64 = (0..DIM).map(|r| psi[r] * psi[r ^ (DIM - 1)] * flip_sign(r)).sum();
    Ok(bracket.abs())
}

/// `max(0, μ₁ − Σ_{i≥2} μ_i)` with `μ_i²` the eigenvalues of `ρ ρ̃`, `ρ̃ = Y ρ* Y`.
pub fn c4_mixed(rho: &DensityMatrix) -> Result<f64> {
    if rho.parties() != 4 {
        return Err(Error::DimensionMismatch(format!("C4 needs four qubits, got {}", rho.parties())));
    }
    let report = validate_state(rho, 1e-8);
    if !report.passed {
        return Err(Error::Unphysical {
            trace_deviation: report.trace_deviation,
            asymmetry: report.asymmetry,
            min_eigenvalue: report.min_eigenvalue,
        });
    }
    let y = spin_flip();
    let m = rho.matrix();
    let tilde = &y * m * &y;
    let root = sym_apply(m, |x| x.max(0.0).sqrt());
    let (vals, _) = sym_eigen(&(&root * tilde * &root));
    let mut mu: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    Ok((mu[0] - mu[1..].iter().sum::<f64>()).max(0.0))
}
