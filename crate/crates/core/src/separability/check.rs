//! Independent verification of a separability certificate.
//!
//! Self-contained on purpose: only nalgebra and the certificate data are used.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SeparabilityCertificate;
use crate::rdm::DensityMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub valid: bool,
    /// Largest entrywise modulus of reconstruction minus input.
    pub reconstruction_error: f64,
    /// Largest second singular value over all components.
    pub max_schmidt_residual: f64,
    pub tail_purity: f64,
    pub weight_sum_error: f64,
    pub min_weight: f64,
    pub messages: Vec<String>,
}

/// Second singular value of `psi` reshaped across `side | rest`.
fn schmidt_residual(psi: &[Complex64], side: &[usize], n: usize) -> f64 {
    let bit = |index: usize, party: usize| index >> (n - 1 - party) & 1;
    let rest: Vec<usize> = (0..n).filter(|p| !side.contains(p)).collect();
    let mut m = DMatrix::<Complex64>::zeros(1 << side.len(), 1 << rest.len());
    for (idx, &amp) in psi.iter().enumerate() {
        let r = side.iter().fold(0, |acc, &p| acc << 1 | bit(idx, p));
        let c = rest.iter().fold(0, |acc, &p| acc << 1 | bit(idx, p));
        m[(r, c)] = amp;
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.get(1).copied().unwrap_or(0.0)
}

pub fn check_certificate(cert: &SeparabilityCertificate, rho: &DensityMatrix, tol: f64) -> CertificateCheck {
    let n = rho.parties();
    let d = rho.dim();
    let mut messages = Vec::new();

    if cert.filters.len() != n {
        messages.push(format!("{} filters for {n} parties", cert.filters.len()));
    }
    let mut filter = DMatrix::<f64>::from_element(1, 1, 1.0);
    for f in &cert.filters {
        if f.shape() != (2, 2) {
            messages.push("filter is not 2x2".into());
            continue;
        }
        filter = filter.kronecker(f);
    }
    let inverse = if filter.nrows() == d { filter.clone().try_inverse() } else { None };

    let mut inner = cert.tail.matrix().map(|x| Complex64::new(x * cert.tail_weight, 0.0));
    let mut max_schmidt = 0.0f64;
    let mut min_weight = cert.tail_weight;
    let mut weight_sum = cert.tail_weight;
    for (k, c) in cert.components.iter().enumerate() {
        if c.state.len() != d || c.bipartition.parties() != n {
            messages.push(format!("component {k} has the wrong shape"));
            continue;
        }
        let norm2: f64 = c.state.iter().map(|x| x.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > tol {
            messages.push(format!("component {k} has squared norm {norm2}"));
        }
        max_schmidt = max_schmidt.max(schmidt_residual(&c.state, c.bipartition.subset(), n));
        min_weight = min_weight.min(c.weight);
        weight_sum += c.weight;
        for r in 0..d {
            for col in 0..d {
                inner[(r, col)] += c.state[r] * c.state[col].conj() * c.weight;
            }
        }
    }
    if max_schmidt > 1e-10 {
        messages.push(format!("a component has Schmidt residual {max_schmidt:.3e}"));
    }
    if min_weight < 0.0 {
        messages.push(format!("negative weight {min_weight:.3e}"));
    }
    let weight_sum_error = (weight_sum - 1.0).abs();
    if weight_sum_error > 1e-10 {
        messages.push(format!("weights sum to {weight_sum}"));
    }

    let tail = cert.tail.matrix();
    let tail_purity = tail.component_mul(tail).sum();
    if tail_purity >= 1.0 / (d as f64 - 1.0) {
        messages.push(format!("tail purity {tail_purity} is outside the separable ball"));
    }
    if (tail.trace() - 1.0).abs() > tol {
        messages.push(format!("tail trace {}", tail.trace()));
    }

    let reconstruction_error = match inverse {
        Some(inv) => {
            let inv = inv.map(|x| Complex64::new(x, 0.0));
            let back = &inv * &inner * inv.transpose();
            let tr = back.trace();
            let mut err = 0.0f64;
            for r in 0..d {
                for c in 0..d {
                    err = err.max((back[(r, c)] / tr - rho.matrix()[(r, c)]).norm());
                }
            }
            err
        }
        None => {
            messages.push("filters are not invertible".into());
            f64::INFINITY
        }
    };
    if !(reconstruction_error <= tol) {
        messages.push(format!("reconstruction error {reconstruction_error:.3e}"));
    }

    CertificateCheck {
        valid: messages.is_empty(),
        reconstruction_error,
        max_schmidt_residual: max_schmidt,
        tail_purity,
        weight_sum_error,
        min_weight,
        messages,
    }
}
